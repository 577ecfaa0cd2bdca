use std::collections::HashMap;

use super::{Expr, Node, ShiftedVar};

impl Expr {
    /// Exact partial derivative with respect to `w`. All other variables are
    /// treated as constants. Shared subexpressions are differentiated once.
    pub fn diff(&self, w: &ShiftedVar) -> Expr {
        let mut memo = HashMap::new();
        let mut contains = HashMap::new();
        diff_rec(self, w, &mut memo, &mut contains)
    }
}

fn depends(e: &Expr, w: &ShiftedVar, memo: &mut HashMap<usize, bool>) -> bool {
    if let Some(&d) = memo.get(&e.ptr()) {
        return d;
    }
    let d = match e.node() {
        Node::Const(_) => false,
        Node::Var(v) => v == w,
        _ => {
            let mut any = false;
            e.for_each_child(|c| any = any || depends(c, w, memo));
            any
        }
    };
    memo.insert(e.ptr(), d);
    d
}

fn diff_rec(
    e: &Expr,
    w: &ShiftedVar,
    memo: &mut HashMap<usize, Expr>,
    contains: &mut HashMap<usize, bool>,
) -> Expr {
    if !depends(e, w, contains) {
        return Expr::zero();
    }
    if let Some(d) = memo.get(&e.ptr()) {
        return d.clone();
    }
    let mut d = |x: &Expr| diff_rec(x, w, memo, contains);
    let out = match e.node() {
        Node::Const(_) => Expr::zero(),
        Node::Var(_) => Expr::one(),
        Node::Add(ts) => Expr::add_all(ts.iter().map(&mut d).collect()),
        Node::Mul(fs) => {
            let mut terms = Vec::with_capacity(fs.len());
            for i in 0..fs.len() {
                let di = d(&fs[i]);
                if di.is_zero() {
                    continue;
                }
                let mut factors: Vec<Expr> = fs.clone();
                factors[i] = di;
                terms.push(Expr::mul_all(factors));
            }
            Expr::add_all(terms)
        }
        Node::Div(a, b) => {
            let da = d(a);
            let db = d(b);
            // a'/b - a b'/b^2
            let first = Expr::div(&da, b);
            let second = Expr::div(&Expr::mul_all(vec![a.clone(), db]), &Expr::pow(b, 2));
            &first - &second
        }
        Node::Pow(a, k) => {
            let da = d(a);
            Expr::mul_all(vec![Expr::constant(*k as f64), Expr::pow(a, k - 1), da])
        }
        Node::Neg(a) => Expr::neg(&d(a)),
        Node::Sin(a) => Expr::mul_all(vec![Expr::cos(a), d(a)]),
        Node::Cos(a) => Expr::neg(&Expr::mul_all(vec![Expr::sin(a), d(a)])),
        Node::Tan(a) => {
            let sec2 = Expr::one() + Expr::pow(e, 2);
            Expr::mul_all(vec![sec2, d(a)])
        }
        Node::Atan(a) => {
            let denom = Expr::one() + Expr::pow(a, 2);
            Expr::div(&d(a), &denom)
        }
        Node::Sinc(k, a) => Expr::mul_all(vec![Expr::sinc_deriv(k + 1, a), d(a)]),
    };
    memo.insert(e.ptr(), out.clone());
    out
}
