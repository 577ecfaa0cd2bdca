use std::collections::HashMap;

use nalgebra::DMatrix;
use num_traits::Float;

use super::{Expr, Node, ShiftedVar};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Numeric values for a set of variables.
pub type Assignment<T = f64> = HashMap<ShiftedVar, T>;

impl Expr {
    /// Evaluates the expression at `point`.
    ///
    /// Fails with [`Error::UnboundVariable`] if any variable is missing and
    /// with [`Error::DivisionByZero`] if a denominator evaluates to exactly 0.
    pub fn eval<T: Scalar>(&self, point: &Assignment<T>) -> Result<T> {
        let missing: Vec<ShiftedVar> = self.vars().into_iter().filter(|v| !point.contains_key(v)).collect();
        if !missing.is_empty() {
            return Err(Error::UnboundVariable(missing));
        }
        let mut memo = HashMap::new();
        eval_rec(self, point, &mut memo)
    }
}

fn eval_rec<T: Scalar>(e: &Expr, p: &Assignment<T>, memo: &mut HashMap<usize, T>) -> Result<T> {
    if let Some(&v) = memo.get(&e.ptr()) {
        return Ok(v);
    }
    let val = match e.node() {
        Node::Const(c) => T::lit(*c),
        Node::Var(v) => p[v],
        Node::Add(ts) => {
            let mut acc = T::zero();
            for t in ts {
                acc += eval_rec(t, p, memo)?;
            }
            acc
        }
        Node::Mul(fs) => {
            let mut acc = T::one();
            for f in fs {
                acc *= eval_rec(f, p, memo)?;
            }
            acc
        }
        Node::Div(a, b) => {
            let d = eval_rec(b, p, memo)?;
            if d == T::zero() {
                let mut text = e.to_prefix();
                text.truncate(200);
                return Err(Error::DivisionByZero(text));
            }
            eval_rec(a, p, memo)? / d
        }
        Node::Pow(a, k) => Float::powi(eval_rec(a, p, memo)?, *k),
        Node::Neg(a) => -eval_rec(a, p, memo)?,
        Node::Sin(a) => Float::sin(eval_rec(a, p, memo)?),
        Node::Cos(a) => Float::cos(eval_rec(a, p, memo)?),
        Node::Tan(a) => Float::tan(eval_rec(a, p, memo)?),
        Node::Atan(a) => Float::atan(eval_rec(a, p, memo)?),
        Node::Sinc(k, a) => sinc_value(*k, eval_rec(a, p, memo)?),
    };
    memo.insert(e.ptr(), val);
    Ok(val)
}

/// `order`-th derivative of `sin(t)/t`.
///
/// Uses the Taylor series near the origin, where the closed form cancels
/// catastrophically, and Leibniz' rule on `sin(t) · t⁻¹` elsewhere.
pub(crate) fn sinc_value<T: Scalar>(order: u32, t: T) -> T {
    let k = order as usize;
    let near = if k == 0 { T::lit(1e-4) } else { T::one() };
    if Float::abs(t) < near {
        // sum over n with 2n >= k of (-1)^n t^(2n-k) (2n)!/((2n-k)! (2n+1)!)
        let mut acc = T::zero();
        let n0 = k.div_ceil(2);
        for n in n0..n0 + 14 {
            let two_n = 2 * n;
            let mut coef = 1.0f64;
            for i in (two_n - k + 1)..=two_n {
                coef *= i as f64;
            }
            for i in 1..=(two_n + 1) {
                coef /= i as f64;
            }
            if n % 2 == 1 {
                coef = -coef;
            }
            acc += T::lit(coef) * Float::powi(t, (two_n - k) as i32);
        }
        return acc;
    }
    if k == 0 {
        return Float::sin(t) / t;
    }
    // d^k [sin t · t^-1] = sum_i C(k,i) sin^(i)(t) · (-1)^(k-i) (k-i)! t^-(k-i+1)
    let (s, c) = (Float::sin(t), Float::cos(t));
    let mut acc = T::zero();
    let mut binom = 1.0f64;
    for i in 0..=k {
        let dsin = match i % 4 {
            0 => s,
            1 => c,
            2 => -s,
            _ => -c,
        };
        let j = k - i;
        let mut fact = 1.0f64;
        for q in 1..=j {
            fact *= q as f64;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += T::lit(binom * sign * fact) * dsin / Float::powi(t, (j + 1) as i32);
        binom = binom * (k - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Jacobian `∂exprs/∂vars` evaluated at `point`.
pub fn jacobian<T: Scalar>(exprs: &[Expr], vars: &[ShiftedVar], point: &Assignment<T>) -> Result<DMatrix<T>> {
    let mut m = DMatrix::zeros(exprs.len(), vars.len());
    for (i, e) in exprs.iter().enumerate() {
        let present = e.vars();
        for (j, v) in vars.iter().enumerate() {
            if present.contains(v) {
                m[(i, j)] = e.diff(v).eval(point)?;
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed(order: u32, t: f64) -> f64 {
        // reference values via finite differences of sin(t)/t at moderate t
        let f = |s: f64| s.sin() / s;
        let h = 1e-3;
        match order {
            0 => f(t),
            1 => (f(t + h) - f(t - h)) / (2.0 * h),
            2 => (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h),
            _ => unreachable!(),
        }
    }

    #[test]
    fn sinc_matches_finite_differences() {
        for &t in &[0.3, 0.9, 1.5, -2.7, 4.0] {
            assert!((sinc_value::<f64>(0, t) - closed(0, t)).abs() < 1e-14);
            assert!((sinc_value::<f64>(1, t) - closed(1, t)).abs() < 1e-6);
            assert!((sinc_value::<f64>(2, t) - closed(2, t)).abs() < 1e-5);
        }
    }

    #[test]
    fn sinc_is_continuous_across_series_switch() {
        for k in 0..4 {
            let inside = sinc_value::<f64>(k, 0.999_999_9);
            let outside = sinc_value::<f64>(k, 1.000_000_1);
            assert!((inside - outside).abs() < 1e-6, "order {k}");
        }
        assert_eq!(sinc_value::<f64>(0, 0.0), 1.0);
        assert!((sinc_value::<f64>(2, 0.0) + 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn unbound_and_division() {
        let e = Expr::var(ShiftedVar::x(1)) / Expr::var(ShiftedVar::u(1, 0));
        let mut p = Assignment::new();
        p.insert(ShiftedVar::x(1), 1.0);
        assert!(matches!(e.eval(&p), Err(Error::UnboundVariable(v)) if v == vec![ShiftedVar::u(1, 0)]));
        p.insert(ShiftedVar::u(1, 0), 0.0);
        assert!(matches!(e.eval(&p), Err(Error::DivisionByZero(_))));
    }

    #[test]
    fn single_precision() {
        let e = Expr::sin(&Expr::var(ShiftedVar::x(1))) * 2.0;
        let mut p = Assignment::<f32>::new();
        p.insert(ShiftedVar::x(1), 0.5);
        assert!((e.eval(&p).unwrap() - 2.0 * 0.5f32.sin()).abs() < 1e-6);
    }
}
