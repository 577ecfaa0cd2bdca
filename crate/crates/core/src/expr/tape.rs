//! Straight-line evaluation of several expressions over a fixed variable list.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_traits::Float;

use super::{eval::sinc_value, Expr, Node, ShiftedVar};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
enum Op {
    Const(f64),
    Input(usize),
    Add(Vec<usize>),
    Mul(Vec<usize>),
    Div(usize, usize),
    Pow(usize, i32),
    Neg(usize),
    Sin(usize),
    Cos(usize),
    Tan(usize),
    Atan(usize),
    Sinc(u32, usize),
}

/// Compiled form of a list of expressions. Common subexpressions (by
/// structure) share one slot.
#[derive(Clone, Debug)]
pub struct Tape {
    vars: Vec<ShiftedVar>,
    ops: Vec<Op>,
    outputs: Vec<usize>,
}

impl Tape {
    pub fn compile(exprs: &[Expr], vars: &[ShiftedVar]) -> Result<Tape> {
        let var_index: HashMap<ShiftedVar, usize> = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let mut missing: Vec<ShiftedVar> = exprs
            .iter()
            .flat_map(|e| e.vars())
            .filter(|v| !var_index.contains_key(v))
            .collect();
        if !missing.is_empty() {
            missing.sort();
            missing.dedup();
            return Err(Error::UnboundVariable(missing));
        }
        let mut b = Builder { ops: Vec::new(), slots: HashMap::new(), var_index };
        let outputs = exprs.iter().map(|e| b.slot(e)).collect();
        Ok(Tape { vars: vars.to_vec(), ops: b.ops, outputs })
    }

    pub fn vars(&self) -> &[ShiftedVar] {
        &self.vars
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Evaluates all outputs. `inputs` follows the order given at compile time.
    pub fn eval<T: Scalar>(&self, inputs: &[T]) -> Result<Vec<T>> {
        if inputs.len() != self.vars.len() {
            return Err(Error::Dimension(format!("tape expects {} inputs, got {}", self.vars.len(), inputs.len())));
        }
        let mut val: Vec<T> = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let r = match op {
                Op::Const(c) => T::lit(*c),
                Op::Input(i) => inputs[*i],
                Op::Add(ix) => ix.iter().fold(T::zero(), |a, &i| a + val[i]),
                Op::Mul(ix) => ix.iter().fold(T::one(), |a, &i| a * val[i]),
                Op::Div(a, b) => {
                    if val[*b] == T::zero() {
                        return Err(Error::DivisionByZero(format!("tape slot {b}")));
                    }
                    val[*a] / val[*b]
                }
                Op::Pow(a, k) => Float::powi(val[*a], *k),
                Op::Neg(a) => -val[*a],
                Op::Sin(a) => Float::sin(val[*a]),
                Op::Cos(a) => Float::cos(val[*a]),
                Op::Tan(a) => Float::tan(val[*a]),
                Op::Atan(a) => Float::atan(val[*a]),
                Op::Sinc(k, a) => sinc_value(*k, val[*a]),
            };
            val.push(r);
        }
        Ok(self.outputs.iter().map(|&i| val[i]).collect())
    }
}

/// Tape of all partial derivatives of a list of expressions.
#[derive(Clone, Debug)]
pub struct JacobianTape {
    tape: Tape,
    rows: usize,
    cols: usize,
}

impl JacobianTape {
    pub fn compile(exprs: &[Expr], vars: &[ShiftedVar]) -> Result<JacobianTape> {
        let partials: Vec<Expr> = exprs.iter().flat_map(|e| vars.iter().map(move |v| e.diff(v))).collect();
        Ok(JacobianTape { tape: Tape::compile(&partials, vars)?, rows: exprs.len(), cols: vars.len() })
    }

    /// Partials with respect to `wrt` only, evaluated over `inputs`.
    pub fn compile_partial(exprs: &[Expr], wrt: &[ShiftedVar], inputs: &[ShiftedVar]) -> Result<JacobianTape> {
        let partials: Vec<Expr> = exprs.iter().flat_map(|e| wrt.iter().map(move |v| e.diff(v))).collect();
        Ok(JacobianTape { tape: Tape::compile(&partials, inputs)?, rows: exprs.len(), cols: wrt.len() })
    }

    pub fn vars(&self) -> &[ShiftedVar] {
        self.tape.vars()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn eval<T: Scalar>(&self, inputs: &[T]) -> Result<DMatrix<T>> {
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.tape.eval(inputs)?))
    }

    /// Evaluates at an assignment covering all variables.
    pub fn eval_at<T: Scalar>(&self, point: &super::Assignment<T>) -> Result<DMatrix<T>> {
        let missing: Vec<ShiftedVar> = self.vars().iter().filter(|v| !point.contains_key(v)).copied().collect();
        if !missing.is_empty() {
            return Err(Error::UnboundVariable(missing));
        }
        let inputs: Vec<T> = self.vars().iter().map(|v| point[v]).collect();
        self.eval(&inputs)
    }
}

struct Builder {
    ops: Vec<Op>,
    slots: HashMap<Expr, usize>,
    var_index: HashMap<ShiftedVar, usize>,
}

impl Builder {
    fn slot(&mut self, e: &Expr) -> usize {
        if let Some(&s) = self.slots.get(e) {
            return s;
        }
        let op = match e.node() {
            Node::Const(c) => Op::Const(*c),
            Node::Var(v) => Op::Input(self.var_index[v]),
            Node::Add(ts) => Op::Add(ts.iter().map(|t| self.slot(t)).collect()),
            Node::Mul(fs) => Op::Mul(fs.iter().map(|t| self.slot(t)).collect()),
            Node::Div(a, b) => {
                let a = self.slot(a);
                Op::Div(a, self.slot(b))
            }
            Node::Pow(a, k) => Op::Pow(self.slot(a), *k),
            Node::Neg(a) => Op::Neg(self.slot(a)),
            Node::Sin(a) => Op::Sin(self.slot(a)),
            Node::Cos(a) => Op::Cos(self.slot(a)),
            Node::Tan(a) => Op::Tan(self.slot(a)),
            Node::Atan(a) => Op::Atan(self.slot(a)),
            Node::Sinc(k, a) => Op::Sinc(*k, self.slot(a)),
        };
        self.ops.push(op);
        let s = self.ops.len() - 1;
        self.slots.insert(e.clone(), s);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::super::Assignment;
    use super::*;

    #[test]
    fn agrees_with_tree_evaluation() {
        let x1 = Expr::var(ShiftedVar::x(1));
        let u1 = Expr::var(ShiftedVar::u(1, 0));
        let shared = Expr::sin(&(&x1 + &u1));
        let exprs = vec![&shared * &shared, Expr::sinc(&(shared.clone() / 3.0)), Expr::atan(&u1) - 1.0];
        let vars = [ShiftedVar::x(1), ShiftedVar::u(1, 0)];
        let tape = Tape::compile(&exprs, &vars).unwrap();
        let out = tape.eval(&[0.3, -0.8]).unwrap();
        let mut p = Assignment::new();
        p.insert(vars[0], 0.3);
        p.insert(vars[1], -0.8);
        for (e, o) in exprs.iter().zip(&out) {
            assert_eq!(e.eval(&p).unwrap(), *o);
        }
        assert!(Tape::compile(&exprs, &vars[..1]).is_err());
        let jt = JacobianTape::compile(&exprs, &vars).unwrap();
        let j = jt.eval_at(&p).unwrap();
        assert_eq!(j, super::super::jacobian(&exprs, &vars, &p).unwrap());
    }
}
