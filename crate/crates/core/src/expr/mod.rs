//! Symbolic expressions over shift-indexed variables.
//!
//! Expressions are immutable, reference-counted DAGs. Every node carries a
//! structural hash, so equal subtrees compare in O(1) in the common case and
//! like terms can be collected cheaply while building sums and products.
//!
//! Simplification happens only in the smart constructors: constant folding,
//! `±0`, `·1`, `·0`, double negation, collection of structurally equal terms
//! in sums and of equal factors in products. There is no other rewriting.

mod diff;
mod eval;
mod tape;
mod text;

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use eval::{jacobian, Assignment};
pub use tape::{JacobianTape, Tape};
pub use text::parse_with_params;

/// Which family a variable belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Block {
    /// `x`, shift 0 only.
    State,
    /// `u_[α]`, α ≥ 0.
    Input,
    /// `ζ_[−β]`, β ≥ 1.
    Zeta,
    /// Flat output `y_[α]`, α ≥ 0. Used by the parameterization maps.
    Output,
    /// New input `v_[α]`, α ≥ 0.
    NewInput,
}

impl Block {
    pub fn letter(self) -> char {
        match self {
            Block::State => 'x',
            Block::Input => 'u',
            Block::Zeta => 'z',
            Block::Output => 'y',
            Block::NewInput => 'v',
        }
    }

    pub fn from_letter(c: char) -> Option<Block> {
        Some(match c {
            'x' => Block::State,
            'u' => Block::Input,
            'z' => Block::Zeta,
            'y' => Block::Output,
            'v' => Block::NewInput,
            _ => return None,
        })
    }
}

/// A coordinate of the trajectory manifold, identified structurally by
/// `(block, component, shift)`. Components are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ShiftedVar {
    pub block: Block,
    pub component: u16,
    pub shift: i32,
}

impl ShiftedVar {
    pub fn try_new(block: Block, component: u16, shift: i32) -> Result<Self> {
        let ok = component >= 1
            && match block {
                Block::State => shift == 0,
                Block::Zeta => shift <= -1,
                Block::Input | Block::Output | Block::NewInput => shift >= 0,
            };
        if ok {
            Ok(ShiftedVar { block, component, shift })
        } else {
            Err(Error::InvalidVariable(format!("{}{component} with shift {shift}", block.letter())))
        }
    }

    fn checked(block: Block, component: usize, shift: i32) -> Self {
        let component = u16::try_from(component).expect("component index fits in u16");
        Self::try_new(block, component, shift).unwrap_or_else(|e| panic!("{e}"))
    }

    /// State `x^i`. Panics for `i == 0`.
    pub fn x(i: usize) -> Self {
        Self::checked(Block::State, i, 0)
    }

    /// Input `u^j_[shift]`. Panics for negative shifts.
    pub fn u(j: usize, shift: i32) -> Self {
        Self::checked(Block::Input, j, shift)
    }

    /// Past value `ζ^j_[shift]`. Panics unless `shift <= -1`.
    pub fn zeta(j: usize, shift: i32) -> Self {
        Self::checked(Block::Zeta, j, shift)
    }

    /// Flat output `y^j_[shift]`.
    pub fn y(j: usize, shift: i32) -> Self {
        Self::checked(Block::Output, j, shift)
    }

    /// New input `v^j_[shift]`.
    pub fn v(j: usize, shift: i32) -> Self {
        Self::checked(Block::NewInput, j, shift)
    }

    /// Zero-based component index.
    pub fn index(&self) -> usize {
        self.component as usize - 1
    }

    pub fn with_shift(&self, shift: i32) -> Result<Self> {
        Self::try_new(self.block, self.component, shift)
    }
}

impl fmt::Display for ShiftedVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.block.letter(), self.component)?;
        if self.block != Block::State {
            write!(f, "[{}]", self.shift)?;
        }
        Ok(())
    }
}

/// Expression node. Children are shared [`Expr`] handles.
#[derive(Clone, Debug)]
pub enum Node {
    Const(f64),
    Var(ShiftedVar),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Div(Expr, Expr),
    Pow(Expr, i32),
    Neg(Expr),
    Sin(Expr),
    Cos(Expr),
    Tan(Expr),
    Atan(Expr),
    /// `order`-th derivative of `sin(t)/t`, continuously extended at `t = 0`.
    Sinc(u32, Expr),
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        use Node::*;
        match (self, other) {
            (Const(a), Const(b)) => a.to_bits() == b.to_bits(),
            (Var(a), Var(b)) => a == b,
            (Add(a), Add(b)) | (Mul(a), Mul(b)) => a == b,
            (Div(a, b), Div(c, d)) => a == c && b == d,
            (Pow(a, j), Pow(b, k)) => j == k && a == b,
            (Neg(a), Neg(b)) | (Sin(a), Sin(b)) | (Cos(a), Cos(b)) | (Tan(a), Tan(b)) | (Atan(a), Atan(b)) => a == b,
            (Sinc(j, a), Sinc(k, b)) => j == k && a == b,
            _ => false,
        }
    }
}

struct Inner {
    node: Node,
    hash: u64,
}

/// Immutable, cheaply clonable expression handle.
#[derive(Clone)]
pub struct Expr(Arc<Inner>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || (self.0.hash == other.0.hash && self.0.node == other.0.node)
    }
}

impl Eq for Expr {}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_prefix())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_prefix())
    }
}

fn node_hash(node: &Node) -> u64 {
    let mut h = DefaultHasher::new();
    match node {
        Node::Const(c) => (0u8, c.to_bits()).hash(&mut h),
        Node::Var(v) => (1u8, v).hash(&mut h),
        Node::Add(ts) => {
            2u8.hash(&mut h);
            ts.iter().for_each(|t| t.0.hash.hash(&mut h));
        }
        Node::Mul(ts) => {
            3u8.hash(&mut h);
            ts.iter().for_each(|t| t.0.hash.hash(&mut h));
        }
        Node::Div(a, b) => (4u8, a.0.hash, b.0.hash).hash(&mut h),
        Node::Pow(a, k) => (5u8, a.0.hash, *k).hash(&mut h),
        Node::Neg(a) => (6u8, a.0.hash).hash(&mut h),
        Node::Sin(a) => (7u8, a.0.hash).hash(&mut h),
        Node::Cos(a) => (8u8, a.0.hash).hash(&mut h),
        Node::Tan(a) => (9u8, a.0.hash).hash(&mut h),
        Node::Atan(a) => (10u8, a.0.hash).hash(&mut h),
        Node::Sinc(k, a) => (11u8, *k, a.0.hash).hash(&mut h),
    }
    h.finish()
}

impl Expr {
    /// Wraps a node as-is, without simplification.
    pub fn from_node(node: Node) -> Expr {
        let hash = node_hash(&node);
        Expr(Arc::new(Inner { node, hash }))
    }

    pub fn node(&self) -> &Node {
        &self.0.node
    }

    pub(crate) fn ptr(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn constant(c: f64) -> Expr {
        Expr::from_node(Node::Const(c))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn var(v: ShiftedVar) -> Expr {
        Expr::from_node(Node::Var(v))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn add_all(terms: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(terms.len());
        for t in terms {
            match t.node() {
                Node::Add(inner) => flat.extend(inner.iter().cloned()),
                _ => flat.push(t),
            }
        }
        let mut constant = 0.0;
        // (coefficient, base) in order of first appearance
        let mut groups: Vec<(f64, Expr)> = Vec::new();
        let mut index: HashMap<Expr, usize> = HashMap::new();
        for t in flat {
            if let Some(c) = t.as_const() {
                constant += c;
                continue;
            }
            let (coef, base) = split_coefficient(&t);
            match index.get(&base) {
                Some(&i) => groups[i].0 += coef,
                None => {
                    index.insert(base.clone(), groups.len());
                    groups.push((coef, base));
                }
            }
        }
        let mut out: Vec<Expr> = groups
            .into_iter()
            .filter(|(c, _)| *c != 0.0)
            .map(|(c, base)| scale(c, base))
            .collect();
        // canonical order so that sums compare equal regardless of how they were built
        out.sort_by_key(|t| t.0.hash);
        if constant != 0.0 || out.is_empty() {
            out.push(Expr::constant(constant));
        }
        if out.len() == 1 {
            out.pop().unwrap()
        } else {
            Expr::from_node(Node::Add(out))
        }
    }

    pub fn mul_all(factors: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(factors.len());
        let mut constant = 1.0;
        let mut stack = factors;
        stack.reverse();
        while let Some(f) = stack.pop() {
            match f.node() {
                Node::Mul(inner) => stack.extend(inner.iter().rev().cloned()),
                Node::Neg(inner) => {
                    constant = -constant;
                    stack.push(inner.clone());
                }
                Node::Const(c) => constant *= c,
                _ => flat.push(f),
            }
        }
        if constant == 0.0 {
            return Expr::zero();
        }
        let mut groups: Vec<(Expr, i32)> = Vec::new();
        let mut index: HashMap<Expr, usize> = HashMap::new();
        for f in flat {
            let (base, k) = match f.node() {
                Node::Pow(b, k) => (b.clone(), *k),
                _ => (f, 1),
            };
            match index.get(&base) {
                Some(&i) => groups[i].1 += k,
                None => {
                    index.insert(base.clone(), groups.len());
                    groups.push((base, k));
                }
            }
        }
        let mut out: Vec<Expr> = groups
            .into_iter()
            .filter(|(_, k)| *k != 0)
            .map(|(b, k)| Expr::pow(&b, k))
            .collect();
        out.sort_by_key(|t| t.0.hash);
        let negate = constant == -1.0 && !out.is_empty();
        if constant != 1.0 && !negate {
            out.insert(0, Expr::constant(constant));
        }
        let product = match out.len() {
            0 => Expr::one(),
            1 => out.pop().unwrap(),
            _ => Expr::from_node(Node::Mul(out)),
        };
        if negate {
            Expr::from_node(Node::Neg(product))
        } else {
            product
        }
    }

    pub fn div(a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (_, Some(d)) if d == 1.0 => a.clone(),
            (Some(n), Some(d)) if d != 0.0 => Expr::constant(n / d),
            (Some(n), Some(d)) if n == 0.0 && d != 0.0 => Expr::zero(),
            (Some(n), None) if n == 0.0 => Expr::zero(),
            _ => Expr::from_node(Node::Div(a.clone(), b.clone())),
        }
    }

    pub fn pow(e: &Expr, k: i32) -> Expr {
        if k == 0 {
            return Expr::one();
        }
        if k == 1 {
            return e.clone();
        }
        match e.node() {
            Node::Const(c) => Expr::constant(c.powi(k)),
            Node::Pow(b, j) => Expr::pow(b, j * k),
            _ => Expr::from_node(Node::Pow(e.clone(), k)),
        }
    }

    pub fn neg(e: &Expr) -> Expr {
        match e.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            Node::Mul(fs) if fs.first().and_then(Expr::as_const).is_some() => {
                let mut fs = fs.clone();
                let c = fs[0].as_const().unwrap();
                fs[0] = Expr::constant(-c);
                Expr::mul_all(fs)
            }
            _ => Expr::from_node(Node::Neg(e.clone())),
        }
    }

    pub fn sin(e: &Expr) -> Expr {
        unary(e, f64::sin, Node::Sin)
    }

    pub fn cos(e: &Expr) -> Expr {
        unary(e, f64::cos, Node::Cos)
    }

    pub fn tan(e: &Expr) -> Expr {
        unary(e, f64::tan, Node::Tan)
    }

    pub fn atan(e: &Expr) -> Expr {
        unary(e, f64::atan, Node::Atan)
    }

    pub fn sinc(e: &Expr) -> Expr {
        Expr::sinc_deriv(0, e)
    }

    pub fn sinc_deriv(order: u32, e: &Expr) -> Expr {
        match e.as_const() {
            Some(c) => Expr::constant(eval::sinc_value::<f64>(order, c)),
            None => Expr::from_node(Node::Sinc(order, e.clone())),
        }
    }

    /// Variables occurring in the expression, in sorted order.
    pub fn vars(&self) -> BTreeSet<ShiftedVar> {
        let mut out = BTreeSet::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.ptr()) {
                continue;
            }
            match e.node() {
                Node::Var(v) => {
                    out.insert(*v);
                }
                _ => e.for_each_child(|c| stack.push(c.clone())),
            }
        }
        out
    }

    pub fn contains(&self, v: &ShiftedVar) -> bool {
        self.vars().contains(v)
    }

    pub(crate) fn for_each_child(&self, mut f: impl FnMut(&Expr)) {
        match self.node() {
            Node::Const(_) | Node::Var(_) => {}
            Node::Add(ts) | Node::Mul(ts) => ts.iter().for_each(f),
            Node::Div(a, b) => {
                f(a);
                f(b);
            }
            Node::Pow(a, _)
            | Node::Neg(a)
            | Node::Sin(a)
            | Node::Cos(a)
            | Node::Tan(a)
            | Node::Atan(a)
            | Node::Sinc(_, a) => f(a),
        }
    }

    /// Number of distinct nodes in the shared DAG.
    pub fn node_count(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if seen.insert(e.ptr()) {
                e.for_each_child(|c| stack.push(c.clone()));
            }
        }
        seen.len()
    }

    /// Size of the fully expanded tree (saturating).
    pub fn tree_size(&self) -> u64 {
        fn go(e: &Expr, memo: &mut HashMap<usize, u64>) -> u64 {
            if let Some(&s) = memo.get(&e.ptr()) {
                return s;
            }
            let mut s: u64 = 1;
            e.for_each_child(|c| s = s.saturating_add(go(c, memo)));
            memo.insert(e.ptr(), s);
            s
        }
        go(self, &mut HashMap::new())
    }

    /// Largest shift among variables of `block`, if any occur.
    pub fn max_shift(&self, block: Block) -> Option<i32> {
        self.vars().iter().filter(|v| v.block == block).map(|v| v.shift).max()
    }

    /// Smallest shift among variables of `block`, if any occur.
    pub fn min_shift(&self, block: Block) -> Option<i32> {
        self.vars().iter().filter(|v| v.block == block).map(|v| v.shift).min()
    }

    /// Rebuilds the expression, replacing every variable for which `f`
    /// returns `Some`. Replacement is simultaneous and the result is
    /// simplified by the smart constructors. Shared subtrees stay shared.
    pub fn map_vars(&self, f: &mut dyn FnMut(&ShiftedVar) -> Option<Expr>) -> Expr {
        let mut memo: HashMap<usize, Expr> = HashMap::new();
        self.map_vars_memo(f, &mut memo)
    }

    fn map_vars_memo(&self, f: &mut dyn FnMut(&ShiftedVar) -> Option<Expr>, memo: &mut HashMap<usize, Expr>) -> Expr {
        if let Some(e) = memo.get(&self.ptr()) {
            return e.clone();
        }
        let out = match self.node() {
            Node::Const(_) => self.clone(),
            Node::Var(v) => f(v).unwrap_or_else(|| self.clone()),
            _ => {
                let mut changed = false;
                let mut kids = Vec::new();
                self.for_each_child(|c| {
                    let n = c.map_vars_memo(f, memo);
                    changed |= !Arc::ptr_eq(&n.0, &c.0);
                    kids.push(n);
                });
                if changed {
                    self.rebuild(kids)
                } else {
                    self.clone()
                }
            }
        };
        memo.insert(self.ptr(), out.clone());
        out
    }

    /// Same node kind with new children, via the simplifying constructors.
    pub(crate) fn rebuild(&self, mut kids: Vec<Expr>) -> Expr {
        match self.node() {
            Node::Const(_) | Node::Var(_) => self.clone(),
            Node::Add(_) => Expr::add_all(kids),
            Node::Mul(_) => Expr::mul_all(kids),
            Node::Div(_, _) => {
                let b = kids.pop().unwrap();
                let a = kids.pop().unwrap();
                Expr::div(&a, &b)
            }
            Node::Pow(_, k) => Expr::pow(&kids[0], *k),
            Node::Neg(_) => Expr::neg(&kids[0]),
            Node::Sin(_) => Expr::sin(&kids[0]),
            Node::Cos(_) => Expr::cos(&kids[0]),
            Node::Tan(_) => Expr::tan(&kids[0]),
            Node::Atan(_) => Expr::atan(&kids[0]),
            Node::Sinc(k, _) => Expr::sinc_deriv(*k, &kids[0]),
        }
    }

    /// Simultaneous substitution of variables by expressions.
    pub fn substitute(&self, map: &HashMap<ShiftedVar, Expr>) -> Expr {
        if map.is_empty() {
            return self.clone();
        }
        self.map_vars(&mut |v| map.get(v).cloned())
    }

    /// Re-applies the smart constructors bottom-up.
    pub fn simplify(&self) -> Expr {
        fn go(e: &Expr, memo: &mut HashMap<usize, Expr>) -> Expr {
            if let Some(s) = memo.get(&e.ptr()) {
                return s.clone();
            }
            let mut kids = Vec::new();
            e.for_each_child(|c| kids.push(go(c, memo)));
            let out = e.rebuild(kids);
            memo.insert(e.ptr(), out.clone());
            out
        }
        go(self, &mut HashMap::new())
    }
}

fn unary(e: &Expr, fold: fn(f64) -> f64, make: fn(Expr) -> Node) -> Expr {
    match e.as_const() {
        Some(c) => Expr::constant(fold(c)),
        None => Expr::from_node(make(e.clone())),
    }
}

/// Splits `c·base` into its numeric coefficient and the remaining factor.
fn split_coefficient(t: &Expr) -> (f64, Expr) {
    match t.node() {
        Node::Neg(inner) => {
            let (c, b) = split_coefficient(inner);
            (-c, b)
        }
        Node::Mul(fs) => match fs.first().and_then(Expr::as_const) {
            Some(c) => {
                let rest: Vec<Expr> = fs[1..].to_vec();
                let base = if rest.len() == 1 { rest[0].clone() } else { Expr::from_node(Node::Mul(rest)) };
                (c, base)
            }
            None => (1.0, t.clone()),
        },
        _ => (1.0, t.clone()),
    }
}

fn scale(c: f64, base: Expr) -> Expr {
    if c == 1.0 {
        base
    } else if c == -1.0 {
        Expr::neg(&base)
    } else {
        Expr::mul_all(vec![Expr::constant(c), base])
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::constant(c)
    }
}

impl From<ShiftedVar> for Expr {
    fn from(v: ShiftedVar) -> Self {
        Expr::var(v)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, &rhs)
            }
        }
        impl ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, &Expr::constant(rhs))
            }
        }
        impl ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&Expr::constant(self), &rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::add_all(vec![a.clone(), b.clone()]));
binop!(Sub, sub, |a, b| Expr::add_all(vec![a.clone(), Expr::neg(b)]));
binop!(Mul, mul, |a, b| Expr::mul_all(vec![a.clone(), b.clone()]));
binop!(Div, div, Expr::div);

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(&self)
    }
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}
