//! Forward and backward shift operators on expressions over the trajectory manifold.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::expr::{Assignment, Block, Expr, ShiftedVar};
use crate::multi_index::MultiIndex;
use crate::system::DiscreteSystem;
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PsiMode {
    ClosedForm,
    Newton,
}

/// Applies `δ` and `δ⁻¹` for one system. Single-step forward shifts are
/// cached, so repeated chains share work.
#[derive(Debug)]
pub struct ShiftEngine<'a> {
    sys: &'a DiscreteSystem,
    mode: PsiMode,
    l_u: i32,
    l_zeta: i32,
    forward_cache: HashMap<Expr, Expr>,
    backward_cache: HashMap<Expr, Expr>,
}

impl<'a> ShiftEngine<'a> {
    /// Closed-form mode when the system provides `ψ`, Newton otherwise.
    pub fn new(sys: &'a DiscreteSystem) -> Self {
        let mode = if sys.has_closed_form_psi() { PsiMode::ClosedForm } else { PsiMode::Newton };
        Self::with_mode(sys, mode)
    }

    pub fn with_mode(sys: &'a DiscreteSystem, mode: PsiMode) -> Self {
        let mode = if sys.has_closed_form_psi() { mode } else { PsiMode::Newton };
        ShiftEngine { sys, mode, l_u: 1, l_zeta: 1, forward_cache: HashMap::new(), backward_cache: HashMap::new() }
    }

    pub fn system(&self) -> &'a DiscreteSystem {
        self.sys
    }

    pub fn mode(&self) -> PsiMode {
        self.mode
    }

    /// Current horizons `(l_u, l_ζ)`: strictly above every input shift and
    /// every backward `ζ` depth seen so far.
    pub fn horizons(&self) -> (i32, i32) {
        (self.l_u, self.l_zeta)
    }

    fn observe(&mut self, e: &Expr) {
        for v in e.vars() {
            match v.block {
                Block::Input => self.l_u = self.l_u.max(v.shift + 1),
                Block::Zeta => self.l_zeta = self.l_zeta.max(1 - v.shift),
                _ => {}
            }
        }
    }

    fn forward_once(&mut self, e: &Expr) -> Expr {
        if let Some(r) = self.forward_cache.get(e) {
            return r.clone();
        }
        let sys = self.sys;
        let out = e.map_vars(&mut |v| match v.block {
            Block::State => Some(sys.f[v.index()].clone()),
            Block::Zeta if v.shift == -1 => Some(sys.g[v.index()].clone()),
            Block::Zeta | Block::Input => Some(Expr::var(ShiftedVar { shift: v.shift + 1, ..*v })),
            _ => None,
        });
        self.observe(&out);
        self.forward_cache.insert(e.clone(), out.clone());
        out
    }

    /// `δ^k(e)`.
    pub fn forward_shift(&mut self, e: &Expr, k: usize) -> Expr {
        self.observe(e);
        let mut cur = e.clone();
        for _ in 0..k {
            cur = self.forward_once(&cur);
        }
        cur
    }

    /// `[e, δ(e), …, δ^k(e)]`.
    pub fn forward_chain(&mut self, e: &Expr, k: usize) -> Vec<Expr> {
        self.observe(e);
        let mut out = Vec::with_capacity(k + 1);
        out.push(e.clone());
        for i in 0..k {
            let next = self.forward_once(&out[i]);
            out.push(next);
        }
        out
    }

    /// Componentwise `δ^{a^j}(φ^j)`.
    pub fn shift_multi(&mut self, phi: &[Expr], a: &MultiIndex) -> Vec<Expr> {
        phi.iter().zip(a.iter()).map(|(p, k)| self.forward_shift(p, k)).collect()
    }

    /// Symbolic `δ^{-k}(e)`; needs a closed-form `ψ`.
    pub fn backward_shift(&mut self, e: &Expr, k: usize) -> Result<Expr> {
        if self.mode != PsiMode::ClosedForm {
            return Err(Error::NoClosedFormPsi);
        }
        let sys = self.sys;
        let (psi_x, psi_u) = match (&sys.psi_x, &sys.psi_u) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::NoClosedFormPsi),
        };
        self.observe(e);
        let mut cur = e.clone();
        for _ in 0..k {
            if let Some(r) = self.backward_cache.get(&cur) {
                cur = r.clone();
                continue;
            }
            let next = cur.map_vars(&mut |v| match v.block {
                Block::State => Some(psi_x[v.index()].clone()),
                Block::Input if v.shift == 0 => Some(psi_u[v.index()].clone()),
                Block::Zeta | Block::Input => Some(Expr::var(ShiftedVar { shift: v.shift - 1, ..*v })),
                _ => None,
            });
            self.observe(&next);
            self.backward_cache.insert(cur, next.clone());
            cur = next;
        }
        Ok(cur)
    }

    /// The point `p'` with `h(p') = δ⁻¹(h)(p)` for every `h` whose variables
    /// `p'` covers. Needs `x` and `ζ_[-1]` in `p`; `ψ` is closed form or Newton
    /// warm-started at `(x, u)` of `p` (equilibrium input where absent).
    pub fn backward_point(&self, p: &Assignment) -> Result<Assignment> {
        let sys = self.sys;
        let get = |v: ShiftedVar| p.get(&v).copied().ok_or_else(|| Error::UnboundVariable(vec![v]));
        let x: Vec<Real> = sys.state_vars().into_iter().map(get).collect::<Result<_>>()?;
        let zeta: Vec<Real> = sys.zeta_vars(-1).into_iter().map(get).collect::<Result<_>>()?;
        let u_guess: Vec<Real> =
            (1..=sys.m).map(|j| p.get(&ShiftedVar::u(j, 0)).copied().unwrap_or(sys.equilibrium.u[j - 1])).collect();
        let (xp, up) = match self.mode {
            PsiMode::ClosedForm => sys.psi_closed(&x, &zeta).ok_or(Error::NoClosedFormPsi)??,
            PsiMode::Newton => sys.psi_newton(&x, &zeta, (&x, &u_guess))?,
        };
        let mut out = Assignment::with_capacity(p.len());
        for (i, v) in xp.into_iter().enumerate() {
            out.insert(ShiftedVar::x(i + 1), v);
        }
        for (j, v) in up.into_iter().enumerate() {
            out.insert(ShiftedVar::u(j + 1, 0), v);
        }
        for (var, val) in p {
            match var.block {
                Block::Zeta if var.shift <= -2 => {
                    out.insert(ShiftedVar { shift: var.shift + 1, ..*var }, *val);
                }
                Block::Input => {
                    out.insert(ShiftedVar { shift: var.shift + 1, ..*var }, *val);
                }
                _ => {}
            }
        }
        Ok(out)
    }

    /// Pointwise `δ^{-k}(e)(p)`, valid in both modes.
    pub fn backward_eval(&self, e: &Expr, p: &Assignment, k: usize) -> Result<Real> {
        let mut q = p.clone();
        for _ in 0..k {
            q = self.backward_point(&q)?;
        }
        e.eval(&q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::SampleConfig;
    use crate::zoo;

    fn var(v: ShiftedVar) -> Expr {
        Expr::var(v)
    }

    #[test]
    fn example1_shifts() {
        let (sys, spec) = zoo::example1();
        let mut eng = ShiftEngine::new(&sys);
        let x1 = var(ShiftedVar::x(1));
        let u1 = var(ShiftedVar::u(1, 0));
        assert_eq!(eng.forward_shift(&spec.phi[0], 1), &x1 + &u1);
        let want = var(ShiftedVar::u(2, 0)) / (var(ShiftedVar::u(1, 1)) + 1.0);
        assert_eq!(eng.forward_shift(&spec.phi[1], 2), want);
        assert_eq!(eng.shift_multi(&spec.phi, &MultiIndex::zeros(2)), spec.phi);
        assert!(eng.horizons().0 > 1);
    }

    #[test]
    fn robot_second_shift() {
        let (sys, spec) = zoo::robot();
        let mut eng = ShiftEngine::new(&sys);
        let want = 2.0 * var(ShiftedVar::u(2, 0)) - var(ShiftedVar::x(3));
        assert_eq!(eng.forward_shift(&spec.phi[0], 2), want);
    }

    #[test]
    fn backward_index_rules() {
        let (sys, _) = zoo::robot();
        let mut eng = ShiftEngine::new(&sys);
        assert_eq!(eng.backward_shift(&var(ShiftedVar::x(3)), 1).unwrap(), var(ShiftedVar::zeta(1, -1)));
        assert_eq!(eng.backward_shift(&var(ShiftedVar::u(1, 1)), 1).unwrap(), var(ShiftedVar::u(1, 0)));
        let (heli, _) = zoo::helicopter();
        let mut eng = ShiftEngine::new(&heli);
        assert!(matches!(eng.backward_shift(&var(ShiftedVar::x(1)), 1), Err(Error::NoClosedFormPsi)));
    }

    #[test]
    fn closed_form_and_newton_backward_agree() {
        let (sys, spec) = zoo::robot();
        let mut eng = ShiftEngine::new(&sys);
        let newton = ShiftEngine::with_mode(&sys, PsiMode::Newton);
        let e = &spec.phi[1];
        let back = eng.backward_shift(e, 1).unwrap();
        let mut vars: Vec<ShiftedVar> = back.vars().into_iter().chain(e.vars()).collect();
        vars.extend(sys.xu_vars());
        vars.extend(sys.zeta_vars(-1));
        vars.sort();
        vars.dedup();
        for p in SampleConfig::default().assignments(&vars, |v| sys.equilibrium_value(v, &[]), true) {
            let a = back.eval(&p).unwrap();
            let b = newton.backward_eval(e, &p, 1).unwrap();
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}
