//! Exact-linearizing feedback: the equations `δ^{a+α}(φ) = v_[α]` solved by
//! Newton for the input shifts they contain.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Assignment, Block, Expr, JacobianTape, ShiftedVar, Tape};
use crate::kappa::DEPENDENCE_TOL;
use crate::linalg::{newton_solve, numeric_rank, NewtonOptions};
use crate::multi_index::MultiIndex;
use crate::sampling::SampleConfig;
use crate::shift::ShiftEngine;
use crate::system::{DiscreteSystem, FlatSpec};
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    /// Controller state `z = φ_c`; needs only `(x, z)` and the `v` window.
    Dynamic,
    /// Reads the `ζ` history directly; no controller state.
    QuasiStatic,
}

impl FromStr for LawKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" => Ok(LawKind::Dynamic),
            "quasistatic" | "quasi_static" | "quasi-static" => Ok(LawKind::QuasiStatic),
            _ => Err(Error::Model(format!("unknown law kind `{s}`"))),
        }
    }
}

impl fmt::Display for LawKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LawKind::Dynamic => "dynamic",
            LawKind::QuasiStatic => "quasi_static",
        })
    }
}

/// `δ^{a^j+α}(φ^j) = v^j_[α]`, or `φ_c = z` when `component` refers to the controller state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LawEquation {
    /// 1-based component.
    pub component: usize,
    pub shift: usize,
    pub lhs: Expr,
    /// `"v"` or `"z"`.
    pub rhs: String,
}

#[derive(Clone, Debug)]
pub struct FeedbackLaw {
    pub kind: LawKind,
    pub a: MultiIndex,
    pub r: MultiIndex,
    pub q1: usize,
    pub n: usize,
    pub m: usize,
    /// Selected `(component, shift)` pairs of the controller state, 1-based components.
    pub z_spec: Vec<(usize, usize)>,
    pub z_exprs: Vec<Expr>,
    /// `δ(φ_c)`, evaluated at the solution to update `z`.
    pub z_next: Vec<Expr>,
    pub equations: Vec<LawEquation>,
    pub unknowns: Vec<ShiftedVar>,
    /// Measured data read by the law: `x`, plus the `ζ` history for quasi-static laws.
    pub data: Vec<ShiftedVar>,
    /// Variables that occur only structurally (zero partials at every
    /// sample), held at their equilibrium values.
    pub frozen: Vec<(ShiftedVar, Real)>,
    pub max_u_shift: i32,
    /// `δ^β(φ^j)` for `β < a^j`, used for the parameterization cross-check.
    pub lower: Vec<Vec<Expr>>,
    pub fu: Vec<Expr>,
    guess: Vec<Real>,
    residual_tape: Tape,
    jacobian_tape: JacobianTape,
    z_next_tape: Option<Tape>,
    lower_tape: Tape,
}

/// What the law reads at one time step.
#[derive(Clone, Debug, Default)]
pub struct FeedbackInput<'a> {
    /// `ζ_[-1], ζ_[-2], …` (most recent first); quasi-static laws only.
    pub zeta_hist: &'a [Vec<Real>],
    pub x: &'a [Real],
    /// Controller state; dynamic laws only.
    pub z: &'a [Real],
    /// `v^j_[0..=r^j−a^j]` per component.
    pub v: &'a [Vec<Real>],
}

#[derive(Clone, Debug)]
pub struct FeedbackEval {
    pub u: Vec<Real>,
    /// Values of all unknowns, aligned with [`FeedbackLaw::unknowns`].
    pub solution: Vec<Real>,
    pub z_next: Vec<Real>,
    pub iterations: usize,
    pub residual: Real,
}

/// Serializable record of a synthesized law.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LawDescriptor {
    pub model: String,
    pub kind: LawKind,
    #[serde(rename = "A")]
    pub a: MultiIndex,
    #[serde(rename = "R")]
    pub r: MultiIndex,
    pub z_spec: Vec<(usize, usize)>,
    pub equations: Vec<LawEquation>,
    pub unknowns: Vec<String>,
    pub data: Vec<String>,
    pub max_u_shift: i32,
}

/// Greedy choice of `#A − n` shifts `δ^α(φ^j)`, `α < a^j`, completing
/// `{dx} ∪ dφ_[A,R]` to rank `#R + m`.
pub fn select_phi_c(sys: &DiscreteSystem, spec: &FlatSpec, a: &MultiIndex, cfg: &SampleConfig) -> Result<Vec<(usize, usize)>> {
    let mut engine = ShiftEngine::new(sys);
    let chains: Vec<Vec<Expr>> = spec.phi.iter().zip(spec.r.iter()).map(|(p, r)| engine.forward_chain(p, r)).collect();
    let mut base: Vec<Expr> = sys.state_vars().into_iter().map(Expr::var).collect();
    for (j, chain) in chains.iter().enumerate() {
        base.extend(chain[a[j]..].iter().cloned());
    }
    let candidates: Vec<(usize, usize)> =
        (0..sys.m).flat_map(|j| (0..a[j]).map(move |alpha| (j, alpha))).collect();
    let mut cols: Vec<ShiftedVar> = base
        .iter()
        .chain(candidates.iter().map(|&(j, al)| &chains[j][al]))
        .flat_map(|e| e.vars())
        .collect();
    cols.sort();
    cols.dedup();
    let pts = cfg.assignments(&cols, |v| sys.equilibrium_value(v, &[]), false);
    let generic_rank = |rows: &[Expr]| -> Result<usize> {
        let tape = JacobianTape::compile(rows, &cols)?;
        let mut best = 0;
        for p in &pts {
            best = best.max(numeric_rank(&tape.eval_at(p)?));
        }
        Ok(best)
    };
    let required = spec.r.total() + sys.m;
    let mut kept = Vec::new();
    let mut rows = base;
    let mut rank = generic_rank(&rows)?;
    for &(j, alpha) in &candidates {
        if rank == required {
            break;
        }
        rows.push(chains[j][alpha].clone());
        let r = generic_rank(&rows)?;
        if r > rank {
            rank = r;
            kept.push((j + 1, alpha));
        } else {
            rows.pop();
        }
    }
    let want = a.total().checked_sub(sys.n).unwrap_or(usize::MAX);
    if rank != required || kept.len() != want {
        return Err(Error::SelectionIncomplete { found: rank, required });
    }
    Ok(kept)
}

/// Splits candidate unknowns into those the equations really depend on and
/// those with vanishing partials at every sample.
fn split_effective(
    sys: &DiscreteSystem,
    lhs: &[Expr],
    candidates: &[ShiftedVar],
    all: &[ShiftedVar],
    cfg: &SampleConfig,
) -> Result<(Vec<ShiftedVar>, Vec<(ShiftedVar, Real)>)> {
    let tape = JacobianTape::compile_partial(lhs, candidates, all)?;
    let mut used = vec![false; candidates.len()];
    for p in cfg.assignments(all, |v| sys.equilibrium_value(v, &[]), true) {
        let j = tape.eval_at(&p)?;
        for (c, u) in used.iter_mut().enumerate() {
            *u |= j.column(c).iter().any(|v| v.abs() > DEPENDENCE_TOL);
        }
    }
    let mut unknowns = Vec::new();
    let mut frozen = Vec::new();
    for (v, u) in candidates.iter().zip(used) {
        if u {
            unknowns.push(*v);
        } else {
            frozen.push((*v, sys.equilibrium_value(v, &[])));
        }
    }
    Ok((unknowns, frozen))
}

fn list(vars: &[ShiftedVar]) -> String {
    vars.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

impl FeedbackLaw {
    /// Quasi-static law, normally with `A = κ`.
    pub fn quasi_static(sys: &DiscreteSystem, spec: &FlatSpec, a: &MultiIndex, cfg: &SampleConfig) -> Result<FeedbackLaw> {
        Self::build(sys, spec, a, LawKind::QuasiStatic, Vec::new(), cfg)
    }

    /// Dynamic law for a feasible `A` with controller state chosen by [`select_phi_c`].
    pub fn dynamic(sys: &DiscreteSystem, spec: &FlatSpec, a: &MultiIndex, cfg: &SampleConfig) -> Result<FeedbackLaw> {
        let z_spec = select_phi_c(sys, spec, a, cfg)?;
        Self::build(sys, spec, a, LawKind::Dynamic, z_spec, cfg)
    }

    pub fn synthesize(
        sys: &DiscreteSystem,
        spec: &FlatSpec,
        a: &MultiIndex,
        kind: LawKind,
        cfg: &SampleConfig,
    ) -> Result<FeedbackLaw> {
        match kind {
            LawKind::Dynamic => Self::dynamic(sys, spec, a, cfg),
            LawKind::QuasiStatic => Self::quasi_static(sys, spec, a, cfg),
        }
    }

    fn build(
        sys: &DiscreteSystem,
        spec: &FlatSpec,
        a: &MultiIndex,
        kind: LawKind,
        z_spec: Vec<(usize, usize)>,
        cfg: &SampleConfig,
    ) -> Result<FeedbackLaw> {
        if a.len() != sys.m || !a.le(&spec.r) {
            return Err(Error::Dimension(format!("A = {a} must have {} entries and satisfy A <= R = {}", sys.m, spec.r)));
        }
        let mut engine = ShiftEngine::new(sys);
        let chains: Vec<Vec<Expr>> = spec.phi.iter().zip(spec.r.iter()).map(|(p, r)| engine.forward_chain(p, r)).collect();
        let mut equations = Vec::new();
        for (j, chain) in chains.iter().enumerate() {
            for alpha in 0..=(spec.r[j] - a[j]) {
                equations.push(LawEquation { component: j + 1, shift: alpha, lhs: chain[a[j] + alpha].clone(), rhs: "v".into() });
            }
        }
        let z_exprs: Vec<Expr> = z_spec.iter().map(|&(j, al)| chains[j - 1][al].clone()).collect();
        for (k, e) in z_exprs.iter().enumerate() {
            equations.push(LawEquation { component: k + 1, shift: 0, lhs: e.clone(), rhs: "z".into() });
        }
        let mut all: Vec<ShiftedVar> = equations.iter().flat_map(|e| e.lhs.vars()).collect();
        all.sort();
        all.dedup();
        let is_unknown = |v: &ShiftedVar| match v.block {
            Block::Input => true,
            Block::Zeta => kind == LawKind::Dynamic,
            _ => false,
        };
        let candidates: Vec<ShiftedVar> = all.iter().copied().filter(is_unknown).collect();
        let lhs: Vec<Expr> = equations.iter().map(|e| e.lhs.clone()).collect();
        let (unknowns, frozen) = split_effective(sys, &lhs, &candidates, &all, cfg)?;
        let mut data: Vec<ShiftedVar> = sys.state_vars();
        if kind == LawKind::QuasiStatic {
            for beta in 1..=spec.q1 as i32 {
                data.extend(sys.zeta_vars(-beta));
            }
        }
        if unknowns.len() != equations.len() {
            return Err(Error::SynthesisMismatch {
                equations: equations.len(),
                unknowns: unknowns.len(),
                detail: format!(
                    "equations [{}], unknowns [{}]",
                    equations.iter().map(|e| format!("phi{}[{}]", e.component, e.shift)).collect::<Vec<_>>().join(", "),
                    list(&unknowns)
                ),
            });
        }
        let inputs: Vec<ShiftedVar> =
            unknowns.iter().chain(&data).chain(frozen.iter().map(|f| &f.0)).copied().collect();
        if let Some(v) = all.iter().find(|v| !inputs.contains(v)) {
            return Err(Error::SynthesisMismatch {
                equations: equations.len(),
                unknowns: unknowns.len(),
                detail: format!("{v} is neither measured nor solved for"),
            });
        }
        let residual_tape = Tape::compile(&lhs, &inputs)?;
        let jacobian_tape = JacobianTape::compile_partial(&lhs, &unknowns, &inputs)?;
        let z_next: Vec<Expr> = z_exprs.iter().map(|e| engine.forward_shift(e, 1)).collect();
        let z_next_tape = if z_next.is_empty() {
            None
        } else {
            Some(Tape::compile(&z_next, &inputs).map_err(|e| Error::SynthesisMismatch {
                equations: equations.len(),
                unknowns: unknowns.len(),
                detail: format!("controller state update not determined by the solve: {e}"),
            })?)
        };
        let lower: Vec<Vec<Expr>> = chains.iter().zip(a.iter()).map(|(c, aj)| c[..aj].to_vec()).collect();
        let flat_lower: Vec<Expr> = lower.iter().flatten().cloned().collect();
        let lower_tape = Tape::compile(&flat_lower, &inputs)?;
        let guess = unknowns.iter().map(|v| sys.equilibrium_value(v, &[])).collect();
        let max_u_shift = unknowns.iter().filter(|v| v.block == Block::Input).map(|v| v.shift).max().unwrap_or(0);
        Ok(FeedbackLaw {
            kind,
            a: a.clone(),
            r: spec.r.clone(),
            q1: spec.q1,
            n: sys.n,
            m: sys.m,
            z_spec,
            z_exprs,
            z_next,
            equations,
            unknowns,
            data,
            frozen,
            max_u_shift,
            lower,
            fu: spec.fu.clone(),
            guess,
            residual_tape,
            jacobian_tape,
            z_next_tape,
            lower_tape,
        })
    }

    /// Input-output orders of the closed loop: `y_[A] = v`.
    pub fn closed_loop_io_orders(&self) -> &MultiIndex {
        &self.a
    }

    /// Window length `r^j − a^j + 1` per component.
    pub fn window(&self) -> Vec<usize> {
        self.r.iter().zip(self.a.iter()).map(|(r, a)| r - a + 1).collect()
    }

    pub fn z_dim(&self) -> usize {
        self.z_spec.len()
    }

    /// Equilibrium guess for the unknowns.
    pub fn default_guess(&self) -> &[Real] {
        &self.guess
    }

    fn data_values(&self, input: &FeedbackInput) -> Result<Vec<Real>> {
        if input.x.len() != self.n {
            return Err(Error::Dimension(format!("x has {} entries, expected {}", input.x.len(), self.n)));
        }
        let mut out = input.x.to_vec();
        if self.kind == LawKind::QuasiStatic {
            if input.zeta_hist.len() < self.q1 {
                return Err(Error::Dimension(format!("need {} past zeta values, got {}", self.q1, input.zeta_hist.len())));
            }
            for z in &input.zeta_hist[..self.q1] {
                if z.len() != self.m {
                    return Err(Error::Dimension("zeta history entry has wrong length".into()));
                }
                out.extend(z);
            }
        }
        out.extend(self.frozen.iter().map(|f| f.1));
        Ok(out)
    }

    fn targets(&self, input: &FeedbackInput) -> Result<Vec<Real>> {
        let w = self.window();
        if input.v.len() != self.m || input.v.iter().zip(&w).any(|(v, w)| v.len() != *w) {
            return Err(Error::Dimension(format!("v window must have lengths {w:?}")));
        }
        if input.z.len() != self.z_dim() {
            return Err(Error::Dimension(format!("z has {} entries, expected {}", input.z.len(), self.z_dim())));
        }
        let mut t: Vec<Real> = input.v.iter().flatten().copied().collect();
        t.extend(input.z);
        Ok(t)
    }

    /// Solves the law's equations. `warm_start` overrides the equilibrium guess.
    pub fn evaluate(&self, input: &FeedbackInput, warm_start: Option<&[Real]>) -> Result<FeedbackEval> {
        let data = self.data_values(input)?;
        let target = self.targets(input)?;
        let k = self.unknowns.len();
        let x0 = DVector::from_column_slice(warm_start.filter(|w| w.len() == k).unwrap_or(&self.guess));
        let mut buf: Vec<Real> = vec![0.0; k + data.len()];
        buf[k..].copy_from_slice(&data);
        let out = newton_solve(
            |p: &DVector<Real>| {
                let mut b = buf.clone();
                b[..k].copy_from_slice(p.as_slice());
                let vals = self.residual_tape.eval(&b)?;
                let r = DVector::from_iterator(k, vals.iter().zip(&target).map(|(a, t)| a - t));
                let j: DMatrix<Real> = self.jacobian_tape.eval(&b)?;
                Ok((r, j))
            },
            x0,
            &NewtonOptions::default(),
        )?;
        let solution: Vec<Real> = out.x.iter().copied().collect();
        buf[..k].copy_from_slice(&solution);
        let u = (1..=self.m)
            .map(|j| {
                let v = ShiftedVar::u(j, 0);
                self.unknowns.iter().position(|w| *w == v).map(|i| solution[i]).ok_or_else(|| Error::SynthesisMismatch {
                    equations: self.equations.len(),
                    unknowns: k,
                    detail: format!("{v} does not occur in the equations"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let z_next = match &self.z_next_tape {
            Some(t) => t.eval(&buf)?,
            None => Vec::new(),
        };
        Ok(FeedbackEval { u, solution, z_next, iterations: out.iterations, residual: out.residual })
    }

    /// Input recomputed through the parameterization: `F_u(y)` with
    /// `y_[β] = δ^β(φ)` at the solution for `β < a` and `v` above.
    pub fn parameterization_input(&self, input: &FeedbackInput, eval: &FeedbackEval) -> Result<Vec<Real>> {
        let mut buf = eval.solution.clone();
        buf.extend(self.data_values(input)?);
        let low = self.lower_tape.eval(&buf)?;
        let mut y = Assignment::new();
        let mut it = low.into_iter();
        for j in 0..self.m {
            for beta in 0..self.a[j] {
                y.insert(ShiftedVar::y(j + 1, beta as i32), it.next().unwrap_or(0.0));
            }
            for (alpha, v) in input.v[j].iter().enumerate() {
                y.insert(ShiftedVar::y(j + 1, (self.a[j] + alpha) as i32), *v);
            }
        }
        self.fu.iter().map(|e| e.eval(&y)).collect()
    }

    /// Controller state on initial data: `φ_c` at the given history and state,
    /// with input shifts at their equilibrium values.
    pub fn initial_z(&self, sys: &DiscreteSystem, zeta_hist: &[Vec<Real>], x: &[Real]) -> Result<Vec<Real>> {
        let mut p = Assignment::new();
        for (i, v) in x.iter().enumerate() {
            p.insert(ShiftedVar::x(i + 1), *v);
        }
        for (b, z) in zeta_hist.iter().enumerate() {
            for (j, v) in z.iter().enumerate() {
                p.insert(ShiftedVar::zeta(j + 1, -(b as i32) - 1), *v);
            }
        }
        self.z_exprs
            .iter()
            .map(|e| {
                let mut q = p.clone();
                for v in e.vars() {
                    q.entry(v).or_insert_with(|| sys.equilibrium_value(&v, &[]));
                }
                e.eval(&q)
            })
            .collect()
    }

    pub fn descriptor(&self, model: &str) -> LawDescriptor {
        LawDescriptor {
            model: model.to_string(),
            kind: self.kind,
            a: self.a.clone(),
            r: self.r.clone(),
            z_spec: self.z_spec.clone(),
            equations: self.equations.clone(),
            unknowns: self.unknowns.iter().map(|v| v.to_string()).collect(),
            data: self.data.iter().map(|v| v.to_string()).collect(),
            max_u_shift: self.max_u_shift,
        }
    }

    /// Re-synthesizes the law a descriptor records and checks that the
    /// equations agree.
    pub fn from_descriptor(sys: &DiscreteSystem, spec: &FlatSpec, d: &LawDescriptor, cfg: &SampleConfig) -> Result<FeedbackLaw> {
        let law = Self::synthesize(sys, spec, &d.a, d.kind, cfg)?;
        let same = law.equations.len() == d.equations.len()
            && law.equations.iter().zip(&d.equations).all(|(a, b)| {
                a.component == b.component && a.shift == b.shift && a.rhs == b.rhs && a.lhs == b.lhs.simplify()
            })
            && law.z_spec == d.z_spec;
        if !same {
            return Err(Error::Model("law descriptor does not match the model".into()));
        }
        Ok(law)
    }
}
