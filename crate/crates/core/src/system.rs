//! System class, trajectory extension, flat-output data and model files.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{jacobian, parse_with_params, Assignment, Block, Expr, ShiftedVar, Tape};
use crate::linalg::{condition_number, newton_solve, numeric_rank, NewtonOptions};
use crate::multi_index::MultiIndex;
use crate::sampling::{describe_point, SampleConfig};
use crate::shift::ShiftEngine;
use crate::Real;

/// Equilibrium values. A single point of the trajectory manifold where every
/// shift of `x` and `u` takes the same value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub x: Vec<Real>,
    pub u: Vec<Real>,
}

/// Alternative form of a system related to the main one by an input
/// transformation `ū = τ(x, u)`.
#[derive(Clone, Debug)]
pub struct RawForm {
    pub f: Vec<Expr>,
    /// `ū` in terms of `x` and the raw input, written with `u` variables.
    pub input_transform: Vec<Expr>,
    /// Raw input in terms of `x` and `ū`, written with `u` variables.
    pub input_transform_inverse: Vec<Expr>,
}

#[derive(Clone, Debug)]
pub struct DiscreteSystem {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub params: BTreeMap<String, Real>,
    /// `x⁺ = f(x, u)`.
    pub f: Vec<Expr>,
    /// `ζ = g(x, u)`.
    pub g: Vec<Expr>,
    /// Closed-form inverse of `(f, g)`, in `x` and `ζ_[-1]`.
    pub psi_x: Option<Vec<Expr>>,
    pub psi_u: Option<Vec<Expr>>,
    pub equilibrium: Equilibrium,
    pub raw: Option<RawForm>,
    xu_vars: Vec<ShiftedVar>,
    fg_tape: Tape,
    fg_jac_tape: Tape,
    psi_tape: Option<Tape>,
}

#[derive(Clone, Debug)]
pub struct FlatSpec {
    pub phi: Vec<Expr>,
    pub q1: usize,
    pub q2: usize,
    pub fx: Vec<Expr>,
    pub fu: Vec<Expr>,
    pub r: MultiIndex,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawFile {
    f: Vec<String>,
    input_transform: Vec<String>,
    input_transform_inverse: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    #[serde(default)]
    name: String,
    n: usize,
    m: usize,
    #[serde(default)]
    params: BTreeMap<String, Real>,
    f: Vec<String>,
    g: Vec<String>,
    #[serde(default)]
    psi_x: Option<Vec<String>>,
    #[serde(default)]
    psi_u: Option<Vec<String>>,
    phi: Vec<String>,
    q1: usize,
    q2: usize,
    #[serde(rename = "Fx")]
    fx: Vec<String>,
    #[serde(rename = "Fu")]
    fu: Vec<String>,
    #[serde(rename = "R")]
    r: Vec<usize>,
    equilibrium: Equilibrium,
    #[serde(default)]
    raw: Option<RawFile>,
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Model(format!("`{what}` has {got} entries, expected {want}")))
    }
}

fn check_blocks(what: &str, exprs: &[Expr], allowed: impl Fn(&ShiftedVar) -> bool) -> Result<()> {
    for (i, e) in exprs.iter().enumerate() {
        if let Some(v) = e.vars().into_iter().find(|v| !allowed(v)) {
            return Err(Error::InvariantViolation { which: format!("{what}[{}] variables", i + 1), at: format!("uses {v}") });
        }
    }
    Ok(())
}

impl DiscreteSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        n: usize,
        m: usize,
        f: Vec<Expr>,
        g: Vec<Expr>,
        psi: Option<(Vec<Expr>, Vec<Expr>)>,
        equilibrium: Equilibrium,
    ) -> Result<DiscreteSystem> {
        check_len("f", f.len(), n)?;
        check_len("g", g.len(), m)?;
        check_len("equilibrium.x", equilibrium.x.len(), n)?;
        check_len("equilibrium.u", equilibrium.u.len(), m)?;
        let n_ok = |v: &ShiftedVar| v.index() < match v.block {
            Block::State => n,
            _ => m,
        };
        let in_xu = |v: &ShiftedVar| n_ok(v) && (v.block == Block::State || (v.block == Block::Input && v.shift == 0));
        check_blocks("f", &f, in_xu)?;
        check_blocks("g", &g, in_xu)?;
        let xu_vars: Vec<ShiftedVar> =
            (1..=n).map(ShiftedVar::x).chain((1..=m).map(|j| ShiftedVar::u(j, 0))).collect();
        let fg: Vec<Expr> = f.iter().chain(&g).cloned().collect();
        let fg_tape = Tape::compile(&fg, &xu_vars)?;
        let jac: Vec<Expr> = fg.iter().flat_map(|e| xu_vars.iter().map(move |v| e.diff(v))).collect();
        let fg_jac_tape = Tape::compile(&jac, &xu_vars)?;
        let (psi_x, psi_u, psi_tape) = match psi {
            Some((px, pu)) => {
                check_len("psi_x", px.len(), n)?;
                check_len("psi_u", pu.len(), m)?;
                let in_xz =
                    |v: &ShiftedVar| n_ok(v) && (v.block == Block::State || (v.block == Block::Zeta && v.shift == -1));
                check_blocks("psi_x", &px, in_xz)?;
                check_blocks("psi_u", &pu, in_xz)?;
                let vars: Vec<ShiftedVar> =
                    (1..=n).map(ShiftedVar::x).chain((1..=m).map(|j| ShiftedVar::zeta(j, -1))).collect();
                let all: Vec<Expr> = px.iter().chain(&pu).cloned().collect();
                let tape = Tape::compile(&all, &vars)?;
                (Some(px), Some(pu), Some(tape))
            }
            None => (None, None, None),
        };
        Ok(DiscreteSystem {
            name: name.into(),
            n,
            m,
            params: BTreeMap::new(),
            f,
            g,
            psi_x,
            psi_u,
            equilibrium,
            raw: None,
            xu_vars,
            fg_tape,
            fg_jac_tape,
            psi_tape,
        })
    }

    pub fn state_vars(&self) -> Vec<ShiftedVar> {
        (1..=self.n).map(ShiftedVar::x).collect()
    }

    pub fn input_vars(&self, shift: i32) -> Vec<ShiftedVar> {
        (1..=self.m).map(|j| ShiftedVar::u(j, shift)).collect()
    }

    pub fn zeta_vars(&self, shift: i32) -> Vec<ShiftedVar> {
        (1..=self.m).map(|j| ShiftedVar::zeta(j, shift)).collect()
    }

    pub fn has_closed_form_psi(&self) -> bool {
        self.psi_tape.is_some()
    }

    fn xu(&self, x: &[Real], u: &[Real]) -> Result<Vec<Real>> {
        if x.len() != self.n || u.len() != self.m {
            return Err(Error::Dimension(format!(
                "expected x of length {} and u of length {}, got {} and {}",
                self.n,
                self.m,
                x.len(),
                u.len()
            )));
        }
        Ok(x.iter().chain(u).copied().collect())
    }

    /// `(f(x,u), g(x,u))`.
    pub fn step_and_extension(&self, x: &[Real], u: &[Real]) -> Result<(Vec<Real>, Vec<Real>)> {
        let mut out = self.fg_tape.eval(&self.xu(x, u)?)?;
        let zeta = out.split_off(self.n);
        Ok((out, zeta))
    }

    pub fn step(&self, x: &[Real], u: &[Real]) -> Result<Vec<Real>> {
        Ok(self.step_and_extension(x, u)?.0)
    }

    pub fn extension(&self, x: &[Real], u: &[Real]) -> Result<Vec<Real>> {
        Ok(self.step_and_extension(x, u)?.1)
    }

    /// `ζ₀ = g(x₀, u₀)`.
    pub fn zeta0(&self) -> Vec<Real> {
        self.extension(&self.equilibrium.x, &self.equilibrium.u).unwrap_or_else(|_| vec![Real::NAN; self.m])
    }

    /// Jacobian of `(f, g)` with respect to `(x, u)`.
    pub fn extension_jacobian(&self, x: &[Real], u: &[Real]) -> Result<DMatrix<Real>> {
        let k = self.n + self.m;
        let vals = self.fg_jac_tape.eval(&self.xu(x, u)?)?;
        Ok(DMatrix::from_row_slice(k, k, &vals))
    }

    /// Closed-form `(ψ_x, ψ_u)(x, ζ_[-1])`, if the model provides it.
    pub fn psi_closed(&self, x: &[Real], zeta_prev: &[Real]) -> Option<Result<(Vec<Real>, Vec<Real>)>> {
        let tape = self.psi_tape.as_ref()?;
        Some(self.xu(x, zeta_prev).and_then(|input| {
            let mut out = tape.eval(&input)?;
            let u = out.split_off(self.n);
            Ok((out, u))
        }))
    }

    /// `(ψ_x, ψ_u)` by Newton on `(f, g)(x̃, ũ) = (x, ζ_[-1])`, started at `guess`.
    pub fn psi_newton(
        &self,
        x: &[Real],
        zeta_prev: &[Real],
        guess: (&[Real], &[Real]),
    ) -> Result<(Vec<Real>, Vec<Real>)> {
        let target: Vec<Real> = self.xu(x, zeta_prev)?;
        let x0 = DVector::from_vec(self.xu(guess.0, guess.1)?);
        let k = self.n + self.m;
        let out = newton_solve(
            |p: &DVector<Real>| {
                let vals = self.fg_tape.eval(p.as_slice())?;
                let r = DVector::from_iterator(k, vals.iter().zip(&target).map(|(a, b)| a - b));
                let j = DMatrix::from_row_slice(k, k, &self.fg_jac_tape.eval(p.as_slice())?);
                Ok((r, j))
            },
            x0,
            &NewtonOptions::default(),
        )?;
        let mut v: Vec<Real> = out.x.iter().copied().collect();
        let u = v.split_off(self.n);
        Ok((v, u))
    }

    /// Inverse of the extension, closed form where available.
    pub fn psi(&self, x: &[Real], zeta_prev: &[Real], guess: (&[Real], &[Real])) -> Result<(Vec<Real>, Vec<Real>)> {
        match self.psi_closed(x, zeta_prev) {
            Some(r) => r,
            None => self.psi_newton(x, zeta_prev, guess),
        }
    }

    /// Equilibrium value of a manifold coordinate. `y_eq` supplies the
    /// flat-output value used for `y` and `v` coordinates.
    pub fn equilibrium_value(&self, v: &ShiftedVar, y_eq: &[Real]) -> Real {
        match v.block {
            Block::State => self.equilibrium.x[v.index()],
            Block::Input => self.equilibrium.u[v.index()],
            Block::Zeta => self.zeta0()[v.index()],
            Block::Output | Block::NewInput => y_eq.get(v.index()).copied().unwrap_or(0.0),
        }
    }

    pub fn xu_vars(&self) -> &[ShiftedVar] {
        &self.xu_vars
    }
}

impl FlatSpec {
    pub fn m(&self) -> usize {
        self.phi.len()
    }

    /// Flat output at the equilibrium.
    pub fn equilibrium_output(&self, sys: &DiscreteSystem) -> Result<Vec<Real>> {
        let mut p = Assignment::new();
        for e in &self.phi {
            for v in e.vars() {
                p.insert(v, sys.equilibrium_value(&v, &[]));
            }
        }
        self.phi.iter().map(|e| e.eval(&p)).collect()
    }

    fn check_structure(&self, sys: &DiscreteSystem) -> Result<()> {
        let m = sys.m;
        check_len("phi", self.phi.len(), m)?;
        check_len("Fx", self.fx.len(), sys.n)?;
        check_len("Fu", self.fu.len(), m)?;
        check_len("R", self.r.len(), m)?;
        let (q1, q2) = (self.q1 as i32, self.q2 as i32);
        check_blocks("phi", &self.phi, |v| match v.block {
            Block::State => v.index() < sys.n,
            Block::Input => v.index() < m && v.shift <= q2,
            Block::Zeta => v.index() < m && v.shift >= -q1,
            _ => false,
        })?;
        let r = &self.r;
        check_blocks("Fx", &self.fx, |v| v.block == Block::Output && v.index() < m && (v.shift as usize) < r[v.index()])?;
        check_blocks("Fu", &self.fu, |v| v.block == Block::Output && v.index() < m && v.shift as usize <= r[v.index()])?;
        Ok(())
    }
}

fn parse_list(what: &str, src: &[String], params: &HashMap<String, Real>) -> Result<Vec<Expr>> {
    src.iter()
        .enumerate()
        .map(|(i, s)| {
            parse_with_params(s, params).map(|e| e.simplify()).map_err(|e| match e {
                Error::Parse { offset, message } => Error::Parse { offset, message: format!("{what}[{}]: {message}", i + 1) },
                other => other,
            })
        })
        .collect()
}

/// Parses a model document without running the sampled checks.
pub fn parse_model_unchecked(json: &str) -> Result<(DiscreteSystem, FlatSpec)> {
    let file: ModelFile = serde_json::from_str(json)?;
    let params: HashMap<String, Real> = file.params.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let f = parse_list("f", &file.f, &params)?;
    let g = parse_list("g", &file.g, &params)?;
    let psi = match (&file.psi_x, &file.psi_u) {
        (Some(px), Some(pu)) => Some((parse_list("psi_x", px, &params)?, parse_list("psi_u", pu, &params)?)),
        (None, None) => None,
        _ => return Err(Error::Model("psi_x and psi_u must be given together".into())),
    };
    let mut sys = DiscreteSystem::new(file.name, file.n, file.m, f, g, psi, file.equilibrium)?;
    sys.params = file.params.clone();
    if let Some(raw) = &file.raw {
        let rf = parse_list("raw.f", &raw.f, &params)?;
        check_len("raw.f", rf.len(), sys.n)?;
        let it = parse_list("raw.input_transform", &raw.input_transform, &params)?;
        check_len("raw.input_transform", it.len(), sys.m)?;
        let inv = parse_list("raw.input_transform_inverse", &raw.input_transform_inverse, &params)?;
        check_len("raw.input_transform_inverse", inv.len(), sys.m)?;
        sys.raw = Some(RawForm { f: rf, input_transform: it, input_transform_inverse: inv });
    }
    let spec = FlatSpec {
        phi: parse_list("phi", &file.phi, &params)?,
        q1: file.q1,
        q2: file.q2,
        fx: parse_list("Fx", &file.fx, &params)?,
        fu: parse_list("Fu", &file.fu, &params)?,
        r: MultiIndex::new(file.r),
    };
    spec.check_structure(&sys)?;
    Ok((sys, spec))
}

/// Parses and validates a model document. The first failing check is
/// reported as [`Error::InvariantViolation`].
pub fn parse_model(json: &str, cfg: &SampleConfig) -> Result<(DiscreteSystem, FlatSpec)> {
    let (sys, spec) = parse_model_unchecked(json)?;
    let report = validate(&sys, &spec, cfg)?;
    if let Some(bad) = report.checks.iter().find(|c| !c.passed) {
        return Err(Error::InvariantViolation { which: bad.name.clone(), at: bad.detail.clone() });
    }
    Ok((sys, spec))
}

/// Reads and validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<(DiscreteSystem, FlatSpec)> {
    load_model_with(path, &SampleConfig::default())
}

pub fn load_model_with(path: impl AsRef<Path>, cfg: &SampleConfig) -> Result<(DiscreteSystem, FlatSpec)> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text, cfg)
}

/// Outcome of a rank test at a set of points.
#[derive(Clone, Debug, Serialize)]
pub struct RankReport {
    pub required: usize,
    pub ranks: Vec<usize>,
    /// Maximum observed rank.
    pub generic_rank: usize,
    pub passed: bool,
}

impl RankReport {
    fn from_ranks(ranks: Vec<usize>, required: usize) -> Self {
        let generic_rank = ranks.iter().copied().max().unwrap_or(0);
        if ranks.iter().any(|&r| r != generic_rank) {
            warn!("rank varies across samples ({:?}); possible singular locus", ranks);
        }
        let passed = !ranks.is_empty() && ranks.iter().all(|&r| r == required);
        RankReport { required, ranks, generic_rank, passed }
    }
}

fn xu_samples(sys: &DiscreteSystem, cfg: &SampleConfig) -> Vec<Assignment> {
    cfg.assignments(sys.xu_vars(), |v| sys.equilibrium_value(v, &[]), true)
}

/// Rank of `∂f/∂(x,u)` at the equilibrium and `cfg.count` perturbed points.
pub fn check_submersivity(sys: &DiscreteSystem, cfg: &SampleConfig) -> Result<RankReport> {
    let pts = xu_samples(sys, cfg);
    let mut ranks = Vec::with_capacity(pts.len());
    for p in &pts {
        let j = jacobian(&sys.f, sys.xu_vars(), p)?;
        let r = numeric_rank(&j);
        if r != sys.n {
            return Err(Error::RankDeficient { point: describe_point(p), rank: r, required: sys.n });
        }
        ranks.push(r);
    }
    Ok(RankReport::from_ranks(ranks, sys.n))
}

/// Regularity of the `(n+m)×(n+m)` Jacobian of `(f, g)`.
pub fn check_extension_regular(sys: &DiscreteSystem, cfg: &SampleConfig) -> Result<(RankReport, Real)> {
    let pts = xu_samples(sys, cfg);
    let mut ranks = Vec::new();
    let mut cond = Real::NAN;
    for (i, p) in pts.iter().enumerate() {
        let vals: Vec<Real> = sys.xu_vars().iter().map(|v| p[v]).collect();
        let j = sys.extension_jacobian(&vals[..sys.n], &vals[sys.n..])?;
        if i == 0 {
            cond = condition_number(&j);
        }
        ranks.push(numeric_rank(&j));
    }
    Ok((RankReport::from_ranks(ranks, sys.n + sys.m), cond))
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub max_residual: Real,
    pub worst_point: String,
    pub points: usize,
    pub passed: bool,
}

/// Shift orders `δ^α(φ^j)`, `α = 0..=r^j`, with their sampled manifold points.
fn flat_output_shifts(engine: &mut ShiftEngine, spec: &FlatSpec) -> Vec<Vec<Expr>> {
    spec.phi.iter().zip(spec.r.iter()).map(|(p, r)| engine.forward_chain(p, r)).collect()
}

/// Substitutes `y_[α] = δ^α(φ)` into `(F_x, F_u)` at sampled points and
/// compares with `(x, u)`.
pub fn check_flat_identity(sys: &DiscreteSystem, spec: &FlatSpec, cfg: &SampleConfig) -> Result<IdentityReport> {
    check_flat_identity_with(sys, spec, cfg, 1e-10)
}

pub fn check_flat_identity_with(
    sys: &DiscreteSystem,
    spec: &FlatSpec,
    cfg: &SampleConfig,
    tol: Real,
) -> Result<IdentityReport> {
    let mut engine = ShiftEngine::new(sys);
    let shifts = flat_output_shifts(&mut engine, spec);
    let mut vars: Vec<ShiftedVar> = shifts.iter().flatten().flat_map(|e| e.vars()).collect();
    vars.extend(sys.xu_vars());
    vars.sort();
    vars.dedup();
    let pts = cfg.assignments(&vars, |v| sys.equilibrium_value(v, &[]), false);
    let mut worst = (0.0, String::new());
    for p in &pts {
        let mut y = Assignment::new();
        for (j, chain) in shifts.iter().enumerate() {
            for (a, e) in chain.iter().enumerate() {
                y.insert(ShiftedVar::y(j + 1, a as i32), e.eval(p)?);
            }
        }
        let targets = sys.state_vars().into_iter().chain(sys.input_vars(0));
        for (expr, var) in spec.fx.iter().chain(&spec.fu).zip(targets) {
            let r = (expr.eval(&y)? - p[&var]).abs();
            if !(r <= worst.0) {
                worst = (r, describe_point(p));
            }
        }
    }
    Ok(IdentityReport { max_residual: worst.0, worst_point: worst.1, points: pts.len(), passed: worst.0 < tol })
}

/// Row rank of `∂(F_x, F_u)/∂y_[0,R]` at outputs sampled around the equilibrium output.
pub fn check_parameterization_rank(sys: &DiscreteSystem, spec: &FlatSpec, cfg: &SampleConfig) -> Result<RankReport> {
    let y_eq = spec.equilibrium_output(sys)?;
    let vars: Vec<ShiftedVar> = spec
        .r
        .iter()
        .enumerate()
        .flat_map(|(j, r)| (0..=r as i32).map(move |a| ShiftedVar::y(j + 1, a)))
        .collect();
    let pts = cfg.assignments(&vars, |v| y_eq[v.index()], false);
    let all: Vec<Expr> = spec.fx.iter().chain(&spec.fu).cloned().collect();
    let mut ranks = Vec::new();
    for p in &pts {
        ranks.push(numeric_rank(&jacobian(&all, &vars, p)?));
    }
    Ok(RankReport::from_ranks(ranks, sys.n + sys.m))
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: Option<Real>,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub sample_radius: Real,
    pub sample_count: usize,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Runs every sampled model check. Failures are recorded, not returned as errors.
pub fn validate(sys: &DiscreteSystem, spec: &FlatSpec, cfg: &SampleConfig) -> Result<ValidationReport> {
    validate_with(sys, spec, cfg, 1e-10)
}

/// [`validate`] with a custom flat-identity tolerance.
pub fn validate_with(sys: &DiscreteSystem, spec: &FlatSpec, cfg: &SampleConfig, identity_tol: Real) -> Result<ValidationReport> {
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, value: Option<Real>, detail: String| {
        checks.push(CheckResult { name: name.to_string(), passed, value, detail })
    };

    let fx = sys.step(&sys.equilibrium.x, &sys.equilibrium.u)?;
    let fixed = fx.iter().zip(&sys.equilibrium.x).map(|(a, b)| (a - b).abs()).fold(0.0, Real::max);
    push("equilibrium", fixed < 1e-10, Some(fixed), format!("|f(x0,u0) - x0| = {fixed:.3e}"));

    match check_submersivity(sys, cfg) {
        Ok(r) => push("submersivity", r.passed, Some(r.generic_rank as Real), format!("rank {} of {}", r.generic_rank, sys.n)),
        Err(Error::RankDeficient { point, rank, required }) => {
            push("submersivity", false, Some(rank as Real), format!("rank {rank} < {required} at {point}"))
        }
        Err(e) => return Err(e),
    }

    let (ext, cond) = check_extension_regular(sys, cfg)?;
    push(
        "extension regular",
        ext.passed,
        Some(cond),
        format!("ranks {:?}, required {}, condition number at equilibrium {cond:.3e}", ext.ranks, ext.required),
    );

    let par = check_parameterization_rank(sys, spec, cfg)?;
    push(
        "parameterization submersion",
        par.passed,
        Some(par.generic_rank as Real),
        format!("rank {} of {}", par.generic_rank, par.required),
    );

    let id = check_flat_identity_with(sys, spec, cfg, identity_tol)?;
    push("flat identity", id.passed, Some(id.max_residual), format!("max residual {:.3e} at {}", id.max_residual, id.worst_point));

    if sys.has_closed_form_psi() {
        let (worst, at) = psi_cross_check(sys, cfg)?;
        push("psi closed form", worst < 1e-9, Some(worst), format!("max deviation from Newton {worst:.3e} at {at}"));
    }

    Ok(ValidationReport { model: sys.name.clone(), sample_radius: cfg.radius, sample_count: cfg.count, checks })
}

/// Largest deviation of the closed-form inverse from the Newton inverse and
/// from the true preimage, over sampled `(x, u)`.
pub fn psi_cross_check(sys: &DiscreteSystem, cfg: &SampleConfig) -> Result<(Real, String)> {
    let mut worst = (0.0, String::new());
    for p in xu_samples(sys, cfg) {
        let vals: Vec<Real> = sys.xu_vars().iter().map(|v| p[v]).collect();
        let (x, u) = vals.split_at(sys.n);
        let (xn, zeta) = sys.step_and_extension(x, u)?;
        let (cx, cu) = sys.psi_closed(&xn, &zeta).ok_or(Error::NoClosedFormPsi)??;
        let (nx, nu) = sys.psi_newton(&xn, &zeta, (&xn, &sys.equilibrium.u))?;
        let dev = cx
            .iter()
            .chain(&cu)
            .zip(nx.iter().chain(&nu))
            .chain(cx.iter().chain(&cu).zip(x.iter().chain(u)))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, Real::max);
        if !(dev <= worst.0) {
            worst = (dev, describe_point(&p));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;

    #[test]
    fn shipped_models_validate() {
        for name in zoo::NAMES {
            let (sys, spec) = zoo::by_name(name).unwrap();
            let report = validate(&sys, &spec, &SampleConfig::default()).unwrap();
            for c in &report.checks {
                assert!(c.passed, "{name}: {} {}", c.name, c.detail);
            }
        }
    }

    #[test]
    fn submersivity_of_shipped_models() {
        let cfg = SampleConfig::default();
        for (sys, _) in [zoo::example1(), zoo::robot(), zoo::helicopter()] {
            let r = check_submersivity(&sys, &cfg).unwrap();
            assert_eq!(r.generic_rank, sys.n);
            assert!(r.passed);
        }
    }

    #[test]
    fn degenerate_system_is_not_submersive() {
        let zero = Expr::zero();
        let sys = DiscreteSystem::new(
            "zero",
            1,
            1,
            vec![zero.clone()],
            vec![Expr::var(ShiftedVar::u(1, 0))],
            None,
            Equilibrium { x: vec![0.0], u: vec![0.0] },
        )
        .unwrap();
        match check_submersivity(&sys, &SampleConfig::default()) {
            Err(Error::RankDeficient { rank, required, .. }) => assert_eq!((rank, required), (0, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn perturbed_parameterization_fails_identity() {
        let (sys, mut spec) = zoo::example1();
        spec.fu[0] = spec.fu[0].clone() + 1e-3;
        let r = check_flat_identity(&sys, &spec, &SampleConfig::default()).unwrap();
        assert!(!r.passed);
        assert!((r.max_residual - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn structural_violation_is_reported() {
        let json = zoo::EXAMPLE1_JSON.replace("\"q1\": 0", "\"q1\": 0").replace("\"phi\": [\n    \"(var x 1 0)\"", "\"phi\": [\n    \"(var z 1 -1)\"");
        assert!(matches!(parse_model_unchecked(&json), Err(Error::InvariantViolation { .. })));
    }

    #[test]
    fn psi_matches_newton() {
        let (sys, _) = zoo::robot();
        let (worst, _) = psi_cross_check(&sys, &SampleConfig::default()).unwrap();
        assert!(worst < 1e-9, "{worst}");
    }
}
