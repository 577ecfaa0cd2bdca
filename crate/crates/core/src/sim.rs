//! Deterministic open- and closed-loop simulation with residual checks and
//! CSV output.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Assignment, Block, Expr, ShiftedVar};
use crate::feedback::{FeedbackInput, FeedbackLaw, LawKind};
use crate::multi_index::MultiIndex;
use crate::sampling::SampleConfig;
use crate::system::{CheckResult, DiscreteSystem, FlatSpec};
use crate::tracking::TrackingLaw;
use crate::Real;

/// Residual tolerances of the simulation checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub io: Real,
    pub recursion: Real,
    pub deadbeat: Real,
    pub replay: Real,
    pub raw: Real,
    pub identity: Real,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { io: 1e-8, recursion: 1e-8, deadbeat: 1e-9, replay: 1e-12, raw: 1e-10, identity: 1e-10 }
    }
}

impl Tolerances {
    /// `"1e-6"` sets every tolerance; `"io=1e-6,deadbeat=1e-8"` sets some.
    pub fn parse(s: &str) -> Result<Self> {
        let mut t = Tolerances::default();
        let bad = |p: &str| Error::Model(format!("bad tolerance `{p}`"));
        if let Ok(all) = s.trim().parse::<Real>() {
            return Ok(Tolerances { io: all, recursion: all, deadbeat: all, replay: all, raw: all, identity: all });
        }
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| bad(part))?;
            let v: Real = v.trim().parse().map_err(|_| bad(part))?;
            match k.trim() {
                "io" => t.io = v,
                "recursion" => t.recursion = v,
                "deadbeat" => t.deadbeat = v,
                "replay" => t.replay = v,
                "raw" => t.raw = v,
                "identity" => t.identity = v,
                _ => return Err(bad(part)),
            }
        }
        Ok(t)
    }

    /// Defaults, overridden by `FLATLIN_TOL` when set.
    pub fn from_env() -> Result<Self> {
        match std::env::var("FLATLIN_TOL") {
            Ok(s) => Self::parse(&s),
            Err(_) => Ok(Self::default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub k: usize,
    pub x: Vec<Real>,
    pub u: Vec<Real>,
    pub zeta: Vec<Real>,
    /// `φ` along the trajectory; NaN where it needs data past the horizon.
    pub y: Vec<Real>,
    /// New input `v(k)`; empty in open loop.
    pub v: Vec<Real>,
    /// Reference `y^d(k)`; empty unless tracking.
    pub yd: Vec<Real>,
    /// `y − y^d`; empty unless tracking.
    pub e: Vec<Real>,
    /// Input of the raw model, when the system carries one.
    pub raw_u: Vec<Real>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrajectoryMeta {
    pub model: String,
    pub law: String,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub n: usize,
    pub m: usize,
    /// `ζ(−1), ζ(−2), …` before the first step.
    pub zeta_init: Vec<Vec<Real>>,
    pub records: Vec<StepRecord>,
    /// `x(N)`.
    pub final_x: Vec<Real>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.records.len()
    }

    pub fn is_tracking(&self) -> bool {
        self.records.first().is_some_and(|r| !r.e.is_empty())
    }

    fn zeta_at(&self, k: i64) -> Option<&[Real]> {
        if k >= 0 {
            self.records.get(k as usize).map(|r| r.zeta.as_slice())
        } else {
            self.zeta_init.get((-k - 1) as usize).map(|z| z.as_slice())
        }
    }

    /// Fills `y` (and `e` where a reference is logged) from the logged data.
    pub fn compute_outputs(&mut self, phi: &[Expr]) -> Result<()> {
        for k in 0..self.records.len() {
            let mut y = Vec::with_capacity(phi.len());
            for e in phi {
                y.push(self.eval_along(e, k)?.unwrap_or(Real::NAN));
            }
            let r = &mut self.records[k];
            if !r.yd.is_empty() {
                r.e = y.iter().zip(&r.yd).map(|(a, b)| a - b).collect();
            }
            r.y = y;
        }
        Ok(())
    }

    /// `e` evaluated at step `k`, or `None` when it reads outside the log.
    pub fn eval_along(&self, e: &Expr, k: usize) -> Result<Option<Real>> {
        let mut p = Assignment::new();
        for v in e.vars() {
            let val = match v.block {
                Block::State if v.shift == 0 => self.records.get(k).map(|r| r.x[v.index()]),
                Block::Input => {
                    let t = k as i64 + v.shift as i64;
                    if t < 0 {
                        None
                    } else {
                        self.records.get(t as usize).map(|r| r.u[v.index()])
                    }
                }
                Block::Zeta => self.zeta_at(k as i64 + v.shift as i64).map(|z| z[v.index()]),
                _ => return Err(Error::InvalidVariable(format!("{v} cannot be read from a trajectory"))),
            };
            match val {
                Some(x) => {
                    p.insert(v, x);
                }
                None => return Ok(None),
            }
        }
        e.eval(&p).map(Some)
    }
}

/// Per-component `max_k |y^j(k+a^j) − v^j(k)|` over the steps inside the log.
#[derive(Clone, Debug, Serialize)]
pub struct IoReport {
    #[serde(rename = "A")]
    pub a: MultiIndex,
    pub max_residual: Vec<Real>,
    pub checked: Vec<usize>,
}

impl IoReport {
    pub fn max(&self) -> Real {
        self.max_residual.iter().copied().fold(0.0, Real::max)
    }
}

pub fn verify_io_behavior(traj: &Trajectory, a: &MultiIndex) -> IoReport {
    let m = a.len();
    let mut max_residual = vec![0.0; m];
    let mut checked = vec![0; m];
    for j in 0..m {
        for (k, r) in traj.records.iter().enumerate() {
            let Some(later) = traj.records.get(k + a[j]) else { break };
            let (Some(v), y) = (r.v.get(j), later.y[j]) else { continue };
            if y.is_nan() {
                continue;
            }
            max_residual[j] = Real::max(max_residual[j], (y - v).abs());
            checked[j] += 1;
        }
    }
    IoReport { a: a.clone(), max_residual, checked }
}

/// Per-component `max_k |e(k+κ) + Σ_β a^β e(k+β)|`.
pub fn error_recursion_residual(traj: &Trajectory, coeffs: &[Vec<Real>]) -> Vec<Real> {
    coeffs
        .iter()
        .enumerate()
        .map(|(j, a)| {
            let kap = a.len();
            let mut worst: Real = 0.0;
            for k in 0..traj.records.len().saturating_sub(kap) {
                let e = |i: usize| traj.records[k + i].e.get(j).copied().unwrap_or(Real::NAN);
                let res = e(kap) + a.iter().enumerate().map(|(b, ab)| ab * e(b)).sum::<Real>();
                if !res.is_nan() {
                    worst = worst.max(res.abs());
                }
            }
            worst
        })
        .collect()
}

/// Largest `|x(k+1) − f(x(k),u(k))|` and `|ζ(k) − g(x(k),u(k))|`.
pub fn replay_residual(sys: &DiscreteSystem, traj: &Trajectory) -> Result<(Real, Real)> {
    let (mut dx, mut dz): (Real, Real) = (0.0, 0.0);
    for (k, r) in traj.records.iter().enumerate() {
        let (xn, z) = sys.step_and_extension(&r.x, &r.u).map_err(|e| e.at_step(k))?;
        let next = traj.records.get(k + 1).map(|n| &n.x).unwrap_or(&traj.final_x);
        dx = xn.iter().zip(next).map(|(a, b)| (a - b).abs()).fold(dx, Real::max);
        dz = z.iter().zip(&r.zeta).map(|(a, b)| (a - b).abs()).fold(dz, Real::max);
    }
    Ok((dx, dz))
}

fn eval_list(exprs: &[Expr], x: &[Real], u: &[Real]) -> Result<Vec<Real>> {
    let mut p = Assignment::new();
    for (i, v) in x.iter().enumerate() {
        p.insert(ShiftedVar::x(i + 1), *v);
    }
    for (j, v) in u.iter().enumerate() {
        p.insert(ShiftedVar::u(j + 1, 0), *v);
    }
    exprs.iter().map(|e| e.eval(&p)).collect()
}

/// Raw input from the simplified one; empty when the system has no raw form.
pub fn raw_input(sys: &DiscreteSystem, x: &[Real], u: &[Real]) -> Result<Vec<Real>> {
    match &sys.raw {
        Some(raw) => eval_list(&raw.input_transform_inverse, x, u),
        None => Ok(Vec::new()),
    }
}

/// Simplified input from the raw one.
pub fn simplified_input(sys: &DiscreteSystem, x: &[Real], raw_u: &[Real]) -> Result<Vec<Real>> {
    match &sys.raw {
        Some(raw) => eval_list(&raw.input_transform, x, raw_u),
        None => Err(Error::Model(format!("{} has no raw form", sys.name))),
    }
}

/// Largest deviation of the raw model step from the logged next state.
pub fn raw_replay_residual(sys: &DiscreteSystem, traj: &Trajectory) -> Result<Option<Real>> {
    let Some(raw) = &sys.raw else { return Ok(None) };
    let mut worst: Real = 0.0;
    for (k, r) in traj.records.iter().enumerate() {
        let xn = eval_list(&raw.f, &r.x, &r.raw_u).map_err(|e| e.at_step(k))?;
        let next = traj.records.get(k + 1).map(|n| &n.x).unwrap_or(&traj.final_x);
        worst = xn.iter().zip(next).map(|(a, b)| (a - b).abs()).fold(worst, Real::max);
    }
    Ok(Some(worst))
}

fn default_zeta_init(sys: &DiscreteSystem, q1: usize, given: Option<&[Vec<Real>]>) -> Result<Vec<Vec<Real>>> {
    match given {
        Some(h) if h.len() >= q1 && h.iter().all(|z| z.len() == sys.m) => Ok(h.to_vec()),
        Some(h) => Err(Error::Dimension(format!("zeta history has {} entries, need {q1} of length {}", h.len(), sys.m))),
        None => Ok(vec![sys.zeta0(); q1]),
    }
}

fn record(sys: &DiscreteSystem, k: usize, x: &[Real], u: Vec<Real>, zeta: Vec<Real>) -> Result<StepRecord> {
    let raw_u = raw_input(sys, x, &u).map_err(|e| e.at_step(k))?;
    Ok(StepRecord { k, x: x.to_vec(), u, zeta, y: Vec::new(), v: Vec::new(), yd: Vec::new(), e: Vec::new(), raw_u })
}

pub fn simulate_open_loop(
    sys: &DiscreteSystem,
    spec: &FlatSpec,
    x0: &[Real],
    u_seq: &[Vec<Real>],
    zeta_init: Option<&[Vec<Real>]>,
) -> Result<Trajectory> {
    if x0.len() != sys.n {
        return Err(Error::Dimension(format!("x0 has {} entries, expected {}", x0.len(), sys.n)));
    }
    let mut x = x0.to_vec();
    let mut records = Vec::with_capacity(u_seq.len());
    for (k, u) in u_seq.iter().enumerate() {
        if u.len() != sys.m {
            return Err(Error::Dimension(format!("input has {} entries, expected {}", u.len(), sys.m)).at_step(k));
        }
        let (xn, zeta) = sys.step_and_extension(&x, u).map_err(|e| e.at_step(k))?;
        records.push(record(sys, k, &x, u.clone(), zeta)?);
        x = xn;
    }
    let mut traj = Trajectory {
        meta: TrajectoryMeta { model: sys.name.clone(), law: "open_loop".into(), seed: None },
        n: sys.n,
        m: sys.m,
        zeta_init: default_zeta_init(sys, spec.q1, zeta_init)?,
        records,
        final_x: x,
    };
    traj.compute_outputs(&spec.phi)?;
    Ok(traj)
}

/// Feedback law with a `v` sequence, or tracking law with a reference.
/// Sequences are indexed by step; reads past the end hold the last entry.
#[derive(Clone, Copy, Debug)]
pub enum Controller<'a> {
    Feedback { law: &'a FeedbackLaw, v: &'a [Vec<Real>] },
    Tracking { law: &'a TrackingLaw, reference: &'a [Vec<Real>] },
}

impl Controller<'_> {
    fn label(&self) -> String {
        match self {
            Controller::Feedback { law, .. } => format!("{} A={}", law.kind, law.a),
            Controller::Tracking { law, .. } => format!("tracking kappa={:?}", law.kappa),
        }
    }
}

fn window(seq: &[Vec<Real>], k: usize, j: usize, len: usize) -> Result<Vec<Real>> {
    if seq.is_empty() {
        return Err(Error::Dimension("empty input sequence".into()));
    }
    (0..len)
        .map(|i| {
            seq[(k + i).min(seq.len() - 1)]
                .get(j)
                .copied()
                .ok_or_else(|| Error::Dimension(format!("sequence entry has no component {}", j + 1)))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ClosedLoopConfig {
    pub x0: Vec<Real>,
    /// `ζ(−1), ζ(−2), …`; the equilibrium `ζ₀` by default.
    pub zeta_init: Option<Vec<Vec<Real>>>,
    pub horizon: usize,
    pub seed: Option<u64>,
    pub tol: Tolerances,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimReport {
    pub model: String,
    pub law: String,
    pub horizon: usize,
    pub io: IoReport,
    /// Per-component error recursion residual; tracking only.
    pub recursion: Option<Vec<Real>>,
    /// `#κ`, the total order of the error dynamics; tracking only.
    pub error_order: Option<usize>,
    pub max_newton_residual: Real,
    pub tol: Tolerances,
    pub checks: Vec<CheckResult>,
}

impl SimReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Partial trajectory of a run that stopped on an error.
#[derive(Debug, thiserror::Error)]
#[error("{source}")]
pub struct SimAbort {
    #[source]
    pub source: Error,
    pub partial: Box<Trajectory>,
}

impl From<SimAbort> for Error {
    fn from(a: SimAbort) -> Error {
        a.source
    }
}

pub fn simulate_closed_loop(
    sys: &DiscreteSystem,
    spec: &FlatSpec,
    ctrl: Controller,
    cfg: &ClosedLoopConfig,
) -> std::result::Result<(Trajectory, SimReport), SimAbort> {
    let abort = |source: Error, partial: Trajectory| SimAbort { source, partial: Box::new(partial) };
    let mut traj = Trajectory {
        meta: TrajectoryMeta { model: sys.name.clone(), law: ctrl.label(), seed: cfg.seed },
        n: sys.n,
        m: sys.m,
        zeta_init: Vec::new(),
        records: Vec::with_capacity(cfg.horizon),
        final_x: cfg.x0.clone(),
    };
    if cfg.x0.len() != sys.n {
        let e = Error::Dimension(format!("x0 has {} entries, expected {}", cfg.x0.len(), sys.n));
        return Err(abort(e, traj));
    }
    match default_zeta_init(sys, spec.q1, cfg.zeta_init.as_deref()) {
        Ok(h) => traj.zeta_init = h,
        Err(e) => return Err(abort(e, traj)),
    }
    let mut hist: Vec<Vec<Real>> = traj.zeta_init.clone();
    let mut x = cfg.x0.clone();
    let mut z = match ctrl {
        Controller::Feedback { law, .. } if law.kind == LawKind::Dynamic => match law.initial_z(sys, &hist, &x) {
            Ok(z) => z,
            Err(e) => return Err(abort(e, traj)),
        },
        _ => Vec::new(),
    };
    let mut warm: Option<Vec<Real>> = None;
    let mut newton: Real = 0.0;
    for k in 0..cfg.horizon {
        let step = || -> Result<(Vec<Real>, Vec<Real>, Vec<Real>, Vec<Real>, Real, Vec<Real>)> {
            match ctrl {
                Controller::Feedback { law, v } => {
                    let vw = law.window().iter().enumerate().map(|(j, &w)| window(v, k, j, w)).collect::<Result<Vec<_>>>()?;
                    let input = FeedbackInput { zeta_hist: &hist, x: &x, z: &z, v: &vw };
                    let ev = law.evaluate(&input, warm.as_deref())?;
                    let v0 = vw.iter().map(|w| w[0]).collect();
                    Ok((ev.u, v0, Vec::new(), ev.z_next, ev.residual, ev.solution))
                }
                Controller::Tracking { law, reference } => {
                    let yd = law.reference_window().iter().enumerate().map(|(j, &w)| window(reference, k, j, w)).collect::<Result<Vec<_>>>()?;
                    let out = law.step(&hist, &x, &yd, warm.as_deref())?;
                    let fb = out.feedback.expect("tracking step solves the feedback law");
                    let v0 = out.v.iter().map(|w| w[0]).collect();
                    let yd0 = yd.iter().map(|w| w[0]).collect();
                    Ok((out.u, v0, yd0, Vec::new(), fb.residual, fb.solution))
                }
            }
        };
        let (u, v, yd, z_next, res, sol) = match step() {
            Ok(s) => s,
            Err(e) => {
                traj.final_x = x;
                let _ = traj.compute_outputs(&spec.phi);
                return Err(abort(e.at_step(k), traj));
            }
        };
        newton = newton.max(res);
        let (xn, zeta) = match sys.step_and_extension(&x, &u) {
            Ok(s) => s,
            Err(e) => {
                traj.final_x = x;
                return Err(abort(e.at_step(k), traj));
            }
        };
        let mut rec = match record(sys, k, &x, u, zeta.clone()) {
            Ok(r) => r,
            Err(e) => {
                traj.final_x = x;
                return Err(abort(e, traj));
            }
        };
        rec.v = v;
        rec.yd = yd;
        traj.records.push(rec);
        if spec.q1 > 0 {
            hist.insert(0, zeta);
            hist.truncate(spec.q1);
        }
        x = xn;
        z = z_next;
        warm = Some(sol);
    }
    traj.final_x = x;
    if let Err(e) = traj.compute_outputs(&spec.phi) {
        return Err(abort(e, traj));
    }
    match build_report(sys, &traj, ctrl, cfg, newton) {
        Ok(rep) => Ok((traj, rep)),
        Err(e) => Err(abort(e, traj)),
    }
}

fn build_report(
    sys: &DiscreteSystem,
    traj: &Trajectory,
    ctrl: Controller,
    cfg: &ClosedLoopConfig,
    newton: Real,
) -> Result<SimReport> {
    let tol = cfg.tol;
    let mut checks = Vec::new();
    let mut push = |name: &str, value: Real, limit: Real, detail: String| {
        checks.push(CheckResult { name: name.into(), passed: value < limit, value: Some(value), detail })
    };
    let a = match ctrl {
        Controller::Feedback { law, .. } => law.a.clone(),
        Controller::Tracking { law, .. } => MultiIndex::new(law.kappa.clone()),
    };
    let io = verify_io_behavior(traj, &a);
    push("io behaviour", io.max(), tol.io, format!("per component {:?}, steps checked {:?}", io.max_residual, io.checked));
    let (dx, dz) = replay_residual(sys, traj)?;
    push("state replay", dx, tol.replay.max(Real::MIN_POSITIVE), format!("max |x(k+1) - f(x(k),u(k))| = {dx:.3e}"));
    push("zeta replay", dz, tol.replay.max(Real::MIN_POSITIVE), format!("max |zeta(k) - g(x(k),u(k))| = {dz:.3e}"));
    if let Some(raw) = raw_replay_residual(sys, traj)? {
        push("raw model replay", raw, tol.raw, format!("max deviation of the raw step {raw:.3e}"));
    }
    let (mut recursion, mut order) = (None, None);
    if let Controller::Tracking { law, .. } = ctrl {
        let rec = error_recursion_residual(traj, &law.coeffs);
        let worst = rec.iter().copied().fold(0.0, Real::max);
        push("error recursion", worst, tol.recursion, format!("per component {rec:?}"));
        recursion = Some(rec);
        order = Some(law.kappa.iter().sum());
        if law.coeffs.iter().flatten().all(|c| *c == 0.0) {
            let start = law.kappa.iter().copied().max().unwrap_or(0);
            let worst = traj.records.iter().skip(start).flat_map(|r| r.e.iter()).filter(|e| !e.is_nan()).map(|e| e.abs()).fold(0.0, Real::max);
            push("dead-beat", worst, tol.deadbeat, format!("max |e(k)| for k >= {start}"));
        }
    }
    Ok(SimReport {
        model: sys.name.clone(),
        law: traj.meta.law.clone(),
        horizon: traj.horizon(),
        io,
        recursion,
        error_order: order,
        max_newton_residual: newton,
        tol,
        checks,
    })
}

/// Bounded random `v` sequence: `base(k) + U(−amplitude, amplitude)` per entry.
pub fn random_sequence(
    base: impl Fn(usize) -> Vec<Real>,
    len: usize,
    amplitude: Real,
    seed: u64,
) -> Vec<Vec<Real>> {
    let mut rng = SampleConfig::default().with_seed(seed).rng();
    (0..len).map(|k| base(k).into_iter().map(|b| b + rng.gen_range(-amplitude..=amplitude)).collect()).collect()
}

fn header(n: usize, m: usize, tracking: bool) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.extend((1..=m).map(|i| format!("u{i}")));
    h.extend((1..=m).map(|i| format!("y{i}")));
    if tracking {
        h.extend((1..=m).map(|i| format!("e{i}")));
    }
    h
}

/// Columns `k, x…, u…, y…, e…`; `e` only for tracking runs.
pub fn write_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let tracking = traj.is_tracking();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(traj.n, traj.m, tracking))?;
    for r in &traj.records {
        let mut row = vec![r.k.to_string()];
        row.extend(r.x.iter().chain(&r.u).chain(&r.y).map(|v| v.to_string()));
        if tracking {
            row.extend(r.e.iter().map(|v| v.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a trajectory CSV. `ζ`, `v` and reference columns are not stored
/// and come back empty.
pub fn read_csv<R: Read>(input: R, n: usize, m: usize) -> Result<Vec<StepRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let hdr: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let tracking = hdr.len() == 1 + n + 3 * m;
    if hdr != header(n, m, tracking) {
        return Err(Error::Dimension(format!("unexpected CSV header {hdr:?}")));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let k: usize = row[0].parse().map_err(|_| Error::Model(format!("bad step index `{}`", &row[0])))?;
        let vals: Vec<Real> = row
            .iter()
            .skip(1)
            .map(|s| s.parse::<Real>().map_err(|_| Error::Model(format!("bad number `{s}`"))))
            .collect::<Result<_>>()?;
        let (x, rest) = vals.split_at(n);
        let (u, rest) = rest.split_at(m);
        let (y, e) = rest.split_at(m);
        out.push(StepRecord {
            k,
            x: x.to_vec(),
            u: u.to_vec(),
            zeta: Vec::new(),
            y: y.to_vec(),
            v: Vec::new(),
            yd: Vec::new(),
            e: e.to_vec(),
            raw_u: Vec::new(),
        });
    }
    Ok(out)
}

/// Plain numeric table `k, c1, …, cm` (header required), as used for `v`
/// and reference sequences. The first column is ignored.
pub fn read_sequence<R: Read>(input: R) -> Result<Vec<Vec<Real>>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        out.push(
            row.iter()
                .skip(1)
                .map(|s| s.trim().parse::<Real>().map_err(|_| Error::Model(format!("bad number `{s}`"))))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(out)
}

pub fn write_sequence<W: Write>(seq: &[Vec<Real>], prefix: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let m = seq.first().map_or(0, Vec::len);
    let mut h = vec!["k".to_string()];
    h.extend((1..=m).map(|j| format!("{prefix}{j}")));
    w.write_record(&h)?;
    for (k, row) in seq.iter().enumerate() {
        let mut r = vec![k.to_string()];
        r.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// `trajectory.csv` plus one SVG per signal group; returns the written paths.
pub fn emit(traj: &Trajectory, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("trajectory.csv");
    write_csv(traj, std::fs::File::create(&csv_path)?)?;
    let mut paths = vec![csv_path];
    let groups: [(&str, fn(&StepRecord) -> &Vec<Real>); 4] =
        [("x", |r| &r.x), ("u", |r| &r.u), ("y", |r| &r.y), ("e", |r| &r.e)];
    for (name, get) in groups {
        if name == "e" && !traj.is_tracking() {
            continue;
        }
        let width = traj.records.first().map_or(0, |r| get(r).len());
        let series: Vec<(String, Vec<Real>)> =
            (0..width).map(|i| (format!("{name}{}", i + 1), traj.records.iter().map(|r| get(r)[i]).collect())).collect();
        let p = dir.join(format!("{name}.svg"));
        std::fs::write(&p, crate::plot::svg(name, &series))?;
        paths.push(p);
    }
    Ok(paths)
}
