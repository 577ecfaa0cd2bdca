//! Flatness-based tracking on top of the quasi-static law with `A = κ`.

use nalgebra::{Complex, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Block, Expr, JacobianTape, ShiftedVar, Tape};
use crate::feedback::{FeedbackEval, FeedbackInput, FeedbackLaw};
use crate::kappa::KappaResult;
use crate::linalg::min_norm_solve;
use crate::sampling::SampleConfig;
use crate::shift::ShiftEngine;
use crate::system::{DiscreteSystem, FlatSpec};
use crate::Real;

/// Coefficients `a^β`, `β = 0..k−1`, of the monic polynomial `Π(z − λ)`.
pub fn coeffs_from_eigenvalues(eigs: &[Complex<Real>]) -> Result<Vec<Real>> {
    const IM_TOL: Real = 1e-12;
    for l in eigs {
        if l.norm() >= 1.0 {
            return Err(Error::UnstableEigenvalue(format!("{l}")));
        }
    }
    let mut used = vec![false; eigs.len()];
    for i in 0..eigs.len() {
        if used[i] || eigs[i].im.abs() <= IM_TOL {
            continue;
        }
        used[i] = true;
        let partner = (0..eigs.len()).find(|&k| !used[k] && (eigs[k] - eigs[i].conj()).norm() <= IM_TOL);
        match partner {
            Some(k) => used[k] = true,
            None => return Err(Error::NonConjugatePair(format!("{}", eigs[i]))),
        }
    }
    // ascending powers
    let mut poly = vec![Complex::new(1.0, 0.0)];
    for l in eigs {
        let mut next = vec![Complex::new(0.0, 0.0); poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * l;
        }
        poly = next;
    }
    poly.pop();
    Ok(poly.iter().map(|c| c.re).collect())
}

/// Parses `re`, `re+imi` or `re-imi`.
pub fn parse_complex(s: &str) -> Result<Complex<Real>> {
    let bad = || Error::Model(format!("bad eigenvalue `{s}`"));
    let t = s.trim();
    if let Some(body) = t.strip_suffix('i') {
        let split = body.char_indices().skip(1).filter(|(_, c)| *c == '+' || *c == '-').last().map(|(i, _)| i);
        return match split {
            Some(i) if !body[..i].ends_with(['e', 'E']) => {
                let re: Real = body[..i].parse().map_err(|_| bad())?;
                let im_txt = &body[i..];
                let im: Real = match im_txt {
                    "+" => 1.0,
                    "-" => -1.0,
                    _ => im_txt.parse().map_err(|_| bad())?,
                };
                Ok(Complex::new(re, im))
            }
            _ => Ok(Complex::new(0.0, body.parse().map_err(|_| bad())?)),
        };
    }
    Ok(Complex::new(t.parse().map_err(|_| bad())?, 0.0))
}

/// Per-component eigenvalue lists: components separated by `;`, values by `,`.
/// A single list applies to every component.
pub fn parse_poles(s: &str, m: usize) -> Result<Vec<Vec<Complex<Real>>>> {
    let groups: Vec<Vec<Complex<Real>>> = s
        .split(';')
        .map(|g| g.split(',').filter(|t| !t.trim().is_empty()).map(parse_complex).collect())
        .collect::<Result<_>>()?;
    match groups.len() {
        1 => Ok(vec![groups[0].clone(); m]),
        k if k == m => Ok(groups),
        k => Err(Error::Dimension(format!("{k} pole groups for {m} components"))),
    }
}

/// Pole lists matched to `κ`: a lone eigenvalue is repeated `κ^j` times.
pub fn poles_for(s: &str, kappa: &[usize]) -> Result<Vec<Vec<Complex<Real>>>> {
    let groups = parse_poles(s, kappa.len())?;
    groups
        .into_iter()
        .zip(kappa)
        .map(|(g, &k)| match g.len() {
            n if n == k => Ok(g),
            1 => Ok(vec![g[0]; k]),
            n => Err(Error::Dimension(format!("{n} eigenvalues given for a component with kappa {k}"))),
        })
        .collect()
}

/// Numeric predictions of `δ^β(φ^j)`, `β < κ^j`, for one block, using the
/// equations of earlier blocks.
#[derive(Clone, Debug)]
struct Predictor {
    /// `(component, β)` in evaluation order.
    targets: Vec<(usize, usize)>,
    /// `(component, α)` of the earlier-block equations `δ^{κ+α}(φ) = v_[α]`.
    equations: Vec<(usize, usize)>,
    unknowns: Vec<ShiftedVar>,
    guess: Vec<Real>,
    target_tape: Tape,
    residual_tape: Tape,
    jacobian_tape: JacobianTape,
}

#[derive(Clone, Debug)]
pub struct TrackingLaw {
    pub law: FeedbackLaw,
    /// Block structure: `(outputs, κ)` per block, 0-based components.
    pub blocks: Vec<Vec<usize>>,
    /// `a^{j,β}` per component.
    pub coeffs: Vec<Vec<Real>>,
    pub kappa: Vec<usize>,
    pub r: Vec<usize>,
    predictors: Vec<Predictor>,
    q1: usize,
    n: usize,
}

/// One evaluation of the tracking law with its read trace.
#[derive(Clone, Debug, Serialize)]
pub struct TrackingEval {
    pub u: Vec<Real>,
    /// `v^j_[0..=r^j−κ^j]` per component.
    pub v: Vec<Vec<Real>>,
    /// Predicted `φ^j_[β]`, `β < κ^j`.
    pub predictions: Vec<Vec<Real>>,
    /// Every external quantity read, in order: `x`, `zeta[-b]`, `yd<j>[k]`.
    pub trace: Vec<String>,
    #[serde(skip)]
    pub feedback: Option<FeedbackEval>,
}

impl TrackingLaw {
    /// `coeffs[j]` must have `κ^j` entries.
    pub fn new(
        sys: &DiscreteSystem,
        spec: &FlatSpec,
        kappa: &KappaResult,
        coeffs: Vec<Vec<Real>>,
        cfg: &SampleConfig,
    ) -> Result<TrackingLaw> {
        let m = sys.m;
        let k: Vec<usize> = kappa.kappa.iter().collect();
        if coeffs.len() != m || coeffs.iter().zip(&k).any(|(c, k)| c.len() != *k) {
            return Err(Error::Dimension(format!("need {k:?} coefficients per component")));
        }
        let law = FeedbackLaw::quasi_static(sys, spec, &kappa.kappa, cfg)?;
        let blocks: Vec<Vec<usize>> = kappa.blocks.iter().map(|b| b.outputs.iter().map(|j| j - 1).collect()).collect();
        let r: Vec<usize> = spec.r.iter().collect();
        let mut engine = ShiftEngine::new(sys);
        let mut data: Vec<ShiftedVar> = sys.state_vars();
        for beta in 1..=spec.q1 as i32 {
            data.extend(sys.zeta_vars(-beta));
        }
        let mut predictors = Vec::new();
        for (i, outs) in blocks.iter().enumerate() {
            let targets: Vec<(usize, usize)> = outs.iter().flat_map(|&j| (0..k[j]).map(move |b| (j, b))).collect();
            let equations: Vec<(usize, usize)> = blocks[..i]
                .iter()
                .flatten()
                .flat_map(|&j| (0..=(r[j] - k[j])).map(move |a| (j, a)))
                .collect();
            let target_exprs: Vec<Expr> = targets.iter().map(|&(j, b)| engine.forward_shift(&spec.phi[j], b)).collect();
            let eq_exprs: Vec<Expr> =
                equations.iter().map(|&(j, a)| engine.forward_shift(&spec.phi[j], k[j] + a)).collect();
            let mut unknowns: Vec<ShiftedVar> = target_exprs
                .iter()
                .chain(&eq_exprs)
                .flat_map(|e| e.vars())
                .filter(|v| v.block == Block::Input)
                .collect();
            unknowns.sort();
            unknowns.dedup();
            let inputs: Vec<ShiftedVar> = unknowns.iter().chain(&data).copied().collect();
            predictors.push(Predictor {
                guess: unknowns.iter().map(|v| sys.equilibrium_value(v, &[])).collect(),
                target_tape: Tape::compile(&target_exprs, &inputs)?,
                residual_tape: Tape::compile(&eq_exprs, &inputs)?,
                jacobian_tape: JacobianTape::compile_partial(&eq_exprs, &unknowns, &inputs)?,
                targets,
                equations,
                unknowns,
            });
        }
        Ok(TrackingLaw { law, blocks, coeffs, kappa: k, r, predictors, q1: spec.q1, n: sys.n })
    }

    /// From per-component eigenvalue lists (`κ^j` each).
    pub fn from_eigenvalues(
        sys: &DiscreteSystem,
        spec: &FlatSpec,
        kappa: &KappaResult,
        eigs: &[Vec<Complex<Real>>],
        cfg: &SampleConfig,
    ) -> Result<TrackingLaw> {
        let coeffs = eigs.iter().map(|e| coeffs_from_eigenvalues(e)).collect::<Result<Vec<_>>>()?;
        Self::new(sys, spec, kappa, coeffs, cfg)
    }

    pub fn deadbeat(sys: &DiscreteSystem, spec: &FlatSpec, kappa: &KappaResult, cfg: &SampleConfig) -> Result<TrackingLaw> {
        let coeffs = kappa.kappa.iter().map(|k| vec![0.0; k]).collect();
        Self::new(sys, spec, kappa, coeffs, cfg)
    }

    /// Reference window length `r^j + 1` per component.
    pub fn reference_window(&self) -> Vec<usize> {
        self.r.iter().map(|r| r + 1).collect()
    }

    fn predict(&self, p: &Predictor, data: &[Real], v: &[Vec<Real>]) -> Result<Vec<Real>> {
        let k = p.unknowns.len();
        let target: Vec<Real> = p.equations.iter().map(|&(j, a)| v[j][a]).collect();
        let mut buf: Vec<Real> = p.guess.iter().chain(data).copied().collect();
        if !p.equations.is_empty() {
            let mut res = Real::INFINITY;
            for _ in 0..50 {
                let vals = p.residual_tape.eval(&buf)?;
                let r = DVector::from_iterator(vals.len(), vals.iter().zip(&target).map(|(a, b)| a - b));
                res = r.amax();
                if res <= 1e-12 {
                    break;
                }
                let j = p.jacobian_tape.eval(&buf)?;
                let step = min_norm_solve(&j, &r);
                for (b, s) in buf[..k].iter_mut().zip(step.iter()) {
                    *b -= s;
                }
            }
            if !(res <= 1e-9) {
                return Err(Error::NewtonDivergence { point: format!("{:?}", &buf[..k]), residual: res });
            }
        }
        p.target_tape.eval(&buf)
    }

    /// `v_[0,R−κ]` from the ζ history, the state and the reference window
    /// `yd^j_[0..=r^j]`, block by block.
    pub fn solve_v_window(&self, zeta_hist: &[Vec<Real>], x: &[Real], yd: &[Vec<Real>]) -> Result<TrackingEval> {
        let m = self.kappa.len();
        if yd.len() != m || yd.iter().zip(&self.r).any(|(w, r)| w.len() != r + 1) {
            return Err(Error::Dimension(format!("reference window must have lengths {:?}", self.reference_window())));
        }
        if x.len() != self.n || zeta_hist.len() < self.q1 {
            return Err(Error::Dimension("state or zeta history has wrong length".into()));
        }
        let mut trace = vec!["x".to_string()];
        let mut data = x.to_vec();
        for (b, z) in zeta_hist[..self.q1].iter().enumerate() {
            trace.push(format!("zeta[-{}]", b + 1));
            data.extend(z);
        }
        let mut v: Vec<Vec<Real>> = vec![Vec::new(); m];
        let mut predictions: Vec<Vec<Real>> = vec![Vec::new(); m];
        for (outs, p) in self.blocks.iter().zip(&self.predictors) {
            let pred = self.predict(p, &data, &v)?;
            for (&(j, _), val) in p.targets.iter().zip(pred) {
                predictions[j].push(val);
            }
            for &j in outs {
                let kj = self.kappa[j];
                let a = &self.coeffs[j];
                let mut read = |k: usize| {
                    trace.push(format!("yd{}[{k}]", j + 1));
                    yd[j][k]
                };
                for gamma in 0..=(self.r[j] - kj) {
                    let mut val = read(kj + gamma);
                    for (beta, ab) in a.iter().enumerate() {
                        let idx = beta + gamma;
                        let y = if idx >= kj { v[j][idx - kj] } else { predictions[j][idx] };
                        val -= ab * (y - read(idx));
                    }
                    v[j].push(val);
                }
            }
        }
        Ok(TrackingEval { u: Vec::new(), v, predictions, trace, feedback: None })
    }

    /// `u = η(ζ history, x, y^d_[0,R])`.
    pub fn step(
        &self,
        zeta_hist: &[Vec<Real>],
        x: &[Real],
        yd: &[Vec<Real>],
        warm_start: Option<&[Real]>,
    ) -> Result<TrackingEval> {
        let mut out = self.solve_v_window(zeta_hist, x, yd)?;
        let fb = self.law.evaluate(&FeedbackInput { zeta_hist, x, z: &[], v: &out.v }, warm_start)?;
        out.u = fb.u.clone();
        out.feedback = Some(fb);
        Ok(out)
    }
}

/// `u` only, for callers that do not need the trace.
pub fn tracking_step(tlaw: &TrackingLaw, zeta_hist: &[Vec<Real>], x: &[Real], yd: &[Vec<Real>]) -> Result<Vec<Real>> {
    Ok(tlaw.step(zeta_hist, x, yd, None)?.u)
}
