//! Construction of the minimal multi-index κ and its triangular block structure.
//!
//! Each step works in coordinates where the input shifts claimed by earlier
//! blocks are replaced by the shifts of their new inputs `v`. Partial
//! derivatives in those coordinates come from the chain rule
//! `∂h/∂N = ∂h/∂O · (∂N/∂O)⁻¹` at sample points; nothing is inverted
//! symbolically.

use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Assignment, Block, Expr, JacobianTape, ShiftedVar};
use crate::feasibility::{FeasibilityChecker, FeasibilityStatus};
use crate::linalg::numeric_rank;
use crate::multi_index::MultiIndex;
use crate::sampling::SampleConfig;
use crate::shift::ShiftEngine;
use crate::system::{DiscreteSystem, FlatSpec};
use crate::Real;

/// Threshold for a partial derivative to count as explicit dependence.
pub const DEPENDENCE_TOL: Real = 1e-9;

/// Order in which output components are tried when several subsets reach
/// the step rank.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Tiebreak {
    #[default]
    LowestIndex,
    /// 1-based components, most preferred first. Unlisted ones follow in index order.
    Prefer(Vec<usize>),
}

impl Tiebreak {
    fn order(&self, mut comps: Vec<usize>) -> Vec<usize> {
        if let Tiebreak::Prefer(list) = self {
            comps.sort_by_key(|c| (list.iter().position(|p| *p == c + 1).unwrap_or(usize::MAX), *c));
        }
        comps
    }
}

impl FromStr for Tiebreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "lowest" {
            return Ok(Tiebreak::LowestIndex);
        }
        let list = s.strip_prefix("prefer:").unwrap_or(s);
        list.split(',')
            .map(|t| t.trim().parse::<usize>().ok().filter(|&c| c >= 1))
            .collect::<Option<Vec<_>>>()
            .map(Tiebreak::Prefer)
            .ok_or_else(|| Error::Model(format!("bad tiebreak `{s}`; use `lowest` or `prefer:2,1`")))
    }
}

impl fmt::Display for Tiebreak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tiebreak::LowestIndex => write!(f, "lowest"),
            Tiebreak::Prefer(l) => {
                let parts: Vec<String> = l.iter().map(|c| c.to_string()).collect();
                write!(f, "prefer:{}", parts.join(","))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KappaBlock {
    pub step: usize,
    /// 1-based output components `y_i`.
    pub outputs: Vec<usize>,
    /// 1-based input components `u_i`.
    pub inputs: Vec<usize>,
    /// `κ_i`, aligned with `outputs`.
    pub kappa: Vec<usize>,
    pub m: usize,
    /// First explicit-dependence shift of every component still open at this step.
    pub first_dependence: Vec<(usize, usize)>,
    /// `δ^{κ_i}(φ_i)`, aligned with `outputs`.
    pub top: Vec<Expr>,
    /// `φ_i, …, δ^{κ_i−1}(φ_i)` per output.
    pub lower: Vec<Vec<Expr>>,
    /// Earlier steps whose `v` equations determine the lower shifts.
    pub constrained_by: Vec<usize>,
    /// Whether the block Jacobian is regular at the equilibrium.
    pub regular_at_equilibrium: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct KappaResult {
    pub kappa: MultiIndex,
    #[serde(rename = "R")]
    pub r: MultiIndex,
    pub tiebreak: String,
    pub blocks: Vec<KappaBlock>,
    pub warnings: Vec<String>,
}

impl KappaResult {
    /// `κ` listed block by block, in selection order.
    pub fn block_order(&self) -> Vec<usize> {
        self.blocks.iter().flat_map(|b| b.kappa.iter().copied()).collect()
    }

    /// Input components in block order.
    pub fn input_order(&self) -> Vec<usize> {
        self.blocks.iter().flat_map(|b| b.inputs.iter().copied()).collect()
    }
}

struct PriorBlock {
    outputs: Vec<usize>,
    inputs: Vec<usize>,
    kappa: Vec<usize>,
    /// Largest input shift in `δ^{κ}(φ)` over the block.
    depth: i32,
}

/// Coordinates `O` and `N` for one step, with `∂N/∂O` compiled.
struct Frame {
    o: Vec<ShiftedVar>,
    jn: JacobianTape,
    rem_cols: Vec<usize>,
}

fn u_shift(e: &Expr) -> i32 {
    e.max_shift(Block::Input).unwrap_or(-1)
}

fn clean_rank(m: &DMatrix<Real>) -> usize {
    let mut c = m.clone();
    for mut row in c.row_iter_mut() {
        if row.norm() < 1e-10 {
            row.fill(0.0);
        }
    }
    numeric_rank(&c)
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        for mut rest in combinations(&items[i + 1..], k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn submatrix(d: &DMatrix<Real>, rows: &[usize], cols: &[usize]) -> DMatrix<Real> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| d[(rows[i], cols[j])])
}

struct Procedure<'a, 'b> {
    sys: &'a DiscreteSystem,
    spec: &'a FlatSpec,
    engine: &'b mut ShiftEngine<'a>,
    cfg: SampleConfig,
}

impl<'a, 'b> Procedure<'a, 'b> {
    fn shifted(&mut self, j: usize, k: usize) -> Expr {
        self.engine.forward_shift(&self.spec.phi[j], k)
    }

    fn frame(&mut self, prior: &[PriorBlock], h: i32, remaining_inputs: &[usize]) -> Result<Frame> {
        let sys = self.sys;
        let mut o = Vec::new();
        for beta in (1..=self.spec.q1 as i32).rev() {
            o.extend(sys.zeta_vars(-beta));
        }
        o.extend(sys.state_vars());
        for a in 0..=h {
            o.extend(sys.input_vars(a));
        }
        let mut n: Vec<Expr> = o.iter().map(|v| Expr::var(*v)).collect();
        for b in prior {
            for a in 0..=(h - b.depth) {
                for (k, (&j, &i)) in b.outputs.iter().zip(&b.inputs).enumerate() {
                    let pos = o.iter().position(|v| *v == ShiftedVar::u(i + 1, a)).expect("input shift in frame");
                    n[pos] = self.shifted(j, b.kappa[k] + a as usize);
                }
            }
        }
        let jn = JacobianTape::compile(&n, &o)?;
        let rem_cols = remaining_inputs
            .iter()
            .map(|&i| o.iter().position(|v| *v == ShiftedVar::u(i + 1, 0)).unwrap())
            .collect();
        Ok(Frame { o, jn, rem_cols })
    }

    /// Rows `∂h/∂u_rem` in the transformed coordinates, one per expression.
    fn partials(&self, frame: &Frame, tape: &JacobianTape, p: &Assignment) -> Result<Option<DMatrix<Real>>> {
        let jn = frame.jn.eval_at(p)?;
        let lu = jn.transpose().lu();
        let jh = tape.eval_at(p)?;
        let mut out = DMatrix::zeros(jh.nrows(), frame.rem_cols.len());
        for r in 0..jh.nrows() {
            let g = match lu.solve(&jh.row(r).transpose()) {
                Some(g) if g.iter().all(|v| v.is_finite()) => g,
                _ => return Ok(None),
            };
            for (c, &col) in frame.rem_cols.iter().enumerate() {
                out[(r, c)] = g[col];
            }
        }
        Ok(Some(out))
    }

    fn points(&self, frame: &Frame) -> (Vec<Assignment>, Assignment) {
        let center = |v: &ShiftedVar| self.sys.equilibrium_value(v, &[]);
        let pts = self.cfg.assignments(&frame.o, center, false);
        let eq = frame.o.iter().map(|v| (*v, center(v))).collect();
        (pts, eq)
    }

    fn run(&mut self, tiebreak: &Tiebreak) -> Result<KappaResult> {
        let m = self.sys.m;
        let r = self.spec.r.clone();
        let mut remaining: Vec<usize> = (0..m).collect();
        let mut remaining_inputs: Vec<usize> = (0..m).collect();
        let mut start = vec![0usize; m];
        let mut kappa = vec![0usize; m];
        let mut prior: Vec<PriorBlock> = Vec::new();
        let mut blocks = Vec::new();
        let mut warnings = Vec::new();

        while !remaining.is_empty() {
            let step = prior.len() + 1;
            let top_shift = remaining.iter().map(|&j| r[j] as i32 - 1).max().unwrap_or(0).max(0);
            let h = top_shift + prior.iter().map(|b| b.depth).max().unwrap_or(0);
            let frame = self.frame(&prior, h, &remaining_inputs)?;
            let (pts, eq) = self.points(&frame);

            // first explicit dependence on the remaining inputs
            let mut first = Vec::new();
            for &j in &remaining {
                let mut found = None;
                for k in start[j]..=r[j] {
                    let e = self.shifted(j, k);
                    if u_shift(&e) < 0 {
                        continue;
                    }
                    let tape = JacobianTape::compile(std::slice::from_ref(&e), &frame.o)?;
                    let mut dep = false;
                    for p in &pts {
                        if let Some(d) = self.partials(&frame, &tape, p)? {
                            if d.iter().any(|v| v.abs() > DEPENDENCE_TOL) {
                                dep = true;
                                break;
                            }
                        }
                    }
                    if dep {
                        found = Some(k);
                        break;
                    }
                }
                match found {
                    Some(k) => first.push((j, k)),
                    None => {
                        return Err(Error::RankSelectionFailure(format!(
                            "step {step}: phi{} shows no dependence on the remaining inputs up to shift {}",
                            j + 1,
                            r[j]
                        )))
                    }
                }
            }
            let exprs: Vec<Expr> = first.iter().map(|&(j, k)| self.shifted(j, k)).collect();
            let tape = JacobianTape::compile(&exprs, &frame.o)?;
            let mut mats = Vec::new();
            for p in &pts {
                if let Some(d) = self.partials(&frame, &tape, p)? {
                    mats.push(d);
                }
            }
            if mats.is_empty() {
                return Err(Error::RankSelectionFailure(format!("step {step}: coordinate change singular at every sample")));
            }
            let ranks: Vec<usize> = mats.iter().map(clean_rank).collect();
            let mi = ranks.iter().copied().max().unwrap_or(0);
            if ranks.iter().any(|&x| x != mi) {
                warn!("step {step}: rank varies across samples {ranks:?}");
            }
            if mi == 0 {
                return Err(Error::RankSelectionFailure(format!("step {step}: zero rank w.r.t. remaining inputs")));
            }

            let rows_in_order = tiebreak.order((0..remaining.len()).collect::<Vec<_>>().iter().map(|&i| remaining[i]).collect());
            let row_pos = |j: usize| remaining.iter().position(|&x| x == j).unwrap();
            let ordered_rows: Vec<usize> = rows_in_order.iter().map(|&j| row_pos(j)).collect();
            let col_idx: Vec<usize> = (0..remaining_inputs.len()).collect();
            let at_eq = self.partials(&frame, &tape, &eq)?;
            let mut chosen = None;
            let mut fallback = None;
            for rows in combinations(&ordered_rows, mi) {
                for cols in combinations(&col_idx, mi) {
                    let generic = mats.iter().map(|d| clean_rank(&submatrix(d, &rows, &cols))).max().unwrap_or(0);
                    if generic != mi {
                        continue;
                    }
                    let regular = at_eq.as_ref().is_some_and(|d| {
                        let s = submatrix(d, &rows, &cols).singular_values();
                        let smax = s.max();
                        s.min() > DEPENDENCE_TOL * smax.max(1.0)
                    });
                    if regular {
                        chosen = Some((rows.clone(), cols.clone(), true));
                        break;
                    }
                    if fallback.is_none() {
                        fallback = Some((rows.clone(), cols.clone(), false));
                    }
                }
                if chosen.is_some() {
                    break;
                }
            }
            let (rows, cols, regular) = match chosen.or(fallback) {
                Some(c) => c,
                None => {
                    return Err(Error::RankSelectionFailure(format!(
                        "step {step}: no {mi}x{mi} selection reaches rank {mi}; Jacobian at first sample {}",
                        mats[0]
                    )))
                }
            };
            if !regular {
                let msg = format!(
                    "step {step}: every selection is singular at the equilibrium; using phi{:?} with u{:?}",
                    rows.iter().map(|&i| remaining[i] + 1).collect::<Vec<_>>(),
                    cols.iter().map(|&i| remaining_inputs[i] + 1).collect::<Vec<_>>()
                );
                warn!("{msg}");
                warnings.push(msg);
            }

            let outputs: Vec<usize> = rows.iter().map(|&i| first[i].0).collect();
            let kap: Vec<usize> = rows.iter().map(|&i| first[i].1).collect();
            let inputs: Vec<usize> = cols.iter().map(|&i| remaining_inputs[i]).collect();
            let top: Vec<Expr> = outputs.iter().zip(&kap).map(|(&j, &k)| self.shifted(j, k)).collect();
            let lower: Vec<Vec<Expr>> = outputs.iter().zip(&kap).map(|(&j, &k)| (0..k).map(|a| self.shifted(j, a)).collect()).collect();
            let depth = top.iter().map(u_shift).max().unwrap_or(0).max(0);
            for (&j, &k) in outputs.iter().zip(&kap) {
                kappa[j] = k;
            }
            for &(j, k) in &first {
                start[j] = k;
            }
            blocks.push(KappaBlock {
                step,
                outputs: outputs.iter().map(|j| j + 1).collect(),
                inputs: inputs.iter().map(|i| i + 1).collect(),
                kappa: kap.clone(),
                m: mi,
                first_dependence: first.iter().map(|&(j, k)| (j + 1, k)).collect(),
                top,
                lower,
                constrained_by: (1..step).collect(),
                regular_at_equilibrium: regular,
            });
            remaining.retain(|j| !outputs.contains(j));
            remaining_inputs.retain(|i| !inputs.contains(i));
            prior.push(PriorBlock { outputs, inputs, kappa: kap, depth });
        }

        Ok(KappaResult { kappa: MultiIndex::new(kappa), r, tiebreak: tiebreak.to_string(), blocks, warnings })
    }
}

/// Runs the κ procedure. The flat output must not depend on any input.
pub fn compute_kappa(sys: &DiscreteSystem, spec: &FlatSpec, tiebreak: &Tiebreak) -> Result<KappaResult> {
    compute_kappa_with(sys, spec, tiebreak, &SampleConfig::default())
}

pub fn compute_kappa_with(
    sys: &DiscreteSystem,
    spec: &FlatSpec,
    tiebreak: &Tiebreak,
    cfg: &SampleConfig,
) -> Result<KappaResult> {
    for (j, p) in spec.phi.iter().enumerate() {
        if let Some(v) = p.vars().into_iter().find(|v| v.block == Block::Input) {
            return Err(Error::NotInputIndependentFlatOutput(format!("phi{} uses {v}", j + 1)));
        }
    }
    let mut engine = ShiftEngine::new(sys);
    Procedure { sys, spec, engine: &mut engine, cfg: *cfg }.run(tiebreak)
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimalityReport {
    pub kappa: MultiIndex,
    pub kappa_status: FeasibilityStatus,
    /// Every `A ≤ R` with `#A < #κ` that was checked.
    pub checked: Vec<MultiIndex>,
    /// Candidates with the same `#A` as `κ`, with their status.
    pub same_order: Vec<(MultiIndex, FeasibilityStatus)>,
}

/// Confirms that `κ` is feasible and that no `A ≤ R` with `#A < #κ` is.
pub fn verify_kappa_minimal(
    sys: &DiscreteSystem,
    spec: &FlatSpec,
    result: &KappaResult,
    cfg: &SampleConfig,
) -> Result<MinimalityReport> {
    let chk = FeasibilityChecker::new(sys, spec);
    let kappa_status = chk.check(&result.kappa, cfg)?.status;
    let total = result.kappa.total();
    let mut checked = Vec::new();
    let mut same_order = Vec::new();
    for a in spec.r.below() {
        if a.total() < total {
            if chk.check(&a, cfg)?.status != FeasibilityStatus::Infeasible {
                return Err(Error::MinimalityViolated(a));
            }
            checked.push(a);
        } else if a.total() == total && a != result.kappa {
            same_order.push((a.clone(), chk.check(&a, cfg)?.status));
        }
    }
    Ok(MinimalityReport { kappa: result.kappa.clone(), kappa_status, checked, same_order })
}
