//! Which shifts of the flat output can serve as a new input, decided by a
//! sampled rank test on their differentials.

use serde::Serialize;

use crate::error::Result;
use crate::expr::{Expr, JacobianTape, ShiftedVar};
use crate::linalg::{kernel_basis, numeric_rank};
use crate::multi_index::MultiIndex;
use crate::sampling::{describe_point, SampleConfig};
use crate::shift::ShiftEngine;
use crate::system::{DiscreteSystem, FlatSpec};
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityStatus {
    /// Full row rank at every sample.
    Feasible,
    /// Full row rank at some samples only.
    FeasibleWithWarnings,
    Infeasible,
}

#[derive(Clone, Debug, Serialize)]
pub struct FeasibilityReport {
    #[serde(rename = "A")]
    pub a: MultiIndex,
    pub feasible: bool,
    pub status: FeasibilityStatus,
    /// Smallest rank over the samples.
    pub rank_found: usize,
    pub generic_rank: usize,
    pub rank_required: usize,
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub witness_points: Vec<String>,
    pub failing_points: Vec<String>,
    /// Left-kernel vectors over `rows` at the first failing point.
    pub deficient_directions: Vec<Vec<Real>>,
}

/// Shift chains of the flat output, reused across candidate multi-indices.
pub struct FeasibilityChecker<'a> {
    sys: &'a DiscreteSystem,
    spec: &'a FlatSpec,
    chains: Vec<Vec<Expr>>,
}

impl<'a> FeasibilityChecker<'a> {
    pub fn new(sys: &'a DiscreteSystem, spec: &'a FlatSpec) -> Self {
        let mut engine = ShiftEngine::new(sys);
        let chains = spec.phi.iter().zip(spec.r.iter()).map(|(p, r)| engine.forward_chain(p, r)).collect();
        FeasibilityChecker { sys, spec, chains }
    }

    /// The differentials tested for `a`, with labels.
    pub fn rows(&self, a: &MultiIndex) -> Vec<(String, Expr)> {
        let sys = self.sys;
        let mut rows = Vec::new();
        let lo = self.spec.q1 as i32 - a.iter().min().unwrap_or(0) as i32;
        for beta in (1..=lo).rev() {
            for v in sys.zeta_vars(-beta) {
                rows.push((v.to_string(), Expr::var(v)));
            }
        }
        for v in sys.state_vars() {
            rows.push((v.to_string(), Expr::var(v)));
        }
        for (j, chain) in self.chains.iter().enumerate() {
            for (alpha, e) in chain.iter().enumerate().take(self.spec.r[j]).skip(a[j]) {
                rows.push((format!("phi{}[{}]", j + 1, alpha), e.clone()));
            }
        }
        rows
    }

    pub fn check(&self, a: &MultiIndex, cfg: &SampleConfig) -> Result<FeasibilityReport> {
        let rows = self.rows(a);
        let exprs: Vec<Expr> = rows.iter().map(|r| r.1.clone()).collect();
        let mut cols: Vec<ShiftedVar> = exprs.iter().flat_map(|e| e.vars()).collect();
        cols.sort();
        cols.dedup();
        let tape = JacobianTape::compile(&exprs, &cols)?;
        let required = rows.len();
        let mut ranks = Vec::new();
        let mut witness = Vec::new();
        let mut failing = Vec::new();
        let mut directions = Vec::new();
        for p in cfg.assignments(&cols, |v| self.sys.equilibrium_value(v, &[]), false) {
            let j = tape.eval_at(&p)?;
            let r = numeric_rank(&j);
            let label = describe_point(&p);
            if r < required {
                if failing.is_empty() {
                    let k = kernel_basis(&j.transpose());
                    directions = k.column_iter().map(|c| c.iter().copied().collect()).collect();
                }
                failing.push(label.clone());
            }
            ranks.push(r);
            witness.push(label);
        }
        let rank_found = ranks.iter().copied().min().unwrap_or(0);
        let generic_rank = ranks.iter().copied().max().unwrap_or(0);
        let status = if failing.is_empty() && !ranks.is_empty() {
            FeasibilityStatus::Feasible
        } else if generic_rank == required {
            log::warn!("A = {a}: full rank at only {} of {} samples", ranks.len() - failing.len(), ranks.len());
            FeasibilityStatus::FeasibleWithWarnings
        } else {
            FeasibilityStatus::Infeasible
        };
        Ok(FeasibilityReport {
            a: a.clone(),
            feasible: status == FeasibilityStatus::Feasible,
            status,
            rank_found,
            generic_rank,
            rank_required: required,
            rows: rows.into_iter().map(|r| r.0).collect(),
            columns: cols.iter().map(|c| c.to_string()).collect(),
            witness_points: witness,
            failing_points: failing,
            deficient_directions: directions,
        })
    }

    /// Reports for every `A ≤ R`, in lexicographic order.
    pub fn table(&self, cfg: &SampleConfig) -> Result<Vec<FeasibilityReport>> {
        self.spec.r.below().iter().map(|a| self.check(a, cfg)).collect()
    }
}

pub fn check_feasibility(
    sys: &DiscreteSystem,
    spec: &FlatSpec,
    a: &MultiIndex,
    cfg: &SampleConfig,
) -> Result<FeasibilityReport> {
    FeasibilityChecker::new(sys, spec).check(a, cfg)
}

/// Whether `dh` lies in the span of the `dg` at every sample around the
/// equilibrium, i.e. `h` is locally a function of the `gs`.
pub fn check_functional_dependence(sys: &DiscreteSystem, h: &Expr, gs: &[Expr], cfg: &SampleConfig) -> Result<bool> {
    let mut cols: Vec<ShiftedVar> = gs.iter().chain(std::iter::once(h)).flat_map(|e| e.vars()).collect();
    cols.sort();
    cols.dedup();
    let g_tape = JacobianTape::compile(gs, &cols)?;
    let h_tape = JacobianTape::compile(std::slice::from_ref(h), &cols)?;
    for p in cfg.assignments(&cols, |v| sys.equilibrium_value(v, &[]), false) {
        let jg = g_tape.eval_at(&p)?;
        let jh = h_tape.eval_at(&p)?;
        let mut stacked = jg.clone().insert_row(jg.nrows(), 0.0);
        stacked.row_mut(jg.nrows()).copy_from(&jh.row(0));
        if numeric_rank(&stacked) != numeric_rank(&jg) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;

    fn mi(v: &[usize]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn example1_worked_checks() {
        let (sys, spec) = zoo::example1();
        let chk = FeasibilityChecker::new(&sys, &spec);
        let cfg = SampleConfig::default();
        let r = chk.check(&mi(&[1, 2]), &cfg).unwrap();
        assert!(r.feasible);
        assert_eq!(r.rows, ["x1", "x2", "x3", "phi1[1]"]);
        let r = chk.check(&mi(&[0, 0]), &cfg).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.status, FeasibilityStatus::Infeasible);
        assert_eq!(r.rank_required, 7);
        assert!(!r.deficient_directions.is_empty());
        assert!(chk.check(&mi(&[2, 2]), &cfg).unwrap().feasible);
    }

    #[test]
    fn robot_rows_include_zeta_history() {
        let (sys, spec) = zoo::robot();
        let chk = FeasibilityChecker::new(&sys, &spec);
        let rows = chk.rows(&mi(&[0, 1]));
        assert_eq!(&rows[..2].iter().map(|r| r.0.as_str()).collect::<Vec<_>>(), &["z1[-1]", "z2[-1]"]);
        assert!(chk.rows(&mi(&[1, 1])).iter().all(|r| !r.0.starts_with('z')));
    }

    #[test]
    fn functional_dependence_oracle() {
        let (sys, spec) = zoo::example1();
        let x = |i| Expr::var(ShiftedVar::x(i));
        let u = |j| Expr::var(ShiftedVar::u(j, 0));
        let cfg = SampleConfig::default();
        assert!(check_functional_dependence(&sys, &x(1), &[x(1) + u(1), u(1)], &cfg).unwrap());
        assert!(!check_functional_dependence(&sys, &u(2), &[x(1), x(2), x(3)], &cfg).unwrap());
        let mut eng = ShiftEngine::new(&sys);
        let mut gs = spec.phi.clone();
        gs.extend(eng.shift_multi(&spec.phi, &mi(&[1, 1])));
        assert!(check_functional_dependence(&sys, &x(3), &gs, &cfg).unwrap());
    }
}
