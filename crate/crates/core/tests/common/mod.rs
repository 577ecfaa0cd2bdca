//! Property suites, each run under three fixed runner seeds. Shared by the
//! `properties` and `acceptance` tests.
#![allow(dead_code)]

use std::collections::HashMap;

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use flatlin_core::feasibility::{FeasibilityChecker, FeasibilityStatus};
use flatlin_core::feedback::select_phi_c;
use flatlin_core::kappa::{compute_kappa_with, verify_kappa_minimal, Tiebreak};
use flatlin_core::sampling::SampleConfig;
use flatlin_core::shift::{PsiMode, ShiftEngine};
use flatlin_core::system::DiscreteSystem;
use flatlin_core::{zoo, Assignment, Block, Expr, ShiftedVar, Tape};

const SEEDS: [u64; 3] = [0x0dd5eed, 0xbadcafe, 20261015];

fn runner(seed: u64, cases: u32) -> TestRunner {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    TestRunner::new_with_rng(Config { cases, failure_persistence: None, ..Config::default() }, TestRng::from_seed(RngAlgorithm::ChaCha, &key))
}

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>)
where
    S::Value: std::fmt::Debug,
{
    for seed in SEEDS {
        if let Err(e) = runner(seed, cases).run(&strategy, &test) {
            panic!("seed {seed:#x}: {e}");
        }
    }
}

/// Random trees over `vars`, built from smooth operations defined everywhere.
fn expr_strategy(vars: Vec<ShiftedVar>) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        proptest::sample::select(vars).prop_map(Expr::var),
        (-2.0..2.0f64).prop_map(|c| Expr::constant((c * 100.0).round() / 100.0)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::div(&a, &(Expr::pow(&b, 2) + 2.0))),
            inner.clone().prop_map(|a| Expr::sin(&a)),
            inner.clone().prop_map(|a| Expr::cos(&a)),
            inner.clone().prop_map(|a| Expr::atan(&a)),
            inner.prop_map(|a| Expr::sinc(&a)),
        ]
    })
}

fn point_strategy(vars: Vec<ShiftedVar>, center: impl Fn(&ShiftedVar) -> f64 + 'static, r: f64) -> impl Strategy<Value = Assignment> {
    proptest::collection::vec(-r..r, vars.len())
        .prop_map(move |d| vars.iter().zip(d).map(|(v, d)| (*v, center(v) + d)).collect())
}

fn generic_vars() -> Vec<ShiftedVar> {
    vec![ShiftedVar::x(1), ShiftedVar::x(2), ShiftedVar::u(1, 0), ShiftedVar::u(1, 1), ShiftedVar::zeta(1, -1)]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

pub fn diff_matches_central_differences() {
    let vars = generic_vars();
    let s = (expr_strategy(vars.clone()), point_strategy(vars.clone(), |_| 0.0, 1.0), proptest::sample::select(vars));
    check(64, s, |(e, p, w)| {
        let d = e.diff(&w).eval(&p).unwrap();
        let h = 1e-6;
        let mut hi = p.clone();
        *hi.get_mut(&w).unwrap() += h;
        let mut lo = p.clone();
        *lo.get_mut(&w).unwrap() -= h;
        let fd = (e.eval(&hi).unwrap() - e.eval(&lo).unwrap()) / (2.0 * h);
        prop_assert!(close(d, fd, 1e-5), "d/d{w} of {e}: {d} vs {fd}");
        Ok(())
    });
}

pub fn diff_is_linear() {
    let vars = generic_vars();
    let s = (
        expr_strategy(vars.clone()),
        expr_strategy(vars.clone()),
        -3.0..3.0f64,
        -3.0..3.0f64,
        point_strategy(vars.clone(), |_| 0.0, 1.0),
        proptest::sample::select(vars),
    );
    check(64, s, |(f, g, a, b, p, w)| {
        let lhs = (a * f.clone() + b * g.clone()).diff(&w).eval(&p).unwrap();
        let rhs = a * f.diff(&w).eval(&p).unwrap() + b * g.diff(&w).eval(&p).unwrap();
        prop_assert!(close(lhs, rhs, 1e-10), "{lhs} vs {rhs}");
        Ok(())
    });
}

pub fn substitution_is_sound() {
    let vars = generic_vars();
    let s = (
        expr_strategy(vars.clone()),
        expr_strategy(vars.clone()),
        proptest::sample::select(vars.clone()),
        point_strategy(vars, |_| 0.0, 1.0),
    );
    check(64, s, |(e, h, w, p)| {
        let mut map = HashMap::new();
        map.insert(w, h.clone());
        let lhs = e.substitute(&map).eval(&p).unwrap();
        let mut q = p.clone();
        q.insert(w, h.eval(&p).unwrap());
        let rhs = e.eval(&q).unwrap();
        prop_assert!(close(lhs, rhs, 1e-12), "{lhs} vs {rhs}");
        Ok(())
    });
}

pub fn text_and_tape_agree_with_tree() {
    let vars = generic_vars();
    let s = (expr_strategy(vars.clone()), point_strategy(vars.clone(), |_| 0.0, 1.0));
    check(64, s, |(e, p)| {
        let direct = e.eval(&p).unwrap();
        let parsed = Expr::parse(&e.to_prefix()).unwrap().eval(&p).unwrap();
        prop_assert!(close(direct, parsed, 1e-12));
        let tape = Tape::compile(std::slice::from_ref(&e), &vars).unwrap();
        let vals: Vec<f64> = vars.iter().map(|v| p[v]).collect();
        prop_assert!(close(direct, tape.eval(&vals).unwrap()[0], 1e-12));
        Ok(())
    });
}

fn robot_vars(sys: &DiscreteSystem) -> Vec<ShiftedVar> {
    let mut v = sys.state_vars();
    v.extend(sys.input_vars(0));
    v.push(ShiftedVar::u(1, 1));
    v.extend(sys.zeta_vars(-1));
    v.extend(sys.zeta_vars(-2));
    v
}

pub fn shift_semigroup() {
    let (sys, _) = zoo::robot();
    let vars = robot_vars(&sys);
    let all: Vec<ShiftedVar> = {
        let mut v = vars.clone();
        v.extend(sys.input_vars(1));
        for s in 2..=5 {
            v.extend(sys.input_vars(s));
        }
        v
    };
    let s = (expr_strategy(vars), 0usize..3, 0usize..3, point_strategy(all, |_| 0.0, 0.5));
    check(32, s, |(e, a, b, p)| {
        let mut eng = ShiftEngine::new(&sys);
        let two = eng.forward_shift(&e, a);
        let two = eng.forward_shift(&two, b);
        let one = eng.forward_shift(&e, a + b);
        let (l, r) = (two.eval(&p).unwrap(), one.eval(&p).unwrap());
        prop_assert!(close(l, r, 1e-12), "{l} vs {r}");
        Ok(())
    });
}

pub fn forward_backward_round_trip() {
    let (sys, _) = zoo::robot();
    let vars = robot_vars(&sys);
    let mut all = vars.clone();
    all.extend(sys.input_vars(1));
    all.extend(sys.zeta_vars(-3));
    let s = (expr_strategy(vars), point_strategy(all, move |v| zoo::robot().0.equilibrium_value(v, &[]), 0.3));
    check(32, s, |(e, p)| {
        let mut eng = ShiftEngine::new(&sys);
        let fwd = eng.forward_shift(&e, 1);
        let fb = eng.backward_shift(&fwd, 1).unwrap();
        let bwd = eng.backward_shift(&e, 1).unwrap();
        let bf = eng.forward_shift(&bwd, 1);
        let base = e.eval(&p).unwrap();
        prop_assert!(close(fb.eval(&p).unwrap(), base, 1e-9));
        prop_assert!(close(bf.eval(&p).unwrap(), base, 1e-9));
        let newton = ShiftEngine::with_mode(&sys, PsiMode::Newton);
        prop_assert!(close(newton.backward_eval(&fwd, &p, 1).unwrap(), base, 1e-9));
        Ok(())
    });
}

pub fn pointwise_round_trip_without_closed_form() {
    let (sys, _) = zoo::helicopter();
    let mut vars = sys.state_vars();
    vars.extend(sys.input_vars(0));
    vars.extend(sys.zeta_vars(-1));
    let mut all = vars.clone();
    all.extend(sys.input_vars(1));
    let s = (expr_strategy(vars), point_strategy(all, move |v| zoo::helicopter().0.equilibrium_value(v, &[]), 0.1));
    check(24, s, |(e, p)| {
        let mut eng = ShiftEngine::new(&sys);
        prop_assert_eq!(eng.mode(), PsiMode::Newton);
        let shifted = eng.forward_shift(&e, 1);
        let back = eng.backward_eval(&shifted, &p, 1).unwrap();
        prop_assert!(close(back, e.eval(&p).unwrap(), 1e-9));
        Ok(())
    });
}

pub fn equilibrium_is_shift_invariant() {
    for name in zoo::NAMES {
        let (sys, _) = zoo::by_name(name).unwrap();
        let mut vars = sys.state_vars();
        vars.extend(sys.input_vars(0));
        vars.extend(sys.zeta_vars(-1));
        let s = expr_strategy(vars);
        check(16, s, |e| {
            let mut eng = ShiftEngine::new(&sys);
            let shifted = eng.forward_shift(&e, 2);
            let at_eq = |x: &Expr| {
                let p: Assignment = x.vars().into_iter().map(|v| (v, sys.equilibrium_value(&v, &[]))).collect();
                x.eval(&p).unwrap()
            };
            prop_assert!(close(at_eq(&shifted), at_eq(&e), 1e-12), "{name}");
            Ok(())
        });
    }
}

pub fn feasibility_is_monotone() {
    for seed in SEEDS {
        let cfg = SampleConfig::default().with_seed(seed);
        for name in zoo::NAMES {
            let (sys, spec) = zoo::by_name(name).unwrap();
            let chk = FeasibilityChecker::new(&sys, &spec);
            let table = chk.table(&cfg).unwrap();
            for a in &table {
                for b in &table {
                    if a.a.le(&b.a) && a.status == FeasibilityStatus::Feasible {
                        assert_ne!(b.status, FeasibilityStatus::Infeasible, "{name}: {} feasible but {} not", a.a, b.a);
                    }
                }
            }
            assert_ne!(table.last().unwrap().status, FeasibilityStatus::Infeasible, "{name}: A = R");
        }
    }
}

pub fn kappa_bounds_and_dichotomy() {
    let tiebreaks = ["lowest", "prefer:2,1", "prefer:1,2"];
    for seed in SEEDS {
        let cfg = SampleConfig::default().with_seed(seed);
        for name in zoo::NAMES {
            let (sys, spec) = zoo::by_name(name).unwrap();
            let mut totals = Vec::new();
            for tb in tiebreaks {
                let k = compute_kappa_with(&sys, &spec, &tb.parse::<Tiebreak>().unwrap(), &cfg).unwrap();
                assert!(k.kappa.le(&spec.r), "{name}: {} > {}", k.kappa, spec.r);
                assert!(k.kappa.total() >= sys.n);
                let extra = select_phi_c(&sys, &spec, &k.kappa, &cfg).unwrap();
                assert_eq!(extra.len(), k.kappa.total() - sys.n, "{name} {tb}");
                let r_extra = select_phi_c(&sys, &spec, &spec.r, &cfg).unwrap();
                assert_eq!(r_extra.len(), spec.r.total() - sys.n);
                verify_kappa_minimal(&sys, &spec, &k, &cfg).unwrap();
                totals.push(k.kappa.total());
            }
            assert!(totals.windows(2).all(|w| w[0] == w[1]), "{name}: {totals:?}");
        }
    }
}

pub fn variables_respect_block_sign_rules() {
    let s = (0u8..3, 1u16..4, -4i32..4);
    check(64, s, |(b, c, shift)| {
        let block = [Block::State, Block::Input, Block::Zeta][b as usize];
        let ok = ShiftedVar::try_new(block, c, shift).is_ok();
        let expected = match block {
            Block::State => shift == 0,
            Block::Input => shift >= 0,
            _ => shift <= -1,
        };
        prop_assert_eq!(ok, expected);
        Ok(())
    });
}

pub fn seeds_drive_distinct_cases() {
    let s = expr_strategy(generic_vars());
    let a = s.new_tree(&mut runner(SEEDS[0], 1)).unwrap().current();
    let b = s.new_tree(&mut runner(SEEDS[1], 1)).unwrap().current();
    let a2 = s.new_tree(&mut runner(SEEDS[0], 1)).unwrap().current();
    assert_eq!(a, a2);
    assert!(a != b || a.node_count() == 1);
}
