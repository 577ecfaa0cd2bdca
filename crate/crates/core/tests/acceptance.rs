//! One line per acceptance criterion; exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::Rng;

use flatlin_core::feasibility::{FeasibilityChecker, FeasibilityStatus};
use flatlin_core::feedback::{FeedbackInput, FeedbackLaw};
use flatlin_core::kappa::{compute_kappa, KappaResult, Tiebreak};
use flatlin_core::sampling::SampleConfig;
use flatlin_core::sim::{random_sequence, simulate_closed_loop, ClosedLoopConfig, Controller, Tolerances};
use flatlin_core::system::{check_flat_identity_with, DiscreteSystem, FlatSpec};
use flatlin_core::tracking::{poles_for, TrackingLaw};
use flatlin_core::{zoo, MultiIndex, Real};

const IDENTITY_TOL: Real = 1e-10;
const IDENTITY_POINTS: usize = 25;
const ORACLE_TOL: Real = 1e-10;
const ORACLE_QUERIES: usize = 100;
const IO_TOL: Real = 1e-8;
const IO_RUNS: u64 = 30;
const IO_HORIZON: usize = 50;
const V_AMPLITUDE: Real = 0.05;
const RECURSION_TOL: Real = 1e-8;
const TRACKING_HORIZON: usize = 100;
const DEADBEAT_TOL: Real = 1e-9;

const LIMIT_IDENTITY: Duration = Duration::from_secs(5);
const LIMIT_KAPPA: Duration = Duration::from_secs(10);
const LIMIT_PROPERTIES: Duration = Duration::from_secs(60);

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn timed(limit: Duration, start: Instant) -> Result<String, String> {
    let t = start.elapsed();
    ensure(t < limit, format!("took {t:.2?}, limit {limit:?}"))?;
    Ok(format!("{t:.2?}"))
}

fn kappa_of(sys: &DiscreteSystem, spec: &FlatSpec) -> Result<KappaResult, String> {
    compute_kappa(sys, spec, &Tiebreak::LowestIndex).map_err(|e| e.to_string())
}

fn c1_flat_identity() -> Outcome {
    let start = Instant::now();
    let cfg = SampleConfig::default().with_count(IDENTITY_POINTS);
    let mut parts = Vec::new();
    for name in zoo::NAMES {
        let (sys, spec) = zoo::by_name(name).unwrap();
        let r = check_flat_identity_with(&sys, &spec, &cfg, IDENTITY_TOL).map_err(|e| e.to_string())?;
        ensure(r.passed && r.points == IDENTITY_POINTS, format!("{name}: residual {:.2e} at {}", r.max_residual, r.worst_point))?;
        parts.push(format!("{name} {:.1e}", r.max_residual));
    }
    Ok(format!("max residual {} ({})", parts.join(", "), timed(LIMIT_IDENTITY, start)?))
}

fn c2_multi_indices() -> Outcome {
    let start = Instant::now();
    let expected = [("example1", [2, 2], [1, 2]), ("robot", [3, 2], [2, 2]), ("helicopter", [4, 4], [2, 4])];
    let mut parts = Vec::new();
    for (name, r, k) in expected {
        let (sys, spec) = zoo::by_name(name).unwrap();
        ensure(spec.r == MultiIndex::new(r.to_vec()), format!("{name}: R = {}", spec.r))?;
        let got = kappa_of(&sys, &spec)?;
        ensure(got.kappa == MultiIndex::new(k.to_vec()), format!("{name}: kappa = {}", got.kappa))?;
        parts.push(format!("{name} R={} kappa={}", spec.r, got.kappa));
    }
    Ok(format!("{} ({})", parts.join(", "), timed(LIMIT_KAPPA, start)?))
}

fn c3_feasibility_table() -> Outcome {
    let (sys, spec) = zoo::example1();
    let chk = FeasibilityChecker::new(&sys, &spec);
    let cfg = SampleConfig::default();
    let status = |a: [usize; 2]| chk.check(&MultiIndex::new(a.to_vec()), &cfg).map(|r| r.status).map_err(|e| e.to_string());
    ensure(status([1, 2])? == FeasibilityStatus::Feasible, "A=(1,2) not feasible")?;
    ensure(status([0, 0])? == FeasibilityStatus::Infeasible, "A=(0,0) not infeasible")?;
    ensure(status([2, 2])? == FeasibilityStatus::Feasible, "A=(2,2) not feasible")?;
    let table = chk.table(&cfg).map_err(|e| e.to_string())?;
    let small: Vec<String> =
        table.iter().filter(|r| r.a.total() < 3 && r.status != FeasibilityStatus::Infeasible).map(|r| r.a.to_string()).collect();
    ensure(small.is_empty(), format!("feasible with #A < 3: {small:?}"))?;
    Ok(format!("(1,2) feasible, (0,0) infeasible, (2,2) feasible, none of {} with #A<3", table.iter().filter(|r| r.a.total() < 3).count()))
}

fn c4_closed_form_oracle() -> Outcome {
    let (sys, spec) = zoo::example1();
    let a = MultiIndex::new(vec![1, 2]);
    let law = FeedbackLaw::quasi_static(&sys, &spec, &a, &SampleConfig::default()).map_err(|e| e.to_string())?;
    let mut rng = SampleConfig::default().with_seed(4).rng();
    let mut worst: Real = 0.0;
    for _ in 0..ORACLE_QUERIES {
        let x: Vec<Real> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v1 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let v2 = rng.gen_range(-1.0..1.0);
        let v = vec![v1.to_vec(), vec![v2]];
        let ev = law.evaluate(&FeedbackInput { zeta_hist: &[], x: &x, z: &[], v: &v }, None).map_err(|e| e.to_string())?;
        let oracle = [v1[0] - x[0], (1.0 - v1[0] + v1[1]) * v2];
        worst = ev.u.iter().zip(oracle).map(|(p, q)| (p - q).abs()).fold(worst, Real::max);
    }
    ensure(worst < ORACLE_TOL, format!("max deviation {worst:.2e}"))?;
    Ok(format!("{ORACLE_QUERIES} queries, max deviation {worst:.1e} < {ORACLE_TOL:.0e}"))
}

fn run_cfg(x0: Vec<Real>, horizon: usize) -> ClosedLoopConfig {
    ClosedLoopConfig { x0, zeta_init: None, horizon, seed: None, tol: Tolerances { io: IO_TOL, recursion: RECURSION_TOL, deadbeat: DEADBEAT_TOL, ..Tolerances::default() } }
}

fn c5_exact_linearization() -> Outcome {
    let mut parts = Vec::new();
    for name in zoo::NAMES {
        let (sys, spec) = zoo::by_name(name).unwrap();
        let k = kappa_of(&sys, &spec)?;
        let law = FeedbackLaw::quasi_static(&sys, &spec, &k.kappa, &SampleConfig::default()).map_err(|e| e.to_string())?;
        let yeq = spec.equilibrium_output(&sys).map_err(|e| e.to_string())?;
        let robot = name == "robot";
        let mut worst: Real = 0.0;
        for seed in 0..IO_RUNS {
            // the robot's heading keeps turning to stay off its straight-line singularity
            let base = |k: usize| if robot { vec![0.2 * (k + 2) as Real, 0.0] } else { yeq.clone() };
            let v = random_sequence(base, IO_HORIZON + 4, V_AMPLITUDE, seed);
            let (_, rep) = simulate_closed_loop(&sys, &spec, Controller::Feedback { law: &law, v: &v }, &run_cfg(sys.equilibrium.x.clone(), IO_HORIZON))
                .map_err(|e| format!("{name} seed {seed}: {}", e.source))?;
            worst = worst.max(rep.io.max());
        }
        ensure(worst < IO_TOL, format!("{name}: IO residual {worst:.2e}"))?;
        parts.push(format!("{name} {worst:.1e}"));
    }
    Ok(format!("{IO_RUNS} runs x {IO_HORIZON} steps each, max |y(k+kappa) - v(k)|: {}", parts.join(", ")))
}

fn tracking_run(name: &str, poles: &str, reference: &[Vec<Real>], x0: Vec<Real>, horizon: usize) -> Result<(KappaResult, flatlin_core::sim::SimReport, flatlin_core::sim::Trajectory), String> {
    let (sys, spec) = zoo::by_name(name).unwrap();
    let k = kappa_of(&sys, &spec)?;
    let kap: Vec<usize> = k.kappa.iter().collect();
    let cfg = SampleConfig::default();
    let t = if poles == "deadbeat" {
        TrackingLaw::deadbeat(&sys, &spec, &k, &cfg)
    } else {
        poles_for(poles, &kap).and_then(|p| TrackingLaw::from_eigenvalues(&sys, &spec, &k, &p, &cfg))
    }
    .map_err(|e| e.to_string())?;
    let (traj, rep) = simulate_closed_loop(&sys, &spec, Controller::Tracking { law: &t, reference }, &run_cfg(x0, horizon))
        .map_err(|e| format!("{name}: {}", e.source))?;
    Ok((k, rep, traj))
}

fn c6_error_recursion() -> Outcome {
    let (robot, robot_spec) = zoo::robot();
    let u: Vec<Vec<Real>> = (0..TRACKING_HORIZON + 10).map(|k| vec![0.1, 0.1 * (k as Real + 1.0)]).collect();
    let ol = flatlin_core::sim::simulate_open_loop(&robot, &robot_spec, &robot.equilibrium.x, &u, None).map_err(|e| e.to_string())?;
    let robot_ref: Vec<Vec<Real>> = ol.records.iter().map(|r| r.y.clone()).filter(|y| !y[0].is_nan()).collect();

    let (heli, heli_spec) = zoo::helicopter();
    let yeq = heli_spec.equilibrium_output(&heli).map_err(|e| e.to_string())?;
    let heli_ref: Vec<Vec<Real>> = (0..TRACKING_HORIZON + 10)
        .map(|k| if k >= 10 { vec![yeq[0], yeq[1] + 0.1] } else { yeq.clone() })
        .collect();
    let mut heli_x0 = heli.equilibrium.x.clone();
    heli_x0[0] += 0.02;

    let mut parts = Vec::new();
    for (name, poles, reference, x0, order) in [
        ("robot", "0.5,0.5;0.5,0.5", robot_ref, vec![1.03, -0.02, 0.05], 4),
        ("helicopter", "0.5,0.6;0.5,0.6,0.7,0.8", heli_ref, heli_x0, 6),
    ] {
        let (k, rep, _) = tracking_run(name, poles, &reference, x0, TRACKING_HORIZON)?;
        let worst = rep.recursion.clone().unwrap_or_default().into_iter().fold(0.0, Real::max);
        ensure(worst < RECURSION_TOL, format!("{name}: recursion residual {worst:.2e}"))?;
        ensure(rep.error_order == Some(order) && k.kappa.total() == order, format!("{name}: error order {:?}", rep.error_order))?;
        ensure(rep.passed(), format!("{name}: {:?}", rep.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>()))?;
        parts.push(format!("{name} residual {worst:.1e} order {order}"));
    }
    Ok(format!("horizon {TRACKING_HORIZON}: {}", parts.join(", ")))
}

fn c7_deadbeat() -> Outcome {
    let mut parts = Vec::new();
    for (name, offset) in [("example1", [0.1, -0.05]), ("helicopter", [0.05, 0.1])] {
        let (sys, spec) = zoo::by_name(name).unwrap();
        let yeq = spec.equilibrium_output(&sys).map_err(|e| e.to_string())?;
        let reference = vec![yeq.iter().zip(offset).map(|(a, b)| a + b).collect::<Vec<Real>>()];
        let (k, _, traj) = tracking_run(name, "deadbeat", &reference, sys.equilibrium.x.clone(), 30)?;
        let start = k.kappa.max();
        let worst = traj.records[start..].iter().flat_map(|r| r.e.iter()).map(|e| e.abs()).fold(0.0, Real::max);
        ensure(worst < DEADBEAT_TOL, format!("{name}: |e| = {worst:.2e} after step {start}"))?;
        parts.push(format!("{name} |e(k>={start})| <= {worst:.1e}"));
    }
    Ok(parts.join(", "))
}

fn c8_properties() -> Outcome {
    let start = Instant::now();
    let suites: [(&str, fn()); 12] = [
        ("diff vs finite differences", common::diff_matches_central_differences),
        ("diff linearity", common::diff_is_linear),
        ("substitution", common::substitution_is_sound),
        ("text and tape vs tree", common::text_and_tape_agree_with_tree),
        ("shift semigroup", common::shift_semigroup),
        ("shift round trip", common::forward_backward_round_trip),
        ("pointwise round trip", common::pointwise_round_trip_without_closed_form),
        ("equilibrium fixed", common::equilibrium_is_shift_invariant),
        ("monotone feasibility", common::feasibility_is_monotone),
        ("kappa <= R, #kappa - n", common::kappa_bounds_and_dichotomy),
        ("block sign rules", common::variables_respect_block_sign_rules),
        ("seeded runner", common::seeds_drive_distinct_cases),
    ];
    for (name, suite) in suites {
        catch_unwind(suite).map_err(|_| format!("{name} failed"))?;
    }
    Ok(format!("{} suites x 3 seeds ({})", suites.len(), timed(LIMIT_PROPERTIES, start)?))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("flat identity", c1_flat_identity),
        ("multi-indices R and kappa", c2_multi_indices),
        ("feasibility table", c3_feasibility_table),
        ("closed-form feedback oracle", c4_closed_form_oracle),
        ("exact linearization", c5_exact_linearization),
        ("tracking error recursion", c6_error_recursion),
        ("dead-beat", c7_deadbeat),
        ("property suites", c8_properties),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
