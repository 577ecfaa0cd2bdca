use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use flatlin_core::feasibility::{FeasibilityChecker, FeasibilityStatus};
use flatlin_core::feedback::{FeedbackInput, FeedbackLaw, LawDescriptor, LawKind};
use flatlin_core::kappa::{compute_kappa_with, verify_kappa_minimal, KappaResult, Tiebreak};
use flatlin_core::sampling::SampleConfig;
use flatlin_core::sim::{
    emit, random_sequence, read_sequence, simulate_closed_loop, ClosedLoopConfig, Controller, Tolerances,
};
use flatlin_core::system::{parse_model_unchecked, validate_with, DiscreteSystem, FlatSpec};
use flatlin_core::tracking::{poles_for, TrackingLaw};
use flatlin_core::{zoo, MultiIndex, Real};

/// Exact linearization and flatness-based tracking for discrete-time systems.
#[derive(Parser)]
#[command(name = "flatlin", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Sampled points per rank or identity test.
    #[arg(long, global = true, default_value_t = 25)]
    samples: usize,
    /// Seed of the sampling around the equilibrium.
    #[arg(long, global = true, default_value_t = 0x5eed)]
    sample_seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Runs the sampled model checks.
    Validate { model: String },
    /// Tests which shifts of the flat output can serve as new inputs.
    Feasibility {
        model: String,
        #[arg(long = "A", value_name = "a1,a2", conflicts_with = "all")]
        a: Option<String>,
        /// Every A below R (the default).
        #[arg(long)]
        all: bool,
    },
    /// Constructs the minimal multi-index kappa.
    Kappa {
        model: String,
        #[arg(long, default_value = "lowest", value_name = "lowest|prefer:j1,j2,...")]
        tiebreak: String,
        /// Skip the exhaustive minimality check.
        #[arg(long)]
        no_verify: bool,
    },
    /// Writes a feedback law descriptor.
    Synthesize {
        model: String,
        #[arg(long = "A", value_name = "a1,a2", conflicts_with = "kappa")]
        a: Option<String>,
        /// Use A = kappa (the default).
        #[arg(long)]
        kappa: bool,
        #[arg(long, conflicts_with = "quasistatic")]
        dynamic: bool,
        /// The default.
        #[arg(long)]
        quasistatic: bool,
        #[arg(long, default_value = "lowest")]
        tiebreak: String,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-loop simulation with residual checks.
    Simulate(SimArgs),
}

#[derive(Args)]
struct SimArgs {
    model: String,
    /// Law descriptor from `synthesize`; kappa quasi-static law when absent.
    #[arg(long)]
    law: Option<PathBuf>,
    /// New-input sequence CSV (k, v1, ..., vm), or `random`.
    #[arg(long, conflicts_with = "reference", required_unless_present = "reference")]
    v: Option<String>,
    /// Reference CSV (k, y1d, ..., ymd) for tracking.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Error-dynamics eigenvalues, e.g. `0.5,0.6;0.3+0.4i,0.3-0.4i`.
    #[arg(long, conflicts_with = "deadbeat", requires = "reference")]
    poles: Option<String>,
    /// All eigenvalues at zero (the default for tracking).
    #[arg(long, requires = "reference")]
    deadbeat: bool,
    /// Initial state; the equilibrium when absent.
    #[arg(long, value_name = "x1,x2,...", allow_hyphen_values = true)]
    x0: Option<String>,
    #[arg(long, default_value_t = 50)]
    horizon: usize,
    #[arg(long)]
    out: PathBuf,
    /// Seed of `--v random`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Half-width of `--v random` around the equilibrium output.
    #[arg(long, default_value_t = 0.05)]
    amplitude: Real,
    #[arg(long, default_value = "lowest")]
    tiebreak: String,
}

fn load(model: &str) -> Result<(DiscreteSystem, FlatSpec)> {
    let path = Path::new(model);
    if path.exists() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {model}"))?;
        return parse_model_unchecked(&text).with_context(|| format!("parsing {model}"));
    }
    zoo::by_name(model).with_context(|| format!("no model file or shipped model named `{model}`"))
}

fn multi_index(s: &str) -> Result<MultiIndex> {
    s.parse::<MultiIndex>().map_err(anyhow::Error::msg)
}

fn reals(s: &str) -> Result<Vec<Real>> {
    s.split(',').map(|t| t.trim().parse::<Real>().with_context(|| format!("bad number `{t}`"))).collect()
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn status(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn kappa(sys: &DiscreteSystem, spec: &FlatSpec, tiebreak: &str, cfg: &SampleConfig) -> Result<KappaResult> {
    let tb: Tiebreak = tiebreak.parse()?;
    Ok(compute_kappa_with(sys, spec, &tb, cfg)?)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = SampleConfig::default().with_count(cli.samples).with_seed(cli.sample_seed);
    let tol = Tolerances::from_env()?;
    match cli.cmd {
        Cmd::Validate { model } => {
            let (sys, spec) = load(&model)?;
            let rep = validate_with(&sys, &spec, &cfg, tol.identity)?;
            for c in &rep.checks {
                eprintln!("{:<28} {}  {}", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
            }
            print_json(&rep)?;
            Ok(status(rep.passed()))
        }
        Cmd::Feasibility { model, a, all: _ } => {
            let (sys, spec) = load(&model)?;
            let chk = FeasibilityChecker::new(&sys, &spec);
            match a {
                Some(a) => {
                    let rep = chk.check(&multi_index(&a)?, &cfg)?;
                    eprintln!("A = {}: {:?} (rank {} of {})", rep.a, rep.status, rep.generic_rank, rep.rank_required);
                    print_json(&rep)?;
                    Ok(status(rep.status != FeasibilityStatus::Infeasible))
                }
                None => {
                    let table = chk.table(&cfg)?;
                    for r in &table {
                        eprintln!("A = {:<8} #A = {:<3} {:?}", r.a.to_string(), r.a.total(), r.status);
                    }
                    print_json(&table)?;
                    Ok(ExitCode::SUCCESS)
                }
            }
        }
        Cmd::Kappa { model, tiebreak, no_verify } => {
            let (sys, spec) = load(&model)?;
            let k = kappa(&sys, &spec, &tiebreak, &cfg)?;
            eprintln!("kappa = {}  R = {}  blocks {:?}", k.kappa, k.r, k.block_order());
            for w in &k.warnings {
                log::warn!("{w}");
            }
            let minimality = if no_verify { None } else { Some(verify_kappa_minimal(&sys, &spec, &k, &cfg)) };
            let (ok, min_json) = match minimality {
                None => (true, serde_json::Value::Null),
                Some(Ok(m)) => (m.kappa_status != FeasibilityStatus::Infeasible, serde_json::to_value(m)?),
                Some(Err(e)) => (false, json!({ "error": e.to_string() })),
            };
            print_json(&json!({ "result": k, "minimality": min_json }))?;
            Ok(status(ok))
        }
        Cmd::Synthesize { model, a, kappa: _, dynamic, quasistatic: _, tiebreak, out } => {
            let (sys, spec) = load(&model)?;
            let a = match a {
                Some(a) => multi_index(&a)?,
                None => kappa(&sys, &spec, &tiebreak, &cfg)?.kappa,
            };
            let kind = if dynamic { LawKind::Dynamic } else { LawKind::QuasiStatic };
            let law = FeedbackLaw::synthesize(&sys, &spec, &a, kind, &cfg)?;
            let ok = equilibrium_check(&sys, &spec, &law)?;
            let text = serde_json::to_string_pretty(&law.descriptor(&sys.name))?;
            match out {
                Some(p) => std::fs::write(&p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
                None => println!("{text}"),
            }
            Ok(status(ok))
        }
        Cmd::Simulate(args) => simulate(args, &cfg, tol),
    }
}

/// The law returns the equilibrium input on the equilibrium window.
fn equilibrium_check(sys: &DiscreteSystem, spec: &FlatSpec, law: &FeedbackLaw) -> Result<bool> {
    let yeq = spec.equilibrium_output(sys)?;
    let v: Vec<Vec<Real>> = law.window().iter().zip(&yeq).map(|(w, y)| vec![*y; *w]).collect();
    let hist = vec![sys.zeta0(); spec.q1];
    let z = law.initial_z(sys, &hist, &sys.equilibrium.x)?;
    let ev = law.evaluate(&FeedbackInput { zeta_hist: &hist, x: &sys.equilibrium.x, z: &z, v: &v }, None)?;
    let dev = ev.u.iter().zip(&sys.equilibrium.u).map(|(a, b)| (a - b).abs()).fold(0.0, Real::max);
    eprintln!("{} law, A = {}: equilibrium input deviation {dev:.3e}", law.kind, law.a);
    Ok(dev < 1e-9)
}

fn simulate(args: SimArgs, cfg: &SampleConfig, tol: Tolerances) -> Result<ExitCode> {
    let (sys, spec) = load(&args.model)?;
    let x0 = match &args.x0 {
        Some(s) => reals(s)?,
        None => sys.equilibrium.x.clone(),
    };
    let run_cfg = ClosedLoopConfig { x0, zeta_init: None, horizon: args.horizon, seed: Some(args.seed), tol };
    let descriptor: Option<LawDescriptor> = match &args.law {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => None,
    };
    let outcome = if let Some(ref_path) = &args.reference {
        let reference = read_sequence(std::fs::File::open(ref_path).with_context(|| format!("opening {}", ref_path.display()))?)?;
        let k = kappa(&sys, &spec, &args.tiebreak, cfg)?;
        if let Some(d) = &descriptor {
            if d.a != k.kappa || d.kind != LawKind::QuasiStatic {
                bail!("tracking needs the quasi-static law with A = kappa = {}, the descriptor has {} A = {}", k.kappa, d.kind, d.a);
            }
        }
        let kap: Vec<usize> = k.kappa.iter().collect();
        let tlaw = match &args.poles {
            Some(p) if !args.deadbeat => TrackingLaw::from_eigenvalues(&sys, &spec, &k, &poles_for(p, &kap)?, cfg)?,
            _ => TrackingLaw::deadbeat(&sys, &spec, &k, cfg)?,
        };
        simulate_closed_loop(&sys, &spec, Controller::Tracking { law: &tlaw, reference: &reference }, &run_cfg)
    } else {
        let law = match &descriptor {
            Some(d) => FeedbackLaw::from_descriptor(&sys, &spec, d, cfg)?,
            None => FeedbackLaw::quasi_static(&sys, &spec, &kappa(&sys, &spec, &args.tiebreak, cfg)?.kappa, cfg)?,
        };
        let v = match args.v.as_deref() {
            Some("random") => {
                let yeq = spec.equilibrium_output(&sys)?;
                let w = law.window().into_iter().max().unwrap_or(1);
                random_sequence(|_| yeq.clone(), args.horizon + w, args.amplitude, args.seed)
            }
            Some(p) => read_sequence(std::fs::File::open(p).with_context(|| format!("opening {p}"))?)?,
            None => unreachable!("clap requires --v or --ref"),
        };
        simulate_closed_loop(&sys, &spec, Controller::Feedback { law: &law, v: &v }, &run_cfg)
    };
    std::fs::create_dir_all(&args.out)?;
    let report_path = args.out.join("report.json");
    match outcome {
        Ok((traj, rep)) => {
            let files = emit(&traj, &args.out)?;
            for c in &rep.checks {
                eprintln!("{:<20} {}  {}", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
            }
            let doc = json!({ "meta": traj.meta, "report": rep, "passed": rep.passed(), "files": files });
            std::fs::write(&report_path, serde_json::to_string_pretty(&doc)? + "\n")?;
            eprintln!("wrote {} files to {}", files.len() + 1, args.out.display());
            Ok(status(rep.passed()))
        }
        Err(abort) => {
            let files = emit(&abort.partial, &args.out)?;
            let doc = json!({ "meta": abort.partial.meta, "error": abort.source.to_string(), "passed": false, "files": files });
            std::fs::write(&report_path, serde_json::to_string_pretty(&doc)? + "\n")?;
            eprintln!("simulation stopped: {}", abort.source);
            Ok(ExitCode::from(1))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
