//! Command-line front end.
//!
//! Exit codes: 0 success, 2 target fidelity not reached (outputs still
//! written), 1 configuration or runtime error.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bench::{self, BenchContext};
use crate::config::ExperimentConfig;
use crate::controls::{bspline_basis, pulse_spectrum, random_init};
use crate::dynamics::{Columns, Propagator, StepControl};
use crate::error::{Error, Result};
use crate::io::{self, RunRow};
use crate::model::{Frame, SystemSpec};
use crate::objective::{finite_difference_check, guard_weights, Objective};
use crate::optimizer::{multistart, PulseShape};
use crate::resonance::enumerate_transitions;
use crate::sweep::{self, AggregateRow, AngleRow};
use crate::targets::{build_layer, LayerKind, LayerOptions};
use crate::units::{mhz, ns};

#[derive(Debug, Parser)]
#[command(name = "cqed-synth", version, about = "Pulse synthesis for bosonic qudit gates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Multistart synthesis of the first (gate, angle, τ) cell of a config.
    Synthesize(RunArgs),
    /// Every (gate, angle, τ, restart) cell of a config.
    Sweep(RunArgs),
    /// Carrier table as CSV.
    Resonances(SystemArgs),
    /// Magnitude spectrum of a pulse.
    Spectrum(SpectrumArgs),
    /// Populations of one basis state evolved under a pulse.
    Propagate(PropagateArgs),
    /// Built-in property suite.
    Validate(ValidateArgs),
    /// Acceptance scenarios.
    Bench {
        #[command(subcommand)]
        action: BenchAction,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FrameArg {
    Rotating,
    Lab,
}

impl From<FrameArg> for Frame {
    fn from(f: FrameArg) -> Self {
        match f {
            FrameArg::Rotating => Frame::Rotating,
            FrameArg::Lab => Frame::Lab,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub frame: Option<FrameArg>,
    /// Write zeros in the timing columns so reruns are byte-identical.
    #[arg(long)]
    pub deterministic: bool,
    /// Re-read every CSV written and fail if it does not parse.
    #[arg(long)]
    pub self_check: bool,
}

#[derive(Debug, Args)]
pub struct SystemArgs {
    /// Experiment config; its system section is used.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in preset `A` or `B`.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, value_enum)]
    pub frame: Option<FrameArg>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub pulse: PathBuf,
    /// Mode index in basis order (0 is the control mode).
    #[arg(long, default_value_t = 0)]
    pub mode: usize,
    #[arg(long, default_value_t = 2000.0)]
    pub sample_rate_mhz: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PropagateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long)]
    pub pulse: PathBuf,
    /// Initial occupations, comma separated, e.g. `0,1,0`.
    #[arg(long)]
    pub initial: String,
    #[arg(long, default_value_t = 101)]
    pub samples: usize,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value = "B")]
    pub preset: String,
    /// Debug: scale the adjoint gradient by 1.01 before the comparison.
    #[arg(long)]
    pub corrupt_gradient: bool,
}

#[derive(Debug, Subcommand)]
pub enum BenchAction {
    /// Run a scenario by name, or `all`.
    Run {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// List the registered scenarios.
    List,
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Synthesize(a) => synthesize(&a),
        Command::Sweep(a) => sweep_cmd(&a),
        Command::Resonances(a) => resonances(&a).map(|_| 0),
        Command::Spectrum(a) => spectrum(&a).map(|_| 0),
        Command::Propagate(a) => propagate(&a).map(|_| 0),
        Command::Validate(a) => validate(&a),
        Command::Bench { action } => bench_cmd(action),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(frame) = args.frame {
        cfg.system.frame = frame.into();
    }
    Ok(cfg)
}

fn out_dir(args: &RunArgs, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set `output`".into()))?;
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn scrub(rows: &mut [RunRow], deterministic: bool) {
    if deterministic {
        rows.iter_mut().for_each(|r| r.cpu_s = 0.0);
    }
}

fn self_check<T: for<'de> serde::Deserialize<'de>>(path: &Path, expected: usize) -> Result<()> {
    let rows: Vec<T> = io::read_rows_file(path)?;
    if rows.len() != expected {
        return Err(Error::Config(format!(
            "self-check: {} has {} rows, expected {expected}",
            path.display(),
            rows.len()
        )));
    }
    Ok(())
}

fn synthesize(args: &RunArgs) -> Result<i32> {
    let cfg = load(args)?;
    let dir = out_dir(args, &cfg)?;
    let system = cfg.system()?;
    let cells = sweep::cells(&cfg)?;
    if cells.len() > 1 {
        log::info!("config has {} cells; synthesizing the first", cells.len());
    }
    let cell = &cells[0];
    let target = cell.gate.target(&system)?;
    let objective = Objective::new(&system, &target, guard_weights(&system.basis()), cfg.step_control())?;
    let shape = PulseShape {
        duration: cell.duration,
        splines: cfg.pulse.splines,
        carriers: enumerate_transitions(&system).carrier_sets(),
    };
    let opt = sweep::cell_optimizer(&cfg, cell)?;
    let result = multistart(&objective, &shape, &opt, args.workers)?;
    let best = result.best_record().clone();
    io::write_pulse_json(&dir.join("pulse.json"), &result.best, Some(best.seed))?;
    let gate = cell.gate.kind.short_name();
    let mut rows: Vec<RunRow> = result
        .records
        .iter()
        .map(|r| RunRow::new(gate, cell.gate.angle_over_pi, cell.duration * 1e9, r))
        .collect();
    scrub(&mut rows, args.deterministic);
    let runs = dir.join("runs.csv");
    io::write_rows_file(&runs, &rows)?;
    if args.self_check {
        self_check::<RunRow>(&runs, rows.len())?;
    }
    let summary = format!(
        "gate {gate} angle {}π tau {} ns\nbest seed {} fidelity {:.6} leakage {:.3e} max guard population {:.3e}\n\
         iterations {} evaluations {} status {}\nrestarts {} converged {}\n",
        cell.gate.angle_over_pi,
        cell.duration * 1e9,
        best.seed,
        best.fidelity,
        best.leakage,
        best.max_guard_population,
        best.iterations,
        best.evaluations,
        best.status.as_str(),
        rows.len(),
        rows.iter().filter(|r| r.converged).count(),
    );
    std::fs::write(dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(if best.converged { 0 } else { 2 })
}

#[derive(Debug, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    config_sha256: String,
    seeds: Vec<u64>,
    workers: usize,
    cells: usize,
    rows: usize,
    files: Vec<&'static str>,
}

fn sweep_cmd(args: &RunArgs) -> Result<i32> {
    let cfg = load(args)?;
    let dir = out_dir(args, &cfg)?;
    let mut rows = sweep::run_campaign(&cfg, args.workers)?;
    scrub(&mut rows, args.deterministic);
    let angles = sweep::per_angle(&rows);
    let aggregate = sweep::aggregate(&rows);
    io::write_rows_file(&dir.join("runs.csv"), &rows)?;
    io::write_rows_file(&dir.join("per_angle.csv"), &angles)?;
    io::write_rows_file(&dir.join("aggregate.csv"), &aggregate)?;
    if args.self_check {
        self_check::<RunRow>(&dir.join("runs.csv"), rows.len())?;
        self_check::<AngleRow>(&dir.join("per_angle.csv"), angles.len())?;
        self_check::<AggregateRow>(&dir.join("aggregate.csv"), aggregate.len())?;
    }
    let text = std::fs::read_to_string(&args.config)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: hex::encode(Sha256::digest(text.as_bytes())),
        seeds: (0..cfg.optimizer.restarts as u64).map(|k| cfg.seed + k).collect(),
        workers: args.workers,
        cells: sweep::cells(&cfg)?.len(),
        rows: rows.len(),
        files: vec!["runs.csv", "per_angle.csv", "aggregate.csv"],
    };
    let mut f = std::fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    let failed = rows.iter().filter(|r| r.status == "error").count();
    println!(
        "{} runs over {} cells ({} failed); results in {}",
        rows.len(),
        manifest.cells,
        failed,
        dir.display()
    );
    Ok(if rows.iter().all(|r| r.converged) { 0 } else { 2 })
}

fn system_of(args: &SystemArgs) -> Result<SystemSpec> {
    let spec = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?.system()?,
        (None, Some(p)) => SystemSpec::preset(p)?,
        (None, None) => return Err(Error::Config("pass --config or --preset".into())),
    };
    Ok(match args.frame {
        Some(f) => spec.with_frame(f.into()),
        None => spec,
    })
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn resonances(args: &SystemArgs) -> Result<()> {
    let spec = system_of(args)?;
    let table = enumerate_transitions(&spec);
    let rows = io::resonance_rows(&spec.basis(), &table);
    io::write_resonances_csv(output(&args.out)?, &rows)?;
    let per_mode: Vec<String> = table.distinct.iter().map(|d| d.len().to_string()).collect();
    eprintln!(
        "{} transitions, {} distinct carriers ({})",
        table.total_transitions(),
        table.total_distinct(),
        per_mode.join(" + ")
    );
    Ok(())
}

fn spectrum(args: &SpectrumArgs) -> Result<()> {
    let (params, _) = io::read_pulse_json(&args.pulse)?;
    let lines = pulse_spectrum(&params, args.mode, args.sample_rate_mhz * 1e6)?;
    io::write_spectrum_csv(output(&args.out)?, &lines)
}

fn propagate(args: &PropagateArgs) -> Result<()> {
    let spec = system_of(&args.system)?;
    let (params, _) = io::read_pulse_json(&args.pulse)?;
    let basis = spec.basis();
    let occ = args
        .initial
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Config(format!("cannot parse --initial `{}`", args.initial)))?;
    if occ.len() != basis.n_modes() {
        return Err(Error::DimensionMismatch {
            expected: basis.n_modes(),
            actual: occ.len(),
        });
    }
    let mut psi = DVector::from_element(basis.dim_full(), Complex64::new(0.0, 0.0));
    psi[basis.state_index(&occ)?] = Complex64::new(1.0, 0.0);
    let samples = args.samples.max(2);
    let times: Vec<f64> = (0..samples)
        .map(|k| params.duration() * k as f64 / (samples - 1) as f64)
        .collect();
    let control = match args.steps {
        Some(n) => StepControl::with_steps(n),
        None => StepControl::default(),
    };
    let traj = Propagator::new(&spec).evolve_state(&params, &control, &psi, &times)?;
    io::write_trajectory_csv(output(&args.system.out)?, &basis, &traj)
}

/// One row of the validation table.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub passed: bool,
}

/// Property suite behind `validate`.
pub fn validation_suite(preset: &str, corrupt_gradient: bool) -> Result<Vec<Check>> {
    let spec = SystemSpec::preset(preset)?;
    let mut checks = Vec::new();
    let mut push = |name: &str, value: f64, threshold: &str, passed: bool| {
        checks.push(Check {
            name: name.into(),
            value,
            threshold: threshold.into(),
            passed,
        })
    };

    let carriers = enumerate_transitions(&spec).carrier_sets();
    let params = random_init(1, ns(500.0), 10, carriers.clone(), mhz(1.0))?;
    let prop = Propagator::new(&spec);
    let res = prop.propagate(&params, &StepControl::default(), &Columns::Full, None)?;
    let defect = res.unitarity_defect();
    push("unitarity", defect, "<= 1e-10", defect <= 1e-10);

    let mut worst = 0.0f64;
    for k in 0..=200 {
        let t = ns(500.0) * k as f64 / 200.0;
        let s: f64 = bspline_basis(10, ns(500.0), t)?.iter().sum();
        worst = worst.max((s - 1.0).abs());
    }
    push("partition_of_unity", worst, "<= 1e-12", worst <= 1e-12);

    let table = enumerate_transitions(&spec);
    let expected = match preset {
        "A" | "a" => 22,
        _ => 17,
    };
    let n = table.total_distinct();
    push("resonance_count", n as f64, &format!("== {expected}"), n == expected);

    let target = build_layer(&spec, LayerKind::Mixing, PI / 5.0, &LayerOptions::default())?;
    let objective = Objective::with_defaults(&spec, &target)?;
    let value = objective.evaluate_with_gradient(&params)?;
    let mut grad = value.gradient.clone().expect("gradient");
    if corrupt_gradient {
        grad.iter_mut().for_each(|g| *g *= 1.01);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let indices: Vec<usize> = (0..3).map(|_| rng.random_range(0..grad.len())).collect();
    let cmp = finite_difference_check(&objective, &params, &grad, &indices, 1e-4, mhz(0.2), 1e-5)?;
    let rel = cmp
        .iter()
        .map(|c| (c.adjoint - c.finite_difference).abs() / c.finite_difference.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    push("gradient_vs_fd", rel, "rtol 1e-5", cmp.iter().all(|c| c.passes()));

    let base = objective.evaluate(&params)?.infidelity;
    let steps = objective.propagator().plan(&params, &StepControl::default())?.steps;
    let fine = Objective::new(&spec, &target, objective.weights().clone(), StepControl::with_steps(2 * steps))?
        .evaluate(&params)?
        .infidelity;
    let delta = (base - fine).abs();
    push("step_convergence", delta, "<= 1e-7", delta <= 1e-7);
    Ok(checks)
}

fn validate(args: &ValidateArgs) -> Result<i32> {
    let checks = validation_suite(&args.preset, args.corrupt_gradient)?;
    println!("{:<20} {:>12} {:>12}  result", "check", "value", "threshold");
    for c in &checks {
        println!(
            "{:<20} {:>12.3e} {:>12}  {}",
            c.name,
            c.value,
            c.threshold,
            if c.passed { "PASS" } else { "FAIL" }
        );
    }
    Ok(if checks.iter().all(|c| c.passed) { 0 } else { 1 })
}

fn bench_cmd(action: BenchAction) -> Result<i32> {
    match action {
        BenchAction::List => {
            for s in bench::registry() {
                println!("{:<18} [{}] {}", s.name, s.criterion, s.description);
            }
            Ok(0)
        }
        BenchAction::Run { name, out, workers } => {
            let mut ctx = BenchContext::new(workers);
            let mut outcomes = Vec::new();
            let names: Vec<&str> = if name == "all" {
                bench::registry().iter().map(|s| s.name).collect()
            } else {
                vec![bench::find(&name)?.name]
            };
            for n in names {
                let o = bench::run_scenario(n, &mut ctx)?;
                println!("{}", o.line());
                outcomes.push(o);
            }
            if let Some(path) = out {
                io::write_rows_file(&path, &bench::metric_rows(&outcomes))?;
            }
            Ok(if outcomes.iter().all(|o| o.passed) { 0 } else { 1 })
        }
    }
}
