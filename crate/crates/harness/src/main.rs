use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gelsim::dynamic_cm::{simulate_dcm, StopSpec, Theta};
use gelsim::frozen_sim::{run_frozen, FrozenConfig};
use gelsim::graphs::{components, sample_cm};
use gelsim::rng::sim_rng;
use gelsim::smoluchowski::{
    default_a_max, integrate, limit_state, t_gel, LimitingConcentrations, OdeKind, OdeOptions,
    OdeState, DEFAULT_DT, DEFAULT_M_MAX,
};
use gelsim::DistSpec;
use gelsim_cli::report::num;
use gelsim_cli::{
    run_experiment, AlphaRule, ConfigFile, ExperimentConfig, ExperimentId, HarnessError,
};

#[derive(Parser)]
#[command(name = "gelsim", version, about = "Frozen-particle gelation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single run of the frozen particle system.
    Simulate(SimulateArgs),
    /// Dynamical configuration model run.
    Dcm(DcmArgs),
    /// Uniform configuration model and its components.
    Cm(CmArgs),
    /// Integrates the rate equations.
    Ode(OdeArgs),
    /// Limit curves Q(t), n_t and limiting concentrations.
    Limits(LimitsArgs),
    /// Runs one of the experiments E1..E6.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct AlphaArgs {
    /// Explicit freezing threshold.
    #[arg(long, conflicts_with = "alpha_exp")]
    alpha: Option<u64>,
    /// Threshold exponent: alpha = ceil(N^e).
    #[arg(long = "alpha-exp")]
    alpha_exp: Option<f64>,
}

impl AlphaArgs {
    fn rule(&self) -> Option<AlphaRule> {
        match (self.alpha, self.alpha_exp) {
            (Some(a), _) => Some(AlphaRule::Explicit(a)),
            (None, Some(e)) => Some(AlphaRule::Exponent(e)),
            (None, None) => None,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "poisson:2")]
    dist: DistSpec,
    #[arg(long, value_parser = parse_count, default_value = "100000")]
    n: usize,
    #[command(flatten)]
    alpha: AlphaArgs,
    #[arg(long, default_value_t = 5.0)]
    tmax: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of uniform snapshot times on [0, tmax].
    #[arg(long, default_value_t = gelsim::frozen_sim::DEFAULT_SNAPSHOTS)]
    snapshots: usize,
    /// Reject activations that would bind a particle to itself.
    #[arg(long)]
    no_self_loops: bool,
    #[arg(long, default_value = "out/simulate")]
    out: PathBuf,
}

#[derive(Args)]
struct DcmArgs {
    #[arg(long, default_value = "poisson:2")]
    dist: DistSpec,
    #[arg(long, value_parser = parse_count, default_value = "100000")]
    n: usize,
    #[command(flatten)]
    alpha: AlphaArgs,
    /// Stop time; without it the run stops at the first large component.
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out/dcm")]
    out: PathBuf,
}

#[derive(Args)]
struct CmArgs {
    #[arg(long, default_value = "poisson:1.05")]
    dist: DistSpec,
    #[arg(long, value_parser = parse_count, default_value = "100000")]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out/cm")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Modified,
    Unmodified,
}

#[derive(Args)]
struct OdeArgs {
    #[arg(long, default_value = "poisson:2")]
    dist: DistSpec,
    #[arg(long, default_value_t = 1.0)]
    tmax: f64,
    #[arg(long, default_value_t = DEFAULT_M_MAX)]
    m_max: usize,
    /// Defaults to m_max + 2.
    #[arg(long)]
    a_max: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_DT)]
    dt: f64,
    #[arg(long, value_enum, default_value = "modified")]
    kind: KindArg,
    /// Comma-separated times at which full states are written.
    #[arg(long, value_delimiter = ',')]
    record: Vec<f64>,
    #[arg(long, default_value = "out/ode")]
    out: PathBuf,
}

#[derive(Args)]
struct LimitsArgs {
    #[arg(long, default_value = "poisson:2")]
    dist: DistSpec,
    #[arg(long, default_value_t = 5.0)]
    tmax: f64,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Largest mass of the limiting-concentration table.
    #[arg(long, default_value_t = 20)]
    m_max: usize,
    #[arg(long, default_value = "out/limits")]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    id: ExperimentId,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dist: Option<DistSpec>,
    /// Comma-separated list of N.
    #[arg(long, value_delimiter = ',', value_parser = parse_count)]
    n: Vec<usize>,
    #[command(flatten)]
    alpha: AlphaArgs,
    /// Final time (E6).
    #[arg(long)]
    tmax: Option<f64>,
    /// Comma-separated observation times (E2, E3, E5).
    #[arg(long, value_delimiter = ',')]
    times: Vec<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,
    /// Exit with code 3 when an acceptance threshold is violated.
    #[arg(long)]
    check: bool,
}

/// Accepts `100000`, `1e5` or `3e5`.
fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("not a count: {s}"))?;
    if f >= 0.0 && f.fract() == 0.0 && f < 1e15 {
        Ok(f as usize)
    } else {
        Err(format!("not a count: {s}"))
    }
}

enum Failure {
    Config(String),
    Threshold,
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(m) => Failure::Config(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<gelsim::Error> for Failure {
    fn from(e: gelsim::Error) -> Self {
        match e {
            gelsim::Error::Domain(_) | gelsim::Error::Precondition(_) | gelsim::Error::Parse(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn resolve_alpha(rule: Option<AlphaRule>, n: usize) -> Result<u64, Failure> {
    Ok(rule.unwrap_or(AlphaRule::Exponent(0.85)).resolve(n)?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult {
    serde_json::to_writer_pretty(fs::File::create(path)?, value)?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> CliResult {
    let mu = a.dist.to_pmf()?;
    let theta = Theta::from_pmf(a.n, &mu)?;
    let alpha = resolve_alpha(a.alpha.rule(), a.n)?;
    if a.snapshots < 2 {
        return Err(Failure::Config("need at least 2 snapshots".into()));
    }
    let times: Vec<f64> = (0..a.snapshots)
        .map(|i| a.tmax * i as f64 / (a.snapshots - 1) as f64)
        .collect();
    let mut cfg = FrozenConfig::new(theta, alpha, a.tmax, a.seed).with_snapshots(&times);
    cfg.allow_self_loops = !a.no_self_loops;
    cfg.validate()?;
    let traj = run_frozen(&cfg)?;
    traj.write_all(&a.out)?;
    println!("{}", serde_json::to_string_pretty(&traj.summary())?);
    Ok(())
}

fn dcm(a: DcmArgs) -> CliResult {
    let mu = a.dist.to_pmf()?;
    let theta = Theta::from_pmf(a.n, &mu)?;
    let alpha = resolve_alpha(a.alpha.rule(), a.n)?;
    let stop = a.tmax.map_or(StopSpec::FirstGel, StopSpec::Time);
    let run = simulate_dcm(&theta, alpha, stop, sim_rng(a.seed))?;
    fs::create_dir_all(&a.out)?;
    run.write_census_csv(fs::File::create(a.out.join("census.csv"))?)?;
    components(&run.graph).write_csv(fs::File::create(a.out.join("components.csv"))?)?;
    write_json(&a.out.join("run.json"), &run)?;
    println!(
        "stop {:?} at t = {}, sigma = {:?}, activated arms = {}",
        run.stop_reason, run.stop_time, run.sigma, run.activated_total
    );
    Ok(())
}

fn cm(a: CmArgs) -> CliResult {
    let mu = a.dist.to_pmf()?;
    let degrees = Theta::from_pmf(a.n, &mu)?.degrees();
    let pairing = sample_cm(&degrees, &mut sim_rng(a.seed));
    let stats = components(&pairing);
    fs::create_dir_all(&a.out)?;
    stats.write_csv(fs::File::create(a.out.join("components.csv"))?)?;
    let summary = serde_json::json!({
        "n": a.n,
        "dist": a.dist.to_string(),
        "seed": a.seed,
        "components": stats.components.len(),
        "largest": stats.largest().map(|c| c.size),
        "second": stats.second().map(|c| c.size),
    });
    write_json(&a.out.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn ode(a: OdeArgs) -> CliResult {
    let mu = a.dist.to_pmf()?;
    let c0 = OdeState::monodisperse(&mu, a.a_max.unwrap_or(default_a_max(a.m_max)), a.m_max)?;
    let kind = match a.kind {
        KindArg::Modified => OdeKind::Modified,
        KindArg::Unmodified => OdeKind::Unmodified,
    };
    let traj = integrate(
        &c0,
        kind,
        &OdeOptions::new(a.tmax, a.dt).record_at(&a.record),
    )?;
    fs::create_dir_all(&a.out)?;
    traj.write_csv(fs::File::create(a.out.join("ode.csv"))?)?;
    let mut w = csv::Writer::from_path(a.out.join("scalars.csv"))
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let rows = std::iter::once(["t", "arms", "mass", "overflow_mass"].map(String::from)).chain(
        (0..traj.times.len()).map(|i| {
            [
                num(traj.times[i]),
                num(traj.arms[i]),
                num(traj.mass[i]),
                num(traj.overflow_mass[i]),
            ]
        }),
    );
    for r in rows {
        w.write_record(&r)
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    w.flush()?;
    let last = traj.final_state();
    println!(
        "t = {}: free arms {}, window mass {}, overflow mass {}",
        last.t,
        last.arms(),
        last.mass(),
        last.overflow_mass
    );
    Ok(())
}

fn limits(a: LimitsArgs) -> CliResult {
    let mu = a.dist.to_pmf()?;
    if a.steps == 0 || a.tmax.is_nan() || a.tmax <= 0.0 {
        return Err(Failure::Config("need steps >= 1 and tmax > 0".into()));
    }
    fs::create_dir_all(&a.out)?;
    let csv_err = |e: csv::Error| Failure::Runtime(e.to_string());
    let mut w = csv::Writer::from_path(a.out.join("limits.csv")).map_err(csv_err)?;
    w.write_record(["t", "q", "n_t", "free_arms", "pi_mean", "pi_gamma"])
        .map_err(csv_err)?;
    for i in 0..=a.steps {
        let t = a.tmax * i as f64 / a.steps as f64;
        let ls = limit_state(&mu, t)?;
        w.write_record([
            num(t),
            num(ls.q),
            num(ls.n),
            num(ls.free_arms),
            num(ls.pi.mean()),
            num(ls.pi.gamma_param()),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    let lim = LimitingConcentrations::new(&mu)?;
    let mut w = csv::Writer::from_path(a.out.join("cinf.csv")).map_err(csv_err)?;
    w.write_record(["m", "c_inf"]).map_err(csv_err)?;
    for m in 1..=a.m_max {
        w.write_record([m.to_string(), num(lim.closed(m)?)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    println!("T_gel = {:?}, beta = {}", t_gel(&mu)?, lim.beta());
    Ok(())
}

fn experiment(a: ExperimentArgs) -> CliResult {
    let mut cfg = ExperimentConfig::defaults(a.id);
    if let Some(path) = &a.config {
        let file = ConfigFile::load(path)?;
        if file.experiment.is_some_and(|id| id != a.id) {
            return Err(Failure::Config(format!(
                "config file is for a different experiment than {}",
                a.id
            )));
        }
        cfg.merge(file);
    }
    if let Some(v) = a.dist {
        cfg.dist = v;
    }
    if !a.n.is_empty() {
        cfg.n = a.n;
    }
    if let Some(v) = a.alpha.rule() {
        cfg.alpha = v;
    }
    if let Some(v) = a.tmax {
        cfg.times = vec![v];
    }
    if !a.times.is_empty() {
        cfg.times = a.times;
    }
    if let Some(v) = a.replicates {
        cfg.replicates = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.out {
        cfg.out = v;
    }
    cfg.validate()?;
    if a.dry_run {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let report = run_experiment(&cfg, a.jobs)?;
    report.write(&cfg.out)?;
    for f in &report.failures {
        eprintln!(
            "replicate {} (seed {}) failed: {}",
            f.replicate, f.seed, f.error
        );
    }
    for c in &report.checks {
        println!(
            "{} {}: {} (target {}, band [{}, {}])",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.empirical,
            c.target.map_or("-".into(), |v| v.to_string()),
            c.lower.map_or("-".into(), |v| v.to_string()),
            c.upper.map_or("-".into(), |v| v.to_string()),
        );
    }
    println!("report written to {}", cfg.out.display());
    if a.check && !report.passed() {
        return Err(Failure::Threshold);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Dcm(a) => dcm(a),
        Command::Cm(a) => cm(a),
        Command::Ode(a) => ode(a),
        Command::Limits(a) => limits(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Threshold) => {
            eprintln!("acceptance threshold violated");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}
