//! Command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;

use crate::engine::{step, DetectorTally, Network, PhotonState};
use crate::experiments::{
    format_sig9, fraction_grid, realization_rng, run_realization, run_sweep, ScenarioKind, ScenarioSpec, SweepSpec,
};
use crate::lattice::{BoundarySpec, Mode, ReflectorConfig, SiteIndex};
use crate::oracle::{compare_with_engine, MAX_PATH_N, MAX_PATH_STEPS};

/// Environment variable consulted when `--threads` is not given.
pub const THREADS_ENV: &str = "BEAMSPLIT_THREADS";

/// Largest deviation `oracle-check` accepts.
pub const ORACLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "beamsplit", version, about = "Single photons in beam-splitter arrays with random reflectors")]
pub struct Cli {
    /// Worker threads for sweeps (0 = all cores). Defaults to $BEAMSPLIT_THREADS, then 0.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo sweep over the fraction of connections, written as CSV.
    Sweep(SweepArgs),
    /// Single realization on an explicit or sampled configuration.
    Run(RunArgs),
    /// Engine against brute-force path sums on small random lattices.
    OracleCheck(OracleArgs),
    /// Timing check on a defect-free lattice.
    Baseline(BaselineArgs),
}

fn parse_size(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if n < 2 {
        return Err(format!("lattice size must be at least 2, got {n}"));
    }
    Ok(n)
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let f: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(0.0..=1.0).contains(&f) {
        return Err(format!("fraction must lie in [0, 1], got {f}"));
    }
    Ok(f)
}

fn parse_positive(s: &str) -> Result<u64, String> {
    let v: u64 = s.parse().map_err(|e| format!("{e}"))?;
    if v == 0 {
        return Err("must be at least 1".into());
    }
    Ok(v)
}

/// Parsed `--fractions` value.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionGrid(pub Vec<f64>);

/// Parsed `--checkpoints` value.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointList(pub Vec<u64>);

/// `start:end:step`, inclusive of both ends, or a single value.
fn parse_grid(s: &str) -> Result<FractionGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [single] => vec![parse_fraction(single)?],
        [start, end, step] => {
            let start = parse_fraction(start)?;
            let end = parse_fraction(end)?;
            let step: f64 = step.parse().map_err(|e| format!("{e}"))?;
            fraction_grid(start, end, step).map_err(|e| e.to_string())?
        }
        _ => return Err(format!("expected start:end:step, found `{s}`")),
    };
    Ok(FractionGrid(grid))
}

fn parse_checkpoints(s: &str) -> Result<CheckpointList, String> {
    s.split(',').map(|p| parse_positive(p.trim())).collect::<Result<_, _>>().map(CheckpointList)
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub scenario: ScenarioKind,
    #[arg(long, value_parser = parse_size)]
    pub n: usize,
    /// Last time step.
    #[arg(long, value_parser = parse_positive)]
    pub t: u64,
    /// Fraction grid as start:end:step.
    #[arg(long, value_parser = parse_grid, default_value = "0.5:1.0:0.02")]
    pub fractions: FractionGrid,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub realizations: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated checkpoint times (default N,2N,4N,8N and t, up to t).
    #[arg(long, value_parser = parse_checkpoints)]
    pub checkpoints: Option<CheckpointList>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: ScenarioKind,
    #[arg(long, value_parser = parse_positive)]
    pub t: u64,
    /// Reflector config file; otherwise one is sampled from --n, --fraction, --seed.
    #[arg(long, conflicts_with_all = ["n", "fraction"])]
    pub config_file: Option<PathBuf>,
    #[arg(long, value_parser = parse_size, required_unless_present = "config_file")]
    pub n: Option<usize>,
    #[arg(long, value_parser = parse_fraction, required_unless_present = "config_file")]
    pub fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_checkpoints)]
    pub checkpoints: Option<CheckpointList>,
    /// Also write the configuration used to this file.
    #[arg(long)]
    pub save_config: Option<PathBuf>,
    /// Output CSV (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 4, value_parser = parse_size)]
    pub n: usize,
    #[arg(long, default_value_t = 8, value_parser = parse_positive)]
    pub t: u64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_parser = parse_size)]
    pub n: usize,
}

/// Thread count from the flag, then the environment, then 0 (automatic).
pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    if let Some(t) = flag {
        return Ok(t);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().with_context(|| format!("{THREADS_ENV}={v} is not a thread count")),
        Err(_) => Ok(0),
    }
}

/// Runs a parsed request, writing human-readable progress to `log`.
/// Returns an error (nonzero exit) when any work or built-in check fails.
pub fn execute(cli: Cli, log: &mut dyn Write) -> Result<()> {
    let threads = resolve_threads(cli.threads)?;
    match cli.command {
        Command::Sweep(args) => sweep(args, threads, log),
        Command::Run(args) => run(args, log),
        Command::OracleCheck(args) => oracle_check(args, log),
        Command::Baseline(args) => baseline(args, log),
    }
}

fn scenario_for(kind: ScenarioKind, n: usize, t: u64, checkpoints: Option<CheckpointList>) -> Result<ScenarioSpec> {
    let s = ScenarioSpec::new(kind, n, t)?;
    Ok(match checkpoints {
        Some(cps) => s.with_checkpoints(cps.0)?,
        None => s,
    })
}

fn sweep(args: SweepArgs, threads: usize, log: &mut dyn Write) -> Result<()> {
    let scenario = scenario_for(args.scenario, args.n, args.t, args.checkpoints)?;
    let spec = SweepSpec::new(args.fractions.0, args.realizations as usize, args.seed)?;
    writeln!(
        log,
        "sweep {} n={} t={} over {} fractions x {} realizations",
        scenario.kind,
        scenario.n,
        scenario.t_max,
        spec.fractions.len(),
        spec.realizations
    )?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let result = pool.install(|| run_sweep(&scenario, &spec))?;
    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = BufWriter::new(file);
    result.write_csv(&mut w)?;
    w.flush()?;
    writeln!(log, "wrote {} rows to {}", result.rows.len(), args.out.display())?;
    Ok(())
}

fn run(args: RunArgs, log: &mut dyn Write) -> Result<()> {
    let config = match &args.config_file {
        Some(path) => ReflectorConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => {
            let (n, f) = (args.n.expect("required by clap"), args.fraction.expect("required by clap"));
            ReflectorConfig::sample(n, f, &mut realization_rng(args.seed, 0, 0))?
        }
    };
    if let Some(path) = &args.save_config {
        config.save(path).with_context(|| format!("writing {}", path.display()))?;
    }
    let scenario = scenario_for(args.scenario, config.n(), args.t, args.checkpoints)?;
    let series = run_realization(&scenario, &config)?;

    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    writeln!(out, "scenario,n,t,p_perc,p_back,p_loc")?;
    for c in &series {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            scenario.kind,
            scenario.n,
            c.t,
            format_sig9(c.p_perc),
            format_sig9(c.p_back),
            format_sig9(c.p_loc)
        )?;
    }
    out.flush()?;
    writeln!(log, "{} reflectors on {} interior edges", config.reflector_count(), config.interior_edge_count())?;
    Ok(())
}

fn oracle_check(args: OracleArgs, log: &mut dyn Write) -> Result<()> {
    ensure!(args.n <= MAX_PATH_N, "oracle-check supports n <= {MAX_PATH_N}");
    ensure!(args.t <= MAX_PATH_STEPS as u64, "oracle-check supports t <= {MAX_PATH_STEPS}");
    let boundaries = [
        BoundarySpec::AbsorbAll,
        BoundarySpec::ReflectInjectionSides { exit_site: SiteIndex::new(1, 1) },
        BoundarySpec::AllReflect,
    ];
    let mut rng = realization_rng(args.seed, 0, 0);
    let mut worst: f64 = 0.0;
    for trial in 0..args.trials {
        let f = rng.random_range(0.3..=1.0);
        let config = ReflectorConfig::sample(args.n, f, &mut rng)?;
        let site = SiteIndex::new(rng.random_range(1..=args.n), rng.random_range(1..=args.n));
        let mode = Mode::from_index(rng.random_range(0..4));
        let boundary = boundaries[trial as usize % boundaries.len()];
        let dev = compare_with_engine(&config, &boundary, site, mode, args.t as u32)?;
        worst = worst.max(dev);
    }
    writeln!(log, "oracle-check n={} t={} trials={}: max deviation {:e}", args.n, args.t, args.trials, worst)?;
    if worst > ORACLE_TOLERANCE {
        bail!("FAIL: max deviation {worst:e} exceeds {ORACLE_TOLERANCE:e}");
    }
    writeln!(log, "PASS")?;
    Ok(())
}

/// First step with nonzero percolation and first step at which percolation
/// is complete (within 1e-10), for a defect-free lattice with corner
/// injection. Also reports whether any backward amplitude ever appeared.
pub struct BaselineReport {
    pub first_exit: Option<u64>,
    pub completion: Option<u64>,
    pub backward_seen: bool,
}

pub fn baseline_report(n: usize) -> Result<BaselineReport> {
    let config = ReflectorConfig::open(n)?;
    let net = Network::new(&config, BoundarySpec::AbsorbAll);
    let mut state = PhotonState::init(n, SiteIndex::new(1, 1), Mode::A)?;
    let mut tally = DetectorTally::new();
    let mut report = BaselineReport { first_exit: None, completion: None, backward_seen: false };
    for _ in 0..2 * n as u64 + 1 {
        step(&mut state, &net, &mut tally)?;
        report.backward_seen |= state.backward_norm() != 0.0 || tally.back_cum != 0.0;
        if report.first_exit.is_none() && tally.perc_cum > 0.0 {
            report.first_exit = Some(state.t());
        }
        if report.completion.is_none() && (tally.perc_cum - 1.0).abs() <= 1e-10 {
            report.completion = Some(state.t());
        }
    }
    Ok(report)
}

fn baseline(args: BaselineArgs, log: &mut dyn Write) -> Result<()> {
    let n = args.n as u64;
    let r = baseline_report(args.n)?;
    let show = |v: Option<u64>| v.map_or("never".to_string(), |t| t.to_string());
    writeln!(log, "baseline n={n}: first exit at t={}, complete at t={}", show(r.first_exit), show(r.completion))?;
    let ok = r.first_exit.is_some_and(|t| t >= n) && r.completion.is_some_and(|t| t <= 2 * n) && !r.backward_seen;
    if !ok {
        bail!("FAIL: expected first exit >= {n}, completion <= {}, no backward amplitude", 2 * n);
    }
    writeln!(log, "PASS")?;
    Ok(())
}
