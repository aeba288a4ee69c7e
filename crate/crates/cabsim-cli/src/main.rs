//! Experiment driver: single runs, static-configuration grid searches, and
//! parameter sweeps, with CSV output.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration, 3 empty
//! result (no feasible static configuration).

mod config;

use cabsim::report;
use cabsim::sim::{grid_search, run, RunOptions, RunResult, Scenario, SimError};
use cabsim::workload::WorkloadError;
use clap::{Args, Parser, Subcommand};
use config::{CliError, Settings, SweepDim};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cabsim", version, about = "Cache-advertisement simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run and write per-segment and summary CSVs.
    Run(CommonArgs),
    /// Run every static configuration on the grid; report the best
    /// feasible one.
    Grid(CommonArgs),
    /// Run one simulation per value of a swept dimension.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat `key = value` defaults file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cache policy: lru | hyperbolic.
    #[arg(long)]
    policy: Option<String>,
    /// Cache capacity in items.
    #[arg(long)]
    cache: Option<u64>,
    /// Bandwidth budget in bits per request.
    #[arg(long)]
    budget: Option<u64>,
    /// Miss penalty (integer, > 1).
    #[arg(long)]
    miss_penalty: Option<u64>,
    /// Segment length multiplier.
    #[arg(long)]
    alpha: Option<u64>,
    /// Minimum update interval in requests.
    #[arg(long)]
    umin: Option<u64>,
    /// Minimum indicator size in bits per cached element.
    #[arg(long)]
    imin_bpe: Option<f64>,
    /// Maximum indicator size in bits per cached element.
    #[arg(long)]
    imax_bpe: Option<f64>,
    /// Advertiser: cab | cf | static:SIZE,INTERVAL.
    #[arg(long)]
    adv: Option<String>,
    /// Workload: file:PATH[:csv] | zipf:N,S,LEN[,PHASES].
    #[arg(long)]
    workload: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for grid/sweep execution.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Swept dimension: budget | cache | bpe | interval.
    #[arg(long)]
    dim: String,
    /// Comma-separated values for the swept dimension.
    #[arg(long)]
    values: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => Settings::resolve(&args).and_then(|s| cmd_run(&s)),
        Command::Grid(args) => Settings::resolve(&args).and_then(|s| cmd_grid(&s)),
        Command::Sweep(args) => {
            Settings::resolve(&args.common).and_then(|s| cmd_sweep(&s, &args.dim, &args.values))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("cabsim: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

impl CommonArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut kv = Vec::new();
        let mut push = |key: &'static str, val: Option<String>| {
            if let Some(v) = val {
                kv.push((key, v));
            }
        };
        push("policy", self.policy.clone());
        push("cache", self.cache.map(|v| v.to_string()));
        push("budget", self.budget.map(|v| v.to_string()));
        push("miss-penalty", self.miss_penalty.map(|v| v.to_string()));
        push("alpha", self.alpha.map(|v| v.to_string()));
        push("umin", self.umin.map(|v| v.to_string()));
        push("imin-bpe", self.imin_bpe.map(|v| v.to_string()));
        push("imax-bpe", self.imax_bpe.map(|v| v.to_string()));
        push("adv", self.adv.clone());
        push("workload", self.workload.clone());
        push("seed", self.seed.map(|v| v.to_string()));
        push("out", self.out.as_ref().map(|p| p.display().to_string()));
        push("jobs", self.jobs.map(|v| v.to_string()));
        kv
    }
}

fn sim_error(err: SimError) -> CliError {
    match err {
        SimError::Workload(WorkloadError::Spec(msg)) => {
            CliError::Config(format!("invalid workload spec `{msg}`"))
        }
        SimError::Workload(e) => CliError::Io(e.to_string()),
        SimError::EmptyWorkload => CliError::Io("workload is empty".to_string()),
        SimError::InvalidScenario(msg) => CliError::Config(msg),
    }
}

fn open_out(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    let file =
        File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn init_jobs(settings: &Settings) {
    if let Some(jobs) = settings.jobs {
        // Best effort; a second invocation in-process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
}

fn execute(settings: &Settings, scenario: &Scenario) -> Result<RunResult, CliError> {
    let keys = scenario
        .workload
        .materialize(scenario.seed)
        .map_err(|e| sim_error(SimError::Workload(e)))?;
    run(scenario, &settings.adv, &keys, RunOptions::default()).map_err(sim_error)
}

fn cmd_run(settings: &Settings) -> Result<(), CliError> {
    let scenario = settings.scenario()?;
    scenario.validate().map_err(sim_error)?;
    let result = execute(settings, &scenario)?;

    let mut seg = open_out(&settings.out, "segments.csv")?;
    report::write_segments(&mut seg, &result).map_err(|e| CliError::Io(e.to_string()))?;
    seg.flush().map_err(|e| CliError::Io(e.to_string()))?;

    let mut sum = open_out(&settings.out, "summary.csv")?;
    writeln!(sum, "{}", report::SUMMARY_HEADER).map_err(|e| CliError::Io(e.to_string()))?;
    report::write_summary_row(&mut sum, &scenario, &settings.adv.label(), &result)
        .map_err(|e| CliError::Io(e.to_string()))?;
    sum.flush().map_err(|e| CliError::Io(e.to_string()))?;

    println!("avg_cost = {}", report::sig6(result.avg_cost));
    Ok(())
}

fn cmd_grid(settings: &Settings) -> Result<(), CliError> {
    init_jobs(settings);
    let scenario = settings.scenario()?;
    scenario.validate().map_err(sim_error)?;
    let keys = scenario
        .workload
        .materialize(scenario.seed)
        .map_err(|e| sim_error(SimError::Workload(e)))?;
    let outcome = grid_search(&scenario, &keys).map_err(sim_error)?;

    let mut table = open_out(&settings.out, "grid.csv")?;
    report::write_grid(&mut table, &outcome).map_err(|e| CliError::Io(e.to_string()))?;
    table.flush().map_err(|e| CliError::Io(e.to_string()))?;

    match outcome.best {
        Some((cfg, cost)) => {
            println!(
                "best static: indicator_bits={} update_interval={} avg_cost={}",
                cfg.indicator_bits,
                cfg.update_interval,
                report::sig6(cost)
            );
            Ok(())
        }
        None => Err(CliError::Empty(
            "no feasible static configuration".to_string(),
        )),
    }
}

fn cmd_sweep(settings: &Settings, dim: &str, values: &str) -> Result<(), CliError> {
    init_jobs(settings);
    let dim: SweepDim = dim.parse()?;
    let values = config::parse_values(values)?;
    if values.is_empty() {
        return Err(CliError::Config("no sweep values given".to_string()));
    }

    let mut rows = Vec::new();
    for value in &values {
        let (scenario, adv) = settings.apply_sweep(dim, *value)?;
        scenario.validate().map_err(sim_error)?;
        let keys = scenario
            .workload
            .materialize(scenario.seed)
            .map_err(|e| sim_error(SimError::Workload(e)))?;
        let result = run(&scenario, &adv, &keys, RunOptions::default()).map_err(sim_error)?;
        println!(
            "{dim:?}={value}: avg_cost = {}",
            report::sig6(result.avg_cost)
        );
        rows.push((scenario, adv.label(), result));
    }

    let mut sum = open_out(&settings.out, "summary.csv")?;
    writeln!(sum, "{}", report::SUMMARY_HEADER).map_err(|e| CliError::Io(e.to_string()))?;
    for (scenario, label, result) in &rows {
        report::write_summary_row(&mut sum, scenario, label, result)
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    sum.flush().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}
