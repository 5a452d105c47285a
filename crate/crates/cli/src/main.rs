use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use elqr_core::config::ConfigError;
use elqr_core::metrics::{self, compare_report, ComparisonReport, RunSummary};
use elqr_core::{Protocol, RunLog, ScenarioConfig, SimError, SimTime};
use rayon::prelude::*;

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "elqr",
    version,
    about = "Energy and link-quality aware routing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Scenario file.
    #[arg(long)]
    config: PathBuf,
    /// Override one key, as `key=value` or `section.key=value`.
    #[arg(long = "set", value_name = "K=V")]
    overrides: Vec<String>,
    /// Comma-separated seeds; defaults to the scenario's seed list.
    #[arg(long, value_name = "CSV")]
    seeds: Option<String>,
    /// Output directory; defaults to the scenario's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured protocol once per seed.
    Run(Common),
    /// Run CTP and ELQR on matched seeds and compare them.
    Compare(Common),
    /// Check a scenario file and its overrides without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "K=V")]
        overrides: Vec<String>,
    },
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Failure::Validation(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::Validate { config, overrides } => cmd_validate(&config, &overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn parse_seeds(raw: &str) -> Result<Vec<u64>, Failure> {
    let seeds = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<u64>()
                .map_err(|_| Failure::Validation(format!("invalid seed `{s}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if seeds.is_empty() {
        return Err(Failure::Validation("the seed list is empty".into()));
    }
    Ok(seeds)
}

struct Plan {
    config: ScenarioConfig,
    seeds: Vec<u64>,
    out: PathBuf,
    pool: rayon::ThreadPool,
}

fn plan(args: &Common) -> Result<Plan, Failure> {
    let config = ScenarioConfig::load_with_overrides(&args.config, &args.overrides)?;
    let seeds = match &args.seeds {
        Some(raw) => parse_seeds(raw)?,
        None => config.seed_list(),
    };
    if seeds.is_empty() {
        return Err(Failure::Validation("the seed list is empty".into()));
    }
    if args.parallel == 0 {
        return Err(Failure::Validation("--parallel must be at least 1".into()));
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.scenario.output_dir));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.parallel)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(Plan {
        config,
        seeds,
        out,
        pool,
    })
}

fn run_all(plan: &Plan, jobs: &[(Protocol, u64)]) -> Result<Vec<RunLog>, Failure> {
    plan.pool
        .install(|| {
            jobs.par_iter()
                .map(|&(protocol, seed)| {
                    elqr_core::run(&plan.config.with_protocol(protocol).with_seed(seed))
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(Failure::from)
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn write_run(out: &Path, config: &ScenarioConfig, log: &RunLog) -> Result<(), Failure> {
    let dir = out.join(log.protocol.name()).join(log.seed.to_string());
    let width = SimTime::from_secs_f64(config.scenario.snapshot_interval_s);
    write(&dir.join("events.log"), &log.events_text())?;
    write(&dir.join("snapshots.csv"), &log.snapshots_csv())?;
    write(&dir.join("load.csv"), &metrics::load_csv(log))?;
    write(
        &dir.join("prr.csv"),
        &metrics::prr_csv(log, width).map_err(|e| Failure::Runtime(e.to_string()))?,
    )?;
    write(&dir.join("alive.csv"), &metrics::alive_csv(log))
}

fn cmd_run(args: &Common) -> Result<(), Failure> {
    let plan = plan(args)?;
    let protocol = plan.config.scenario.protocol;
    let jobs: Vec<_> = plan.seeds.iter().map(|&s| (protocol, s)).collect();
    for log in run_all(&plan, &jobs)? {
        write_run(&plan.out, &plan.config, &log)?;
        println!("{}", RunSummary::from_log(&log).line());
    }
    Ok(())
}

fn cmd_compare(args: &Common) -> Result<(), Failure> {
    let plan = plan(args)?;
    let jobs: Vec<_> = plan
        .seeds
        .iter()
        .flat_map(|&s| [(Protocol::Ctp, s), (Protocol::Elqr, s)])
        .collect();
    let logs = run_all(&plan, &jobs)?;
    let mut reports: Vec<ComparisonReport> = Vec::with_capacity(plan.seeds.len());
    for pair in logs.chunks(2) {
        let (ctp, elqr) = (&pair[0], &pair[1]);
        write_run(&plan.out, &plan.config, ctp)?;
        write_run(&plan.out, &plan.config, elqr)?;
        let report = compare_report(ctp, elqr).map_err(|e| Failure::Runtime(e.to_string()))?;
        let dir = plan.out.join("compare").join(ctp.seed.to_string());
        write(&dir.join("compare.csv"), &report.to_csv())?;
        write(&dir.join("compare_summary.csv"), &report.summary_csv())?;
        println!("{}", report.ctp.line());
        println!("{}", report.elqr.line());
        reports.push(report);
    }
    write(
        &plan.out.join("summary.csv"),
        &metrics::cross_seed_summary_csv(&reports),
    )?;
    let ratios: Vec<f64> = reports
        .iter()
        .filter_map(ComparisonReport::first_death_ratio)
        .collect();
    match metrics::median(&ratios) {
        Some(m) => println!(
            "median first_death ratio (elqr/ctp) = {m:.3} over {} seeds",
            ratios.len()
        ),
        None => println!("median first_death ratio (elqr/ctp) = n/a"),
    }
    Ok(())
}

fn cmd_validate(path: &Path, overrides: &[String]) -> Result<(), Failure> {
    let config = ScenarioConfig::load_with_overrides(path, overrides)?;
    println!(
        "ok: {} nodes, {} s, protocol {}, seeds {:?}",
        config.scenario.nodes,
        config.scenario.duration_s,
        config.scenario.protocol.name(),
        config.seed_list()
    );
    Ok(())
}
