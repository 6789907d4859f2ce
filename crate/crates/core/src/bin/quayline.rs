use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{debug, info};

use quayline::allocation::{self, policy_compare, CompareError};
use quayline::metrics::{self, MetricsError};
use quayline::scenario::{self, ScenarioBundle, ScenarioError, CONFIG_FILE};
use quayline::terminal::{self, Mode};
use quayline::Exec;

const MANIFEST_FILE: &str = "run-manifest.kv";
const EVENTS_FILE: &str = "events.csv";

/// Container terminal simulator.
#[derive(Parser)]
#[command(name = "quayline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario directory and print the validation report.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run one simulation and write the log, KPIs and a run manifest.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        policy: Option<String>,
    },
    /// Run the scenario once per policy and print a comparison table.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated policy names.
        #[arg(long, value_delimiter = ',', required = true)]
        policies: Vec<String>,
    },
    /// Fit cycle times to the confident model-time targets by grid search.
    Calibrate {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// A failure and the exit status it maps to.
enum Failure {
    /// Bad input or usage: exit 2.
    Usage(String),
    /// Well-formed input that the domain rejects: exit 1.
    Domain(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        if e.is_parse() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Domain(e.to_string())
        }
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QUAYLINE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { scenario } => validate(&scenario),
        Command::Simulate { run, policy } => simulate(&run, policy),
        Command::Compare { run, policies } => compare(&run, &policies),
        Command::Calibrate { run } => calibrate(&run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn validate(dir: &Path) -> Result<(), Failure> {
    let bundle = scenario::load_scenario(dir)?;
    let report = scenario::validate(&bundle);
    print!("{report}");
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Domain(format!(
            "{} check(s) failed",
            report.failed().len()
        )))
    }
}

/// Loads the scenario, applies flag overrides and requires it to validate.
fn prepare(run: &RunArgs, policy: Option<String>) -> Result<ScenarioBundle, Failure> {
    let mut bundle = scenario::load_scenario(&run.scenario)?;
    if let Some(seed) = run.seed {
        bundle.config.seed = seed;
    }
    if let Some(mode) = run.mode {
        bundle.config.mode = mode;
    }
    if let Some(policy) = policy {
        bundle.config.policy = policy;
    }
    if bundle.policy().is_none() {
        return Err(Failure::Usage(format!(
            "unknown policy {:?}; registered: {}",
            bundle.config.policy,
            allocation::registered_policies().join(", ")
        )));
    }
    let report = scenario::validate(&bundle);
    if !report.all_passed() {
        eprint!("{report}");
        return Err(Failure::Domain("scenario does not validate".into()));
    }
    debug!(
        "loaded {} ships, {} blocks",
        bundle.ships.ships.len(),
        bundle.yards.blocks.len()
    );
    Ok(bundle)
}

fn run_manifest(
    command: &str,
    run: &RunArgs,
    bundle: &ScenarioBundle,
    policies: &[String],
) -> String {
    let s = &bundle.config.service;
    format!(
        "command = {command}\nscenario = {}\nconfig = {}\nseed = {}\npolicy = {}\nmode = {}\nout = {}\n\
         qc_cycle_s = {}\ntruck_cycle_s = {}\nyc_cycle_s = {}\nversion = {}\n",
        run.scenario.display(),
        run.scenario.join(CONFIG_FILE).display(),
        bundle.config.seed,
        if policies.is_empty() { bundle.config.policy.clone() } else { policies.join(",") },
        bundle.config.mode,
        run.out.display(),
        s.qc_cycle_s,
        s.truck_cycle_s,
        s.yc_cycle_s,
        env!("CARGO_PKG_VERSION"),
    )
}

/// Simulates `bundle` and writes events, KPI files and the manifest.
fn run_and_emit(
    command: &str,
    run: &RunArgs,
    bundle: &ScenarioBundle,
) -> Result<metrics::KpiReport, Failure> {
    let setup = bundle.setup().expect("policy checked in prepare");
    let outcome = terminal::simulate(&setup).map_err(|e| Failure::Domain(e.to_string()))?;
    info!("simulated {} events", outcome.log.len());
    let report = metrics::kpi_report(bundle, &outcome);
    fs::create_dir_all(&run.out)?;
    fs::write(
        run.out.join(MANIFEST_FILE),
        run_manifest(command, run, bundle, &[]),
    )?;
    fs::write(run.out.join(EVENTS_FILE), outcome.canonical_log())?;
    metrics::emit_report(&report, &run.out)?;
    Ok(report)
}

fn simulate(run: &RunArgs, policy: Option<String>) -> Result<(), Failure> {
    let bundle = prepare(run, policy)?;
    let report = run_and_emit("simulate", run, &bundle)?;
    print!("{}", report.to_csv());
    Ok(())
}

fn compare(run: &RunArgs, policies: &[String]) -> Result<(), Failure> {
    let bundle = prepare(run, None)?;
    let names: Vec<&str> = policies.iter().map(String::as_str).collect();
    let runs = policy_compare(&bundle, &names).map_err(|e| match e {
        CompareError::UnknownPolicy { .. } | CompareError::NoPolicies => {
            Failure::Usage(e.to_string())
        }
        CompareError::Simulation { .. } => Failure::Domain(e.to_string()),
    })?;
    fs::create_dir_all(&run.out)?;
    fs::write(
        run.out.join(MANIFEST_FILE),
        run_manifest("compare", run, &bundle, policies),
    )?;
    metrics::emit_comparison(&runs, &run.out)?;
    print!("{}", metrics::comparison_table(&runs));
    Ok(())
}

fn calibrate(run: &RunArgs) -> Result<(), Failure> {
    let mut bundle = prepare(run, None)?;
    info!("calibrating over {:?}", bundle.config.lattice);
    let fit = metrics::calibrate(&bundle, Exec::Auto)?;
    bundle.config.service = fit.service;
    fs::create_dir_all(&run.out)?;
    fs::write(run.out.join("calibration.csv"), fit.residual_csv())?;
    fs::write(run.out.join("calibrated.kv"), fit.config_fragment())?;
    run_and_emit("calibrate", run, &bundle)?;
    print!("{}", fit.config_fragment());
    print!("{}", fit.residual_csv());
    Ok(())
}
