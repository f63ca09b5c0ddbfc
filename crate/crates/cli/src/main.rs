//! `bloomcurve`: simulate monitoring studies, fit per-site bloom curves and
//! score anomalous sites.

mod commands;

use bloomcurve::config::RunConfig;
use bloomcurve::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bloomcurve", version, about = "Event-time estimation from status-monitoring reports")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores, 1 = sequential).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Override a configuration key, e.g. `--set chains=4`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Truth {
    Normal,
    Mixture,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo bias/RMSE study of the naïve, probit and spline estimators.
    Simulate {
        #[arg(long, value_enum, default_value = "normal")]
        truth: Truth,
        /// Visits per replication.
        #[arg(long, value_delimiter = ',', default_value = "40,50,60")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
    },
    /// Sample the per-site posterior and write curves, draws and diagnostics.
    Fit {
        /// Report table with header `site_id,day,monitors,positives`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Score sites by posterior Mahalanobis distance.
    Anomaly {
        /// Draws file written by `fit`.
        #[arg(long)]
        draws: PathBuf,
    },
    /// Validate and summarise a report table without fitting.
    IngestCheck {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        min_reports: Option<usize>,
    },
}

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_FIT: u8 = 3;
pub const EXIT_GATE: u8 = 4;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Domain { .. }
        | Error::Parse { .. }
        | Error::Validation { .. }
        | Error::Precondition(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => EXIT_VALIDATION,
        Error::Diagnostics(_) => EXIT_GATE,
        _ => EXIT_FIT,
    }
}

fn load_config(global: &GlobalArgs) -> bloomcurve::Result<RunConfig> {
    let mut config = match &global.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for item in &global.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {item:?}")))?;
        config.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(jobs) = global.jobs {
        config.jobs = jobs;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> bloomcurve::Result<commands::Outcome> {
    let mut config = load_config(&cli.global)?;
    std::fs::create_dir_all(&cli.global.out_dir)?;
    let out = cli.global.out_dir.as_path();
    let jobs = config.jobs;
    bloomcurve::exec::with_jobs(jobs, move || match cli.command {
        Command::Simulate { truth, n, reps } => commands::simulate(&config, truth, &n, reps, out),
        Command::Fit { data } => commands::fit(&config, &data, out),
        Command::Anomaly { draws } => commands::anomaly(&config, &draws, out),
        Command::IngestCheck { data, min_reports } => {
            if let Some(m) = min_reports {
                config.min_reports = m;
            }
            commands::ingest_check(&config, &data, out)
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(commands::Outcome::Success) => ExitCode::SUCCESS,
        Ok(commands::Outcome::GateFailed(message)) => {
            eprintln!("diagnostics gate failed: {message}");
            ExitCode::from(EXIT_GATE)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
