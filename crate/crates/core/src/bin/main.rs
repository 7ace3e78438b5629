use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, warn};

use ellipsoid_cp::datagen;
use ellipsoid_cp::harness::config::{DataSource, ProcessKind};
use ellipsoid_cp::harness::{self, ConfigError, ExperimentConfig, HarnessError};

const THREADS_ENV: &str = "ELLIPSOID_CP_THREADS";

#[derive(Parser)]
#[command(name = "ellipsoid-cp", version, about = "Sequential ellipsoidal conformal prediction")]
struct Cli {
    /// Worker threads; `ELLIPSOID_CP_THREADS` takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic series to `<out>/series.csv`.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment and write summary.json, rolling.csv and regions.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-aggregate `<out>/regions.csv` and print the summary as JSON.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, HarnessError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            ConfigError::Invalid {
                field: THREADS_ENV.into(),
                message: format!("expected a positive integer, got `{v}`"),
            }
            .into()
        }),
        Err(_) => Ok(flag),
    }
}

fn load(config: &Path, seed: Option<u64>) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::from_path(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn simulate(config: &Path, seed: Option<u64>, out: &Path) -> Result<(), HarnessError> {
    let cfg = load(config, seed)?;
    let DataSource::Simulate(s) = &cfg.data else {
        return Err(ConfigError::Invalid {
            field: "data".into(),
            message: "simulate needs a `simulate` data source".into(),
        }
        .into());
    };
    let spec = match s.process {
        ProcessKind::Ar => datagen::make_ar_spec(s.dim, s.order, cfg.seed),
        ProcessKind::Var => datagen::make_var_spec(s.dim, s.order, cfg.seed),
    }
    .with_noise(s.noise);
    let series = datagen::simulate(&spec, s.n_train + s.n_test, s.burn_in)?;
    let io = |source| HarnessError::Io {
        path: out.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(out).map_err(io)?;
    let path = out.join("series.csv");
    harness::write_csv(&series, &path).map_err(|source| HarnessError::Io { path, source })
}

fn run(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), HarnessError> {
    let mut cfg = load(config, seed)?;
    if out.is_some() {
        cfg.output_dir = out;
    }
    if cfg.output_dir.is_none() {
        return Err(ConfigError::Invalid {
            field: "output_dir".into(),
            message: "set `output_dir` in the config or pass --out".into(),
        }
        .into());
    }
    let outcome = harness::run_experiment(&cfg)?;
    for r in &outcome.summary.summary {
        println!(
            "{:<15} p={:<2} coverage {:.4} ({:.4})  size {} ({})",
            r.method,
            r.p,
            r.coverage_mean,
            r.coverage_std,
            harness::format_g(r.size_mean),
            harness::format_g(r.size_std)
        );
    }
    Ok(())
}

fn report(out: &Path) -> Result<(), HarnessError> {
    let records = harness::summarize_regions(&out.join(harness::output::REGIONS_FILE))?;
    println!("{}", serde_json::to_string_pretty(&records).expect("records serialise"));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = thread_count(cli.threads).and_then(|threads| {
        if let Some(n) = threads {
            if n == 0 {
                return Err(ConfigError::Invalid {
                    field: "threads".into(),
                    message: "must be at least 1".into(),
                }
                .into());
            }
            if !ellipsoid_cp::par::configure_threads(n) {
                warn!("thread count {n} ignored: no parallel support in this build");
            }
        }
        match cli.command {
            Command::Simulate { config, seed, out } => simulate(&config, seed, &out),
            Command::Run { config, seed, out } => run(&config, seed, out),
            Command::Report { out } => report(&out),
        }
    });
    match result {
        Ok(()) => ExitCode::from(harness::EXIT_OK as u8),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
