use anyhow::Context;
use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;
use viana_cli::config::{ConfigError, Experiment, ExperimentConfig, Format};
use viana_cli::output::write_artifacts;

const EXIT_RUNTIME: u8 = 1;
const EXIT_INVALID_CONFIG: u8 = 2;
const EXIT_ASSERTION: u8 = 3;

/// Numerical experiments on the skew product F(θ, x) = (dθ mod 1, a − x² + αφ(θ)).
#[derive(Debug, Parser)]
#[command(name = "viana", version)]
struct Cli {
    experiment: Experiment,
    /// JSON experiment config; defaults are used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// worker threads (default: machine parallelism)
    #[arg(long, env = "VIANA_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// comma-separated subset of csv,json,svg
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<Format>>,
    /// validate and print the resolved config without running
    #[arg(long)]
    dry_run: bool,
}

fn config_error(e: &ConfigError) -> ExitCode {
    eprintln!("{}", serde_json::to_string(e).expect("error serialises"));
    ExitCode::from(EXIT_INVALID_CONFIG)
}

fn load(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::one(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.output_dir = cli.out.clone();
    }
    if cli.format.is_some() {
        cfg.formats = cli.format.clone();
    }
    cfg.resolve(cli.experiment)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => return config_error(&e),
    };
    if cli.dry_run {
        println!("{}", cfg.to_json());
        return ExitCode::SUCCESS;
    }
    let threads = cli.threads.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    });
    if threads == 0 {
        return config_error(&ConfigError::one("threads must be >= 1"));
    }
    match execute(&cfg, threads) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_ASSERTION),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn execute(cfg: &ExperimentConfig, threads: usize) -> anyhow::Result<bool> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building the worker pool")?;
    let start = Instant::now();
    let outcome = pool.install(|| viana_cli::run(cfg))?;
    let wall = start.elapsed().as_secs_f64();
    let manifest = write_artifacts(cfg, &outcome, wall, threads).context("writing artifacts")?;
    for (k, v) in &manifest.assertions {
        eprintln!("{} {k}", if *v { "pass" } else { "FAIL" });
    }
    Ok(manifest.passed)
}
