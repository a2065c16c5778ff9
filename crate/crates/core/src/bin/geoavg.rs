use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use geoavg::experiment::{
    cmd_compare, cmd_path, cmd_run, cmd_synth, cmd_verify, describe_key, effective_workers,
    write_compare, write_run, ExperimentConfig, PathGrid, VerifyOptions, VERIFY_SUITES,
};
use geoavg::GeoAvgError;

/// SGD for least squares with geometric iterate averaging: Monte Carlo runs,
/// verification suites, regularization paths and scheme comparisons.
#[derive(Parser)]
#[command(name = "geoavg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Master seed; replicate seeds are derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo replicates.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads (capped by GEOAVG_THREADS).
    #[arg(long)]
    workers: Option<usize>,
    /// Output path prefix.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo excess risk of one averaging scheme, with its bound.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a verification suite: prop1, prop2, prop3, lemma1, parallel,
    /// additive, or all.
    Verify {
        suite: String,
        #[command(flatten)]
        common: Common,
    },
    /// One SGD pass, then a regularization path selected on validation data.
    Path {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated lambda values (ascending).
        #[arg(long, value_delimiter = ',', conflicts_with = "tau_grid")]
        lambda_grid: Option<Vec<f64>>,
        /// Comma-separated tail start indices.
        #[arg(long, value_delimiter = ',')]
        tau_grid: Option<Vec<usize>>,
        /// Validation CSV (features then label); synthetic if omitted.
        #[arg(long)]
        validation: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare averaging schemes on common data streams over several horizons.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Scheme: uniform, geometric:rho=R, geometric:lambda=L,
        /// geometric:lambda=star, tail:tau=T, tail:frac=F. Repeatable.
        #[arg(long = "scheme")]
        schemes: Vec<String>,
        /// Comma-separated horizons.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic dataset drawn from the configured instance.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Number of samples (defaults to the configured n).
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

fn load(path: &PathBuf, common: &Common) -> Result<ExperimentConfig, GeoAvgError> {
    let mut config = ExperimentConfig::from_file(path)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(reps) = common.reps {
        config.reps = reps;
    }
    if let Some(out) = &common.out {
        config.output = out.clone();
    }
    Ok(config)
}

fn execute(command: Command) -> Result<ExitCode, GeoAvgError> {
    match command {
        Command::Run { config, common } => {
            let config = load(&config, &common)?;
            let outcome = cmd_run(&config, effective_workers(common.workers)?)?;
            write_run(&config, &outcome)?;
            print!("{}", outcome.csv(config.n));
            if let Some(msg) = &outcome.bound_error {
                eprintln!("geoavg: bound not applicable: {msg}");
                return Ok(ExitCode::from(2));
            }
            let ok = outcome.report.as_ref().and_then(|r| r.satisfied) == Some(true);
            Ok(ExitCode::from(if ok { 0 } else { 1 }))
        }
        Command::Verify { suite, common } => {
            let opts = VerifyOptions {
                reps: common.reps,
                seed: common.seed.unwrap_or(0),
                workers: effective_workers(common.workers)?,
            };
            let suites: Vec<&str> = if suite == "all" {
                VERIFY_SUITES.to_vec()
            } else {
                vec![suite.as_str()]
            };
            let mut all_ok = true;
            let mut reports = Vec::new();
            for s in suites {
                let report = cmd_verify(s, &opts)?;
                print!("{}", report.render());
                all_ok &= report.passed();
                reports.push(report);
            }
            if let Some(out) = &common.out {
                let file = std::fs::File::create(format!("{out}_verify.json"))?;
                serde_json::to_writer_pretty(file, &reports)?;
            }
            Ok(ExitCode::from(if all_ok { 0 } else { 1 }))
        }
        Command::Path {
            config,
            lambda_grid,
            tau_grid,
            validation,
            common,
        } => {
            let config = load(&config, &common)?;
            let grid = match (lambda_grid, tau_grid) {
                (Some(l), _) => Some(PathGrid::Lambda(l)),
                (None, Some(t)) => Some(PathGrid::Tau(t)),
                (None, None) => None,
            };
            let workers = effective_workers(common.workers)?;
            let (result, summary) = cmd_path(&config, grid, validation.as_deref(), workers)?;
            println!(
                "selected {} (validation mse {}) from {} entries",
                describe_key(&result.selected().key),
                summary.selected_validation_error,
                summary.entries
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare {
            config,
            schemes,
            horizons,
            common,
        } => {
            let config = load(&config, &common)?;
            let schemes = if schemes.is_empty() {
                config.schemes.clone()
            } else {
                schemes
            };
            let horizons = horizons.unwrap_or_else(|| config.horizons.clone());
            let result = cmd_compare(
                &config,
                &schemes,
                &horizons,
                effective_workers(common.workers)?,
            )?;
            write_compare(&config.output, &result)?;
            for (h, n) in result.horizons.iter().enumerate() {
                let cells: Vec<String> = result
                    .labels
                    .iter()
                    .zip(&result.estimates[h])
                    .map(|(l, e)| format!("{l}={:.6e}±{:.1e}", e.mean, e.stderr))
                    .collect();
                println!("n={n} {}", cells.join(" "));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { config, n, common } => {
            let mut config = load(&config, &common)?;
            if let Some(n) = n {
                config.n = n;
            }
            let (path, data) = cmd_synth(&config)?;
            println!("wrote {} samples to {}", data.len(), path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("geoavg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
