use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use siga::harness::{catalog_text, run_experiment, ExperimentSpec};
use siga::io::load_model;
use siga::linalg::{CVector, RVector};
use siga::report::{sig17, to_json};
use siga::{certify, exact_posterior};

#[derive(Parser)]
#[command(version, about = "Damped Gaussian message passing with convergence certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep from a TOML spec.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory [default: out/<spec name>].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Replaces the spec's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the scenario catalog with its default parameters.
    List,
    /// Print the convergence certificate of a model bundle at damping `d` as JSON.
    Certify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        d: f64,
    },
    /// Print the exact posterior mean and marginal variances of a model bundle as JSON.
    Oracle {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Serialize)]
struct OracleOut {
    #[serde(with = "sig17::cvec")]
    mu: CVector,
    #[serde(with = "sig17::rvec")]
    variances: RVector,
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> siga::Result<ExitCode> {
    match command {
        Command::Run {
            spec,
            out,
            workers,
            seed,
        } => {
            let mut spec = ExperimentSpec::load(&spec)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let out = out.unwrap_or_else(|| PathBuf::from("out").join(&spec.name));
            let manifest = run_experiment(&spec, &out, workers)?;
            println!("{} -> {}", manifest.name, out.display());
            for c in &manifest.cells {
                let d = c.damping.map_or("-".to_string(), |d| format!("{d:.6}"));
                match (&c.status, &c.error) {
                    (_, Some(e)) => println!("  {}  d={d}  nu0={}  theta0={}  ERROR {e}", c.id, c.nu_init, c.theta_init),
                    (Some(s), None) => println!(
                        "  {}  d={d}  nu0={}  theta0={}  {:?} after {} iterations, certified={}",
                        c.id,
                        c.nu_init,
                        c.theta_init,
                        s,
                        c.iterations.unwrap_or(0),
                        c.certified.unwrap_or(false)
                    ),
                    (None, None) => {}
                }
            }
            Ok(if manifest.errored_cells > 0 {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::List => {
            print!("{}", catalog_text());
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify { model, d } => {
            let model = load_model(&model)?;
            print!("{}", to_json(&certify(&model, d)?)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { model } => {
            let model = load_model(&model)?;
            let post = exact_posterior(&model)?;
            let out = OracleOut {
                variances: post.marginal_variances(),
                mu: post.mu,
            };
            print!("{}", to_json(&out)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
