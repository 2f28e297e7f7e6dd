use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use latticehom::geometry::load_reference_values;
use latticehom::field::{Domain, FieldFile};
use latticehom::lattice::PatternMatrix;
use latticehom::solver::{error_metrics, StrainField};
use latticehom_cli::config::ExperimentConfig;
use latticehom_cli::output::{pattern_info, render_pattern};
use latticehom_cli::sweep::sweep_alpha;
use latticehom_cli::run_solve;

/// Environment variable holding the worker thread count.
const THREADS_VAR: &str = "LATTICEHOM_THREADS";

#[derive(Parser)]
#[command(name = "latticehom", version, about = "Spectral homogenization on lattice patterns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the cell problem described by a JSON config.
    Solve { config: PathBuf },
    /// Optimise the de la Vallée Poussin slopes against a reference.
    SweepAlpha { config: PathBuf },
    /// Describe the pattern of a matrix such as "[[2,1],[0,2]]".
    PatternInfo {
        #[arg(long)]
        matrix: String,
        #[arg(long)]
        json: bool,
    },
    /// Compare a strain field with a reference field or manifest.
    Errors {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Use log(1 + |ε + ε̃|) for the pointwise error.
        #[arg(long)]
        printed_sign: bool,
        /// Write the pointwise log error as a PPM image.
        #[arg(long)]
        elog: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_VAR) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_VAR} must be a positive integer, got {v:?}");
                return ExitCode::from(1);
            }
        }
    }
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Returns whether every solve converged.
fn run(command: Command) -> Result<bool> {
    match command {
        Command::Solve { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = run_solve(cfg)?;
            println!("{}", serde_json::to_string_pretty(&out.summary)?);
            if !out.summary.converged {
                eprintln!(
                    "not converged after {} iterations (residual {:e})",
                    out.summary.iterations, out.summary.final_residual
                );
            }
            Ok(out.summary.converged)
        }
        Command::SweepAlpha { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = sweep_alpha(cfg)?;
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(out.all_converged)
        }
        Command::PatternInfo { matrix, json } => {
            let m: PatternMatrix = matrix.parse().context("parsing --matrix")?;
            let info = pattern_info(&m)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&info)?);
            } else {
                println!("{info}");
            }
            Ok(true)
        }
        Command::Errors {
            field,
            reference,
            printed_sign,
            elog,
        } => {
            let file = FieldFile::read(&field).with_context(|| format!("reading {}", field.display()))?;
            anyhow::ensure!(file.domain == Domain::Space, "field must be space-domain");
            let d = file.matrix.dim();
            let e = StrainField::from_data(file.ncomp, file.values.clone())?;
            let r = load_reference_values(&reference, Some(&file.matrix), d)
                .with_context(|| format!("reading {}", reference.display()))?;
            let r_strain = r.strain_on(&file.matrix)?;
            let metrics = error_metrics(r_strain.as_ref().map(|s| (&e, s)), None, printed_sign)?;
            if let Some(p) = elog {
                let values = metrics
                    .e_log
                    .as_ref()
                    .context("the reference has no strain field; no e_log image")?;
                let lattice = latticehom::lattice::Lattice::new(&file.matrix)?;
                std::fs::write(&p, render_pattern(&lattice, values)?.to_ppm())?;
            }
            println!("{}", serde_json::to_string_pretty(&metrics)?);
            Ok(true)
        }
    }
}
