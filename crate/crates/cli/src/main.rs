use anyhow::{Context, Result};
use blockquad::driver::{gen, load_problem, run_to_dir, EnrichConfig, Overrides, RunConfig};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Block Gauss / Gauss-Radau quadrature bounds for Bᵀ φ(A) B.
#[derive(Parser)]
#[command(name = "blockquad", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study and write convergence.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        m_max: Option<usize>,
        /// Append this many random columns to B.
        #[arg(long)]
        enrich: Option<usize>,
        /// Seed for the enrichment columns.
        #[arg(long, requires = "enrich")]
        seed: Option<u64>,
        /// Full reorthogonalisation in block Lanczos.
        #[arg(long)]
        reorth: bool,
        /// Skip the direct-solve reference (error columns stay empty).
        #[arg(long)]
        no_oracle: bool,
        /// Output directory; defaults to `out` from the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write A.mtx and B.txt for a problem description.
    Gen {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            m_max,
            enrich,
            seed,
            reorth,
            no_oracle,
            out,
        } => {
            let (mut run_config, base) =
                RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            Overrides {
                m_max,
                enrich: enrich.map(|p| EnrichConfig {
                    p,
                    seed: seed.unwrap_or(0),
                }),
                reorth,
                no_oracle,
            }
            .apply(&mut run_config);
            let out = out.unwrap_or_else(|| base.join(&run_config.out));
            let outcome = run_to_dir(&run_config, &base, &out)?;
            let summary = &outcome.summary;
            for warning in &summary.warnings {
                eprintln!("warning: {warning}");
            }
            if let Some(step) = summary.breakdown_step {
                eprintln!("block Lanczos broke down at step {step}");
            }
            eprintln!(
                "n = {}, p = {}, {} Lanczos steps, {} rows written to {}",
                summary.n,
                summary.p,
                summary.lanczos_steps,
                summary.rows,
                out.join("convergence.csv").display()
            );
        }
        Command::Gen { problem, out } => {
            let (spec, base) = load_problem(&problem).with_context(|| format!("loading {}", problem.display()))?;
            let (a, b) = gen(&spec, &base, &out)?;
            eprintln!("wrote {} and {}", a.display(), b.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
