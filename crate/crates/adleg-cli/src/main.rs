use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use adleg_cli::{catalog, emit_outputs, run_all, run_experiment, ExperimentConfig, Verdict};

/// Adaptive Legendre-Galerkin experiments for 1-D elliptic problems.
#[derive(Parser)]
#[command(name = "adleg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config file.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
    },
    /// List the built-in problem catalog.
    Catalog,
    /// Run the full acceptance suite; exits 0 iff every criterion passes.
    Check {
        /// Only run criteria whose name contains this string (or whose id
        /// equals it).
        #[arg(long)]
        filter: Option<String>,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => {
            let config = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let report = run_experiment(&config).context("running experiment")?;
            let written = emit_outputs(&report, &config).context("writing outputs")?;

            let label = config.name.as_deref().unwrap_or("experiment");
            println!(
                "{label}: {} iterations, final residual in [{:.3e}, {:.3e}], {} dofs{}",
                report.totals.iterations,
                report.totals.final_residual_lo,
                report.totals.final_residual_hi,
                report.totals.final_dofs,
                if report.totals.truncated {
                    " (truncated at max_iter)"
                } else {
                    ""
                },
            );
            println!(
                "alpha_* = {:.6}, alpha^* = {:.6}, contraction bound rho = {:.6}",
                report.alpha_lower, report.alpha_upper, report.rho_bound
            );
            for check in &report.checks {
                println!(
                    "  {:<18} {:<14} margin {:+.3e}  {}",
                    check.name,
                    check.verdict.to_string(),
                    check.margin,
                    check.detail
                );
            }
            for path in written {
                println!("wrote {}", path.display());
            }
            let failed = report.checks.iter().any(|c| c.verdict == Verdict::Fail)
                || report.rows.iter().any(|r| r.verdict == Verdict::Fail)
                || report.totals.truncated;
            Ok(if failed {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Catalog => {
            for entry in catalog() {
                println!("{:<4} {}", entry.name, entry.description);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { filter } => {
            let outcomes = run_all(filter.as_deref());
            if outcomes.is_empty() {
                anyhow::bail!("no criterion matches the filter");
            }
            for outcome in &outcomes {
                println!("{}", outcome.summary_line());
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!(
                "{} of {} criteria passed",
                outcomes.len() - failed,
                outcomes.len()
            );
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
