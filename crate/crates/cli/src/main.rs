//! perften: predict held-out experiment scores from performance records and
//! audit how reliable those predictions are.
//!
//! Subcommands: `evaluate` (k-fold RMSE), `complete` (fill masked tensor
//! cells), `reliability` (bootstrap intervals + calibration), `diagram`
//! (re-render the reliability diagram CSV from a saved report). All runs
//! are driven by a TOML config plus overriding flags; set `PERFTEN_LOG` to
//! error, info, or debug for stderr logging.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CommonOverrides;
use config::{RunConfig, UsageError};

#[derive(Parser)]
#[command(name = "perften", version, about = "Performance prediction and reliability auditing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// k-fold cross-validated RMSE; writes eval_report.json + residuals.csv
    Evaluate(RunArgs),
    /// Fill masked tensor cells; writes completed.csv + labels.json
    Complete(RunArgs),
    /// Bootstrap confidence intervals and their calibration; writes
    /// calibration.json + diagram.csv + intervals.csv
    Reliability(RunArgs),
    /// Re-render diagram.csv from a saved calibration.json
    Diagram(DiagramArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Model name: baseline, xgb, lgbm, cp, rpca
    #[arg(long)]
    model: Option<String>,
    /// Cross-validation fold count
    #[arg(long)]
    k: Option<usize>,
    /// Bootstrap resample count
    #[arg(long = "bootstrap-k")]
    bootstrap_k: Option<usize>,
    /// Seed for the command being run
    #[arg(long)]
    seed: Option<u64>,
    /// Confidence grid as START:END:STEP (e.g. 0.05:1.00:0.05)
    #[arg(long)]
    levels: Option<String>,
    /// Output directory (overrides out_dir in the config)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagramArgs {
    /// Saved calibration.json
    report: PathBuf,
    /// Output CSV path (defaults to diagram.csv beside the report)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> CommonOverrides {
        CommonOverrides {
            model: self.model.clone(),
            k: self.k,
            bootstrap_k: self.bootstrap_k,
            seed: self.seed,
            levels: self.levels.clone(),
            out: self.out.clone(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::default().filter_or("PERFTEN_LOG", "error"),
    )
    .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// Usage, config, and input-schema problems exit 2; runtime failures exit 1.
fn exit_code_for(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    if let Some(core) = e.downcast_ref::<perften_core::Error>() {
        use perften_core::Error::*;
        if matches!(
            core,
            Schema(_) | Parse { .. } | Domain(_) | InfeasiblePlan(_) | DuplicateEntry(_)
                | UnknownLabel { .. }
        ) {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Evaluate(args) => {
            let config = RunConfig::load(&args.config)?;
            commands::cmd_evaluate(&config, &args.overrides())
        }
        Command::Complete(args) => {
            let config = RunConfig::load(&args.config)?;
            commands::cmd_complete(&config, &args.overrides())
        }
        Command::Reliability(args) => {
            let config = RunConfig::load(&args.config)?;
            commands::cmd_reliability(&config, &args.overrides())
        }
        Command::Diagram(args) => commands::cmd_diagram(&args.report, args.out.as_deref()),
    }
}
