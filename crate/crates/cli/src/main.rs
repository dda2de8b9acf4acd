//! `plmix`: fit, compare and check Plackett-Luce mixtures for top-m rankings.

mod analysis;
mod fit;
mod manifest;
mod output;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use analysis::{cmd_gof, cmd_report, GofArgs, ReportArgs};
use fit::{cmd_fit, cmd_select, FitArgs, SelectArgs};
use manifest::RunManifest;
use output::{CliError, CliResult};
use simulate::{cmd_simulate, SimulateArgs};

#[derive(Parser)]
#[command(
    name = "plmix",
    version,
    about = "Bayesian Plackett-Luce mixtures for top-m partial rankings"
)]
struct Cli {
    /// Worker threads; defaults to the available cores
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// MAP estimate, Gibbs chain and relabeled summaries for one G
    Fit(FitArgs),
    /// Fit a range of G and compare the selection criteria
    Select(SelectArgs),
    /// Posterior predictive checks on a fitted chain
    Gof(GofArgs),
    /// Simulation study of criterion agreement rates
    Simulate(SimulateArgs),
    /// Plot-ready CSVs from a fit or select run
    Report(ReportArgs),
    /// Rerun a command from its manifest
    Replay(ReplayArgs),
}

#[derive(clap::Args)]
struct ReplayArgs {
    /// manifest.json written by a previous run
    manifest: PathBuf,
    /// Output directory, defaults to the manifest's directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn recorded<T: DeserializeOwned>(manifest: &RunManifest) -> CliResult<T> {
    serde_json::from_value(manifest.config.clone()).map_err(|e| {
        CliError::Usage(format!(
            "manifest arguments for `{}` are unreadable: {e}",
            manifest.command
        ))
    })
}

fn cmd_replay(args: ReplayArgs) -> CliResult<()> {
    let manifest = RunManifest::load(&args.manifest)?;
    manifest.verify_inputs()?;
    let out = match args.out {
        Some(out) => out,
        None => args
            .manifest
            .parent()
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    match manifest.command.as_str() {
        "fit" => cmd_fit(FitArgs {
            out,
            ..recorded(&manifest)?
        }),
        "select" => cmd_select(SelectArgs {
            out,
            ..recorded(&manifest)?
        }),
        "gof" => cmd_gof(GofArgs {
            out: Some(out),
            ..recorded(&manifest)?
        }),
        "simulate" => cmd_simulate(SimulateArgs {
            out,
            ..recorded(&manifest)?
        }),
        "report" => cmd_report(ReportArgs {
            out: Some(out),
            ..recorded(&manifest)?
        }),
        other => Err(CliError::Usage(format!("cannot replay command `{other}`"))),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?;
    }
    match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Select(args) => cmd_select(args),
        Command::Gof(args) => cmd_gof(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Report(args) => cmd_report(args),
        Command::Replay(args) => cmd_replay(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
