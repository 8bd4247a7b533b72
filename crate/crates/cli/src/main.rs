use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use varinc_cli::commands::{self, parse_tol, Tolerances};
use varinc_cli::config;

/// Variation-based analysis of differential-inclusion problems.
#[derive(Parser)]
#[command(name = "varinc", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (JSON, schema "varinc/1").
    #[arg(long)]
    config: PathBuf,
    /// Tolerance override, repeatable.
    #[arg(long = "tol", value_name = "NAME=VAL", value_parser = parse_tol)]
    tol: Vec<(String, f64)>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Staircases of the cumulative variation over the (delta, eps) grid.
    Variation {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "varinc-out")]
        out: PathBuf,
        /// Dyadic refinement levels.
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Penalized transcription over the schedule with multiplier extraction.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "varinc-out")]
        out: PathBuf,
    },
    /// Checks a multiplier file against the necessary conditions.
    Check {
        #[command(flatten)]
        common: Common,
        /// Multiplier JSON as written by `solve`.
        #[arg(long)]
        multipliers: PathBuf,
        /// Directory for check_report.json (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lipschitz certificate for a variational problem.
    CertifyLipschitz {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "varinc-out")]
        out: PathBuf,
        /// Coarsest grid N of the N, 2N, 4N sequence.
        #[arg(long)]
        levels: Option<usize>,
    },
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let common = match &cli.cmd {
        Cmd::Variation { common, .. }
        | Cmd::Solve { common, .. }
        | Cmd::Check { common, .. }
        | Cmd::CertifyLipschitz { common, .. } => common,
    };
    let cfg = config::load(&common.config)?;
    let tol = Tolerances::merge(&cfg, &common.tol)?;
    match &cli.cmd {
        Cmd::Variation { out, levels, .. } => commands::variation(&cfg, out, *levels, &tol),
        Cmd::Solve { out, .. } => commands::solve(&cfg, out, &tol),
        Cmd::Check { multipliers, out, .. } => commands::check(&cfg, multipliers, out.as_deref(), &tol),
        Cmd::CertifyLipschitz { out, levels, .. } => commands::certify(&cfg, out, *levels, &tol),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
