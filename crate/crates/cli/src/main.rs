//! `dsvd`: compress, inspect and rebuild fine-tuned checkpoints stored as
//! low-rank deltas against their base model.
//!
//! Every subcommand prints exactly one JSON document on stdout. Diagnostics
//! go to stderr. Exit codes: 0 success, 1 pipeline error, 2 usage error,
//! 3 verification above tolerance.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dsvd_core::{EnergyMode, MismatchPolicy};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "dsvd", version, about = "Low-rank delta compression for fine-tuned checkpoints")]
pub struct Cli {
    /// Worker threads for per-layer processing (0 = one per core).
    #[arg(long, global = true, env = "DSVD_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Factorize the fine-tuned minus base delta into an archive.
    Compress {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        finetuned: PathBuf,
        /// Cumulative energy threshold in (0, 1].
        #[arg(long, value_parser = parse_tau)]
        tau: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyArg::Strict)]
        policy: PolicyArg,
        #[arg(long = "energy-mode", value_enum, default_value_t = EnergyArg::Linear)]
        energy_mode: EnergyArg,
    },
    /// Add an archive back onto its base checkpoint.
    Reconstruct {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        delta: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Proceed even if the base fingerprint does not match.
        #[arg(long)]
        force: bool,
    },
    /// Summarize an archive: manifest, per-group ranks and storage.
    Inspect {
        #[arg(long)]
        delta: PathBuf,
        /// JSON layer-group config; defaults to the UNet groups.
        #[arg(long)]
        groups: Option<PathBuf>,
    },
    /// Per-layer cosine similarity between two checkpoints.
    Diff {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        finetuned: PathBuf,
    },
    /// Rebuild from an archive and measure error against the true checkpoint.
    Verify {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        finetuned: PathBuf,
        #[arg(long)]
        delta: PathBuf,
        /// Largest acceptable per-layer relative Frobenius error.
        #[arg(long, default_value_t = 1e-3, value_parser = parse_tol)]
        tol: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Strict,
    Skip,
}

impl From<PolicyArg> for MismatchPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Strict => MismatchPolicy::Strict,
            PolicyArg::Skip => MismatchPolicy::Skip,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EnergyArg {
    Linear,
    Squared,
}

impl From<EnergyArg> for EnergyMode {
    fn from(e: EnergyArg) -> Self {
        match e {
            EnergyArg::Linear => EnergyMode::Linear,
            EnergyArg::Squared => EnergyMode::Squared,
        }
    }
}

fn parse_tau(s: &str) -> Result<f64, String> {
    let tau: f64 = s.parse().map_err(|e| format!("not a number: {e}"))?;
    if tau > 0.0 && tau <= 1.0 {
        Ok(tau)
    } else {
        Err(format!("tau must lie in (0, 1], got {tau}"))
    }
}

fn parse_tol(s: &str) -> Result<f64, String> {
    let tol: f64 = s.parse().map_err(|e| format!("not a number: {e}"))?;
    if tol >= 0.0 && tol.is_finite() {
        Ok(tol)
    } else {
        Err(format!("tolerance must be a non-negative number, got {tol}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();

    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("{}", serde_json::json!({"error": "ThreadPool", "message": e.to_string()}));
        return ExitCode::from(1);
    }

    match commands::run(cli.command) {
        Ok(outcome) => {
            println!("{}", outcome.json);
            ExitCode::from(outcome.exit_code)
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({"error": e.code(), "message": e.to_string()}));
            ExitCode::from(1)
        }
    }
}
