mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maia2::engine::EngineError;
use maia2::eval::EvalError;
use maia2::probes::ProbeError;
use maia2::trainer::TrainError;

/// Bad invocation or configuration (exit code 1).
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// A NaN/inf or failed numeric check (exit code 4).
#[derive(Debug)]
pub struct Numeric(pub String);

impl fmt::Display for Numeric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Numeric {}

#[derive(Parser, Debug)]
#[command(name = "maia2", version, about = "Skill-conditioned human move prediction for chess")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Run configuration (TOML). Defaults apply to every missing key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for the manifest and all reports [default: runs/<command>].
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// Worker threads [default: available parallelism].
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Single worker, for bit-identical reruns.
    #[arg(long, global = true)]
    pub reference_mode: bool,
    /// Replace the configured architecture with the small test model.
    #[arg(long, global = true)]
    pub toy: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse, filter and balance a PGN file into training shards.
    Ingest {
        /// PGN file, or - for stdin.
        #[arg(long)]
        pgn: PathBuf,
        /// Shard directory [default: <run-dir>/shards].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-chunk balancing statistics of a PGN file, without writing shards.
    BalanceStats {
        #[arg(long)]
        pgn: PathBuf,
    },
    /// Train a model on a shard directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Steps to run [default: optimizer.max_steps].
        #[arg(long)]
        steps: Option<u64>,
        /// Continue from a checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Freeze parameters whose path contains this string (repeatable).
        #[arg(long)]
        freeze: Vec<String>,
        /// Also save a checkpoint every N steps.
        #[arg(long)]
        checkpoint_every: Option<u64>,
    },
    /// Evaluate a checkpoint on a shard directory.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Use at most this many test positions.
        #[arg(long)]
        limit: Option<usize>,
        /// Answer engine queries only from this cache file.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Fit linear concept probes on a checkpoint's activations.
    Probe {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Move distribution for one position and skill pair.
    Predict {
        #[arg(long)]
        fen: String,
        #[arg(long)]
        active: usize,
        #[arg(long)]
        opp: usize,
        #[arg(long, default_value_t = 5)]
        topk: usize,
        /// Without a checkpoint the seeded initialization is used.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Probability table over every active skill bucket for one position.
    Sweep {
        #[arg(long)]
        fen: String,
        /// Fixed opponent bucket [default: equal to the active bucket].
        #[arg(long)]
        opp: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Finite-difference check of the analytic gradients.
    Gradcheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::BalanceStats { .. } => "balance-stats",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Probe { .. } => "probe",
            Command::Predict { .. } => "predict",
            Command::Sweep { .. } => "sweep",
            Command::Gradcheck => "gradcheck",
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if cause.is::<Numeric>() || matches!(cause.downcast_ref(), Some(TrainError::NonFinite { .. })) {
            return 4;
        }
        if cause.is::<EngineError>()
            || matches!(cause.downcast_ref(), Some(EvalError::Engine(_)))
            || matches!(cause.downcast_ref(), Some(ProbeError::Engine(_)))
        {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
