//! External UCI engine as an evaluation oracle, with a replayable cache.

mod cache;
mod uci;

pub use cache::{CacheMode, CachedEvaluator, NoEngine};
pub use uci::{parse_bestmove, parse_info, parse_search, InfoLine, Transcript, TranscriptLine, UciEngine};

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chess::{Board, Move};

/// Centipawn value standing in for a forced mate.
pub const MATE_CP: i32 = 10_000;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("failed to start engine {path}")]
    Spawn { path: String, source: io::Error },
    #[error("engine I/O error")]
    Io(#[from] io::Error),
    #[error("engine did not answer within {0:?}")]
    Timeout(std::time::Duration),
    #[error("engine process exited unexpectedly")]
    Crashed,
    #[error("engine protocol error: {0}")]
    Protocol(String),
    #[error("no cached evaluation for {fen} at depth {depth}")]
    CacheMiss { fen: String, depth: u32 },
    #[error("engine cache {path}: {reason}")]
    Cache { path: String, reason: String },
}

/// Score from the side to move's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Score {
    Cp(i32),
    /// Mate in `n` moves; negative when the side to move is being mated.
    /// `Mate(0)` means the side to move is already checkmated.
    Mate(i32),
}

impl Score {
    pub fn to_cp(self) -> i32 {
        match self {
            Score::Cp(cp) => cp,
            Score::Mate(n) if n > 0 => MATE_CP,
            Score::Mate(_) => -MATE_CP,
        }
    }

    /// The same score from the other side's point of view. Being mated
    /// (`Mate(0)`) becomes a mate the other side has just delivered, which is
    /// reported as `Mate(1)` so its sign survives.
    pub fn negate(self) -> Score {
        match self {
            Score::Cp(cp) => Score::Cp(-cp),
            Score::Mate(0) => Score::Mate(1),
            Score::Mate(n) => Score::Mate(-n),
        }
    }

    pub fn win_rate(self) -> f64 {
        cp_to_winrate(self.to_cp() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineEval {
    pub score: Score,
    /// `None` in terminal positions.
    pub best_move: Option<Move>,
    pub depth: u32,
}

impl EngineEval {
    pub fn is_terminal(&self) -> bool {
        self.best_move.is_none()
    }

    /// Evaluation of a position without legal moves, decided by the rules.
    pub fn terminal(board: &Board, depth: u32) -> EngineEval {
        EngineEval {
            score: if board.in_check() { Score::Mate(0) } else { Score::Cp(0) },
            best_move: None,
            depth,
        }
    }
}

/// Win percentage for a centipawn advantage: `50 + 50 * (2 / (1 + exp(-k cp)) - 1)`.
pub fn cp_to_winrate(cp: f64) -> f64 {
    50.0 + 50.0 * (2.0 / (1.0 + (-0.003_682_08 * cp).exp()) - 1.0)
}

pub trait Evaluator {
    fn evaluate(&mut self, board: &Board, depth: u32) -> Result<EngineEval, EngineError>;
}

/// Score of playing `mv` in `board`, from the mover's point of view.
pub fn evaluate_move(
    engine: &mut dyn Evaluator,
    board: &Board,
    mv: Move,
    depth: u32,
) -> Result<Score, EngineError> {
    let after = board
        .apply_move(mv)
        .map_err(|e| EngineError::Protocol(format!("cannot play {mv}: {e}")))?;
    Ok(engine.evaluate(&after, depth)?.score.negate())
}
