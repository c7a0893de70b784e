//! Evaluation metrics: grouped accuracy and perplexity, skill-sweep
//! smoothness, cross-skill accuracy and agreement, value calibration and
//! engine-graded move quality.
//!
//! Each metric has a pure core over precomputed predictions so it can be
//! checked against hand-computed tables, plus a driver over a
//! [`MovePredictor`].

mod metrics;
mod quality;
mod report;

pub use metrics::{
    accuracy_report, agreement, agreement_from_argmax, calibration, calibration_from_pairs, classify_sweep,
    cross_skill_accuracy, perplexity, score_examples, smoothness, AccuracyReport, AgreementMatrices,
    CalibrationBin, CalibrationBins, CrossSkillMatrix, GroupAccuracy, GroupPerplexity, Monotonicity,
    PerplexityReport, ScoredExample, SmoothnessStats, SweepClass, CALIBRATION_BINS, SMOOTHNESS_BUCKETS,
};
pub use quality::{
    annotate_optimal, is_blunder, move_quality, winrate_loss, BandAccuracy, MoveQualityStats, QualityBand,
    QualityRecord, BLUNDER_THRESHOLD,
};
pub use report::{write_matrix_csv, EvalReport};

use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chess::{Board, Move};
use crate::engine::{EngineError, Evaluator};
use crate::model::{ModelError, Network, Prediction};
use crate::pipeline::{BucketScheme, TrainingExample};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("bad evaluation data: {0}")]
    Data(String),
    #[error("cannot write report {path}")]
    Io { path: PathBuf, source: io::Error },
}

/// Coarse rating groups used for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SkillGroup {
    /// Below 1600.
    Skilled,
    /// 1600 to 1999.
    Advanced,
    /// 2000 and above.
    Master,
}

impl SkillGroup {
    pub const ALL: [SkillGroup; 3] = [SkillGroup::Skilled, SkillGroup::Advanced, SkillGroup::Master];

    pub fn from_rating(rating: u32) -> SkillGroup {
        match rating {
            0..1600 => SkillGroup::Skilled,
            1600..2000 => SkillGroup::Advanced,
            _ => SkillGroup::Master,
        }
    }

    /// Group of a bucket's lowest rating. Exact for the standard scheme,
    /// whose bucket edges fall on the group boundaries.
    pub fn from_bucket(bucket: usize, scheme: BucketScheme) -> SkillGroup {
        SkillGroup::from_rating(scheme.lower_edge(bucket))
    }

    pub fn name(self) -> &'static str {
        match self {
            SkillGroup::Skilled => "skilled",
            SkillGroup::Advanced => "advanced",
            SkillGroup::Master => "master",
        }
    }
}

/// A test position with the human move actually played.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalExample {
    pub board: Board,
    pub played: Move,
    pub active: usize,
    pub opponent: usize,
    /// +1 win, 0 draw, -1 loss for the side to move.
    pub outcome: i8,
}

impl EvalExample {
    pub fn from_training(ex: &TrainingExample) -> Result<EvalExample, EvalError> {
        let board = ex.board().map_err(|e| EvalError::Data(format!("{}: {e}", ex.fen)))?;
        if !board.is_legal(ex.mv) {
            return Err(EvalError::Data(format!("move {} is illegal in {}", ex.mv, ex.fen)));
        }
        Ok(EvalExample {
            board,
            played: ex.mv,
            active: ex.active_bucket,
            opponent: ex.opp_bucket,
            outcome: ex.outcome,
        })
    }

    /// Outcome as a score in {0, 0.5, 1}.
    pub fn score(&self) -> f64 {
        (self.outcome as f64 + 1.0) / 2.0
    }
}

/// Anything that yields a legal-move distribution for a position at a pair
/// of skill buckets.
pub trait MovePredictor {
    fn buckets(&self) -> usize;

    fn predict(&self, board: &Board, active: usize, opponent: usize) -> Result<Prediction, ModelError>;

    /// Predictions for every active bucket at a fixed opponent bucket.
    fn sweep(&self, board: &Board, opponent: usize) -> Result<Vec<Prediction>, ModelError> {
        (0..self.buckets()).map(|a| self.predict(board, a, opponent)).collect()
    }
}

impl MovePredictor for Network {
    fn buckets(&self) -> usize {
        self.config().buckets
    }

    fn predict(&self, board: &Board, active: usize, opponent: usize) -> Result<Prediction, ModelError> {
        Network::predict(self, board, active, opponent)
    }

    fn sweep(&self, board: &Board, opponent: usize) -> Result<Vec<Prediction>, ModelError> {
        let s = self.sweep_skills(board, opponent)?;
        Ok(s.rows
            .into_iter()
            .zip(s.win_probs)
            .map(|(probs, win_prob)| Prediction {
                moves: s.moves.clone(),
                probs,
                win_prob,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub engine_depth: u32,
    /// Cross-skill cells with fewer examples are reported absent.
    pub min_cell_count: usize,
    /// Positions (taken from the front of the test set) used for agreement
    /// and smoothness; 0 disables both.
    pub sweep_positions: usize,
    /// Dip allowed between consecutive sweep points; 0 means strict increase.
    pub monotonic_tolerance: f64,
    pub bucket_scheme: BucketScheme,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            engine_depth: 12,
            min_cell_count: 1,
            sweep_positions: 200,
            monotonic_tolerance: 0.0,
            bucket_scheme: BucketScheme::Standard,
        }
    }
}

/// Runs every metric. Engine-backed sections (smoothness, move quality)
/// need `engine`.
pub fn evaluate(
    predictor: &dyn MovePredictor,
    examples: &[EvalExample],
    cfg: &EvalConfig,
    engine: Option<&mut dyn Evaluator>,
) -> Result<EvalReport, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::Data("empty test set".into()));
    }
    let scored = score_examples(predictor, examples, cfg.bucket_scheme)?;
    let sweep: Vec<Board> = examples.iter().take(cfg.sweep_positions).map(|e| e.board.clone()).collect();
    let agreement = (!sweep.is_empty()).then(|| agreement(predictor, &sweep)).transpose()?;
    let (smoothness, move_quality) = match engine {
        Some(engine) => {
            let mode = if cfg.monotonic_tolerance > 0.0 {
                Monotonicity::Tolerant(cfg.monotonic_tolerance)
            } else {
                Monotonicity::Strict
            };
            let smooth = if sweep.is_empty() || predictor.buckets() <= *SMOOTHNESS_BUCKETS.end() {
                None
            } else {
                let (annotated, skipped) = annotate_optimal(engine, &sweep, cfg.engine_depth);
                let mut s = smoothness(predictor, &annotated, mode)?;
                s.skipped += skipped;
                Some(s)
            };
            (smooth, Some(move_quality(predictor, examples, engine, cfg.engine_depth)?))
        }
        None => (None, None),
    };
    Ok(EvalReport {
        examples: examples.len(),
        accuracy: accuracy_report(&scored),
        perplexity: perplexity(&scored),
        cross_skill: cross_skill_accuracy(&scored, predictor.buckets(), cfg.min_cell_count),
        calibration: calibration(&scored)?,
        agreement,
        smoothness,
        move_quality,
    })
}
