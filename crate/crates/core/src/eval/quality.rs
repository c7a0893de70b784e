use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EvalError, EvalExample, MovePredictor};
use crate::chess::{Board, Move};
use crate::engine::{cp_to_winrate, evaluate_move, EngineError, Evaluator, Score};

/// Win-rate loss, in percentage points, from which a move is a blunder.
pub const BLUNDER_THRESHOLD: f64 = 10.0;

pub fn is_blunder(winrate_loss: f64) -> bool {
    winrate_loss >= BLUNDER_THRESHOLD
}

/// Quality of a move by its win-rate loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QualityBand {
    /// No loss.
    Optimal,
    /// Below 5 points.
    Minor,
    /// 5 to 10 points.
    Error,
    /// 10 points or more.
    Blunder,
}

impl QualityBand {
    pub const ALL: [QualityBand; 4] = [
        QualityBand::Optimal,
        QualityBand::Minor,
        QualityBand::Error,
        QualityBand::Blunder,
    ];

    pub fn of(winrate_loss: f64) -> QualityBand {
        match winrate_loss {
            l if l <= 0.0 => QualityBand::Optimal,
            l if l < 5.0 => QualityBand::Minor,
            l if l < BLUNDER_THRESHOLD => QualityBand::Error,
            _ => QualityBand::Blunder,
        }
    }
}

/// One graded position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityRecord {
    /// Centipawn loss of the predicted move, floored at 0.
    pub cpl: f64,
    /// Win-rate loss of the predicted move (may be negative).
    pub predicted_loss: f64,
    /// Win-rate loss of the human move.
    pub played_loss: f64,
    /// The predicted move is the human move.
    pub correct: bool,
}

impl QualityRecord {
    /// Grades a predicted and a played move against the engine's best line.
    /// All scores are from the mover's point of view.
    pub fn new(best: Score, predicted: Score, played: Score, correct: bool) -> QualityRecord {
        QualityRecord {
            cpl: (best.to_cp() - predicted.to_cp()).max(0) as f64,
            predicted_loss: best.win_rate() - predicted.win_rate(),
            played_loss: best.win_rate() - played.win_rate(),
            correct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandAccuracy {
    pub band: QualityBand,
    pub total: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveQualityStats {
    pub evaluated: usize,
    /// Skipped positions by engine failure kind.
    pub skipped: BTreeMap<String, usize>,
    pub mean_cpl: Option<f64>,
    pub blunder_rate: Option<f64>,
    /// Prediction accuracy bucketed by the quality of the human move.
    pub by_played_quality: Vec<BandAccuracy>,
}

impl MoveQualityStats {
    pub fn from_records(records: &[QualityRecord], skipped: BTreeMap<String, usize>) -> MoveQualityStats {
        let n = records.len();
        let frac = |k: f64| (n > 0).then(|| k / n as f64);
        let by_played_quality = QualityBand::ALL
            .iter()
            .map(|&band| {
                let (total, correct) = records
                    .iter()
                    .filter(|r| QualityBand::of(r.played_loss) == band)
                    .fold((0, 0), |(t, c), r| (t + 1, c + r.correct as usize));
                BandAccuracy {
                    band,
                    total,
                    correct,
                    accuracy: (total > 0).then(|| correct as f64 / total as f64),
                }
            })
            .collect();
        MoveQualityStats {
            evaluated: n,
            skipped,
            mean_cpl: frac(records.iter().map(|r| r.cpl).sum()),
            blunder_rate: frac(records.iter().filter(|r| is_blunder(r.predicted_loss)).count() as f64),
            by_played_quality,
        }
    }
}

fn failure_kind(e: &EngineError) -> &'static str {
    match e {
        EngineError::Spawn { .. } => "spawn",
        EngineError::Io(_) => "io",
        EngineError::Timeout(_) => "timeout",
        EngineError::Crashed => "crashed",
        EngineError::Protocol(_) => "protocol",
        EngineError::CacheMiss { .. } => "cache_miss",
        EngineError::Cache { .. } => "cache",
    }
}

fn grade(
    predictor: &dyn MovePredictor,
    engine: &mut dyn Evaluator,
    ex: &EvalExample,
    depth: u32,
) -> Result<Option<Result<QualityRecord, EngineError>>, EvalError> {
    let predicted = predictor.predict(&ex.board, ex.active, ex.opponent)?.best();
    let graded = (|| {
        let best = engine.evaluate(&ex.board, depth)?;
        let Some(best_move) = best.best_move else {
            return Ok(None);
        };
        let mut score_of = |mv: Move| -> Result<Score, EngineError> {
            if mv == best_move {
                Ok(best.score)
            } else {
                evaluate_move(engine, &ex.board, mv, depth)
            }
        };
        let pred_score = score_of(predicted)?;
        let played_score = if ex.played == predicted {
            pred_score
        } else {
            score_of(ex.played)?
        };
        Ok(Some(QualityRecord::new(best.score, pred_score, played_score, predicted == ex.played)))
    })();
    Ok(match graded {
        Ok(None) => None,
        Ok(Some(r)) => Some(Ok(r)),
        Err(e) => Some(Err(e)),
    })
}

/// Grades the predicted moves against the engine. Positions the engine
/// fails on are skipped and tallied.
pub fn move_quality(
    predictor: &dyn MovePredictor,
    examples: &[EvalExample],
    engine: &mut dyn Evaluator,
    depth: u32,
) -> Result<MoveQualityStats, EvalError> {
    let mut records = Vec::new();
    let mut skipped = BTreeMap::new();
    for ex in examples {
        match grade(predictor, engine, ex, depth)? {
            Some(Ok(r)) => records.push(r),
            Some(Err(e)) => *skipped.entry(failure_kind(&e).to_string()).or_insert(0) += 1,
            None => *skipped.entry("terminal".to_string()).or_insert(0) += 1,
        }
    }
    Ok(MoveQualityStats::from_records(&records, skipped))
}

/// Pairs each non-terminal position with the engine's best move. Returns
/// the annotated positions and how many were skipped.
pub fn annotate_optimal(
    engine: &mut dyn Evaluator,
    boards: &[Board],
    depth: u32,
) -> (Vec<(Board, Move)>, usize) {
    let mut out = Vec::new();
    let mut skipped = 0;
    for b in boards {
        match engine.evaluate(b, depth) {
            Ok(e) => match e.best_move {
                Some(m) => out.push((b.clone(), m)),
                None => skipped += 1,
            },
            Err(_) => skipped += 1,
        }
    }
    (out, skipped)
}

/// Win-rate loss between two centipawn scores for the mover.
pub fn winrate_loss(best_cp: f64, move_cp: f64) -> f64 {
    cp_to_winrate(best_cp) - cp_to_winrate(move_cp)
}
