use serde::{Deserialize, Serialize};

use super::ProbeError;
use crate::chess::{Board, PieceKind, Square};
use crate::engine::Evaluator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptKind {
    Binary,
    Continuous,
}

/// A quantity read off a position, always from the side to move's point of
/// view. Binary concepts return 0 or 1.
pub trait Concept {
    fn name(&self) -> &str;
    fn kind(&self) -> ConceptKind;
    fn needs_engine(&self) -> bool {
        false
    }
    fn compute(&self, board: &Board, engine: Option<&mut dyn Evaluator>) -> Result<f64, ProbeError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    /// Pawn-unit material of the side to move minus the opponent's.
    MaterialBalance,
    /// Engine score in centipawns, mates mapped to +-10000.
    EngineEval { depth: u32 },
    ActiveTwoBishops,
    OpponentTwoBishops,
    /// A legal move captures the opponent's queen.
    CanCaptureQueen,
    /// A legal capture lands on the given square.
    CaptureOn(Square),
}

pub const BUILTIN_NAMES: [&str; 6] = [
    "material_balance",
    "engine_eval",
    "active_two_bishops",
    "opponent_two_bishops",
    "can_capture_queen",
    "capture_on_d3",
];

impl Builtin {
    /// Looks up a built-in by name; `engine_eval` uses `depth`.
    pub fn by_name(name: &str, depth: u32) -> Option<Builtin> {
        Some(match name {
            "material_balance" => Builtin::MaterialBalance,
            "engine_eval" => Builtin::EngineEval { depth },
            "active_two_bishops" => Builtin::ActiveTwoBishops,
            "opponent_two_bishops" => Builtin::OpponentTwoBishops,
            "can_capture_queen" => Builtin::CanCaptureQueen,
            "capture_on_d3" => Builtin::CaptureOn("d3".parse().expect("square")),
            _ => return None,
        })
    }

    pub fn all(depth: u32) -> Vec<Builtin> {
        BUILTIN_NAMES.iter().map(|n| Builtin::by_name(n, depth).expect("builtin")).collect()
    }
}

fn piece_value(kind: PieceKind) -> f64 {
    match kind {
        PieceKind::Pawn => 1.0,
        PieceKind::Knight | PieceKind::Bishop => 3.0,
        PieceKind::Rook => 5.0,
        PieceKind::Queen => 9.0,
        PieceKind::King => 0.0,
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl Concept for Builtin {
    fn name(&self) -> &str {
        match self {
            Builtin::MaterialBalance => "material_balance",
            Builtin::EngineEval { .. } => "engine_eval",
            Builtin::ActiveTwoBishops => "active_two_bishops",
            Builtin::OpponentTwoBishops => "opponent_two_bishops",
            Builtin::CanCaptureQueen => "can_capture_queen",
            Builtin::CaptureOn(_) => "capture_on_d3",
        }
    }

    fn kind(&self) -> ConceptKind {
        match self {
            Builtin::MaterialBalance | Builtin::EngineEval { .. } => ConceptKind::Continuous,
            _ => ConceptKind::Binary,
        }
    }

    fn needs_engine(&self) -> bool {
        matches!(self, Builtin::EngineEval { .. })
    }

    fn compute(&self, board: &Board, engine: Option<&mut dyn Evaluator>) -> Result<f64, ProbeError> {
        let us = board.side_to_move();
        let bishops = |c| board.pieces().filter(|(_, p)| p.color == c && p.kind == PieceKind::Bishop).count();
        Ok(match *self {
            Builtin::MaterialBalance => board
                .pieces()
                .map(|(_, p)| if p.color == us { 1.0 } else { -1.0 } * piece_value(p.kind))
                .sum(),
            Builtin::EngineEval { depth } => {
                let engine = engine.ok_or_else(|| ProbeError::EngineRequired(self.name().to_string()))?;
                engine.evaluate(board, depth)?.score.to_cp() as f64
            }
            Builtin::ActiveTwoBishops => flag(bishops(us) >= 2),
            Builtin::OpponentTwoBishops => flag(bishops(us.opposite()) >= 2),
            Builtin::CanCaptureQueen => flag(
                board
                    .legal_moves()
                    .into_iter()
                    .any(|m| board.captured_piece(m).is_some_and(|p| p.kind == PieceKind::Queen)),
            ),
            Builtin::CaptureOn(sq) => flag(
                board
                    .legal_moves()
                    .into_iter()
                    .any(|m| m.to == sq && board.captured_piece(m).is_some()),
            ),
        })
    }
}

/// Labels of one concept over a position set.
pub fn compute_labels(
    concept: &dyn Concept,
    boards: &[Board],
    mut engine: Option<&mut dyn Evaluator>,
) -> Result<Vec<f64>, ProbeError> {
    if concept.needs_engine() && engine.is_none() {
        return Err(ProbeError::EngineRequired(concept.name().to_string()));
    }
    let mut out = Vec::with_capacity(boards.len());
    for b in boards {
        let e: Option<&mut dyn Evaluator> = match engine {
            Some(ref mut e) => Some(&mut **e),
            None => None,
        };
        out.push(concept.compute(b, e)?);
    }
    Ok(out)
}
