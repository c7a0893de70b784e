//! Board to input-tensor conversion and training labels.
//!
//! Channel layout of the 18 x 8 x 8 tensor (square index = rank * 8 + file):
//!
//! | channels | content                                            |
//! |----------|----------------------------------------------------|
//! | 0..6     | white pawn, knight, bishop, rook, queen, king      |
//! | 6..12    | black pawn, knight, bishop, rook, queen, king      |
//! | 12       | side to move (all ones for white)                  |
//! | 13..17   | castling: white king/queen side, black king/queen  |
//! | 17       | en-passant target square                           |
//!
//! The auxiliary label vector is the concatenation, in this order, of the
//! legal-move multi-hot (4168), moved piece (6), captured piece (6, all zero
//! when nothing is captured), origin square (64), destination square (64)
//! and a check bit.

use thiserror::Error;

use crate::chess::{Board, CastlingRights, Color, Move, MoveIndex, PieceKind, VocabError, VOCAB_SIZE};

pub const INPUT_CHANNELS: usize = 18;
pub const BOARD_CELLS: usize = 64;
pub const AUX_DIM: usize = VOCAB_SIZE + 6 + 6 + 64 + 64 + 1;

const SIDE_PLANE: usize = 12;
const CASTLING_PLANE: usize = 13;
const EN_PASSANT_PLANE: usize = 17;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodingError {
    #[error("position must have white to move (mirror it first): {0}")]
    BlackToMove(String),
    #[error("move {mv} is not legal in {fen}")]
    IllegalMove { mv: Move, fen: String },
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("outcome {0} is not one of -1, 0, 1")]
    BadOutcome(f32),
}

/// The model input for one position, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionTensor {
    values: Vec<f32>,
}

impl PositionTensor {
    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, channel: usize, square: usize) -> f32 {
        self.values[channel * BOARD_CELLS + square]
    }

    pub fn plane(&self, channel: usize) -> &[f32] {
        &self.values[channel * BOARD_CELLS..(channel + 1) * BOARD_CELLS]
    }

    /// Wraps raw channel-major values, e.g. synthetic inputs in tests.
    pub fn from_values(values: Vec<f32>) -> PositionTensor {
        assert_eq!(values.len(), INPUT_CHANNELS * BOARD_CELLS);
        PositionTensor { values }
    }
}

pub fn encode_position(board: &Board) -> Result<PositionTensor, EncodingError> {
    if board.side_to_move() != Color::White {
        return Err(EncodingError::BlackToMove(board.to_fen()));
    }
    let mut values = vec![0.0f32; INPUT_CHANNELS * BOARD_CELLS];
    let mut fill = |channel: usize| values[channel * BOARD_CELLS..(channel + 1) * BOARD_CELLS].fill(1.0);
    fill(SIDE_PLANE);
    let castling = board.castling();
    for (i, flag) in [
        CastlingRights::WHITE_KING,
        CastlingRights::WHITE_QUEEN,
        CastlingRights::BLACK_KING,
        CastlingRights::BLACK_QUEEN,
    ]
    .into_iter()
    .enumerate()
    {
        if castling.has(flag) {
            fill(CASTLING_PLANE + i);
        }
    }
    for (sq, piece) in board.pieces() {
        let channel = piece.color.index() * 6 + piece.kind.index();
        values[channel * BOARD_CELLS + sq.index()] = 1.0;
    }
    if let Some(ep) = board.en_passant() {
        values[EN_PASSANT_PLANE * BOARD_CELLS + ep.index()] = 1.0;
    }
    Ok(PositionTensor { values })
}

/// Auxiliary targets for one (position, played move) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxLabels {
    /// Sorted vocabulary indices of every legal move.
    pub legal_moves: Vec<MoveIndex>,
    pub piece_moved: PieceKind,
    pub piece_captured: Option<PieceKind>,
    pub from_square: usize,
    pub to_square: usize,
    pub is_check: bool,
}

impl AuxLabels {
    /// Dense 0/1 vector of length [`AUX_DIM`].
    pub fn to_dense(&self) -> Vec<f32> {
        let mut v = vec![0.0; AUX_DIM];
        self.write_dense(&mut v);
        v
    }

    /// Writes the dense vector into `out`, which must be zeroed and `AUX_DIM` long.
    pub fn write_dense(&self, out: &mut [f32]) {
        for m in &self.legal_moves {
            out[m.index()] = 1.0;
        }
        let mut off = VOCAB_SIZE;
        out[off + self.piece_moved.index()] = 1.0;
        off += 6;
        if let Some(c) = self.piece_captured {
            out[off + c.index()] = 1.0;
        }
        off += 6;
        out[off + self.from_square] = 1.0;
        off += 64;
        out[off + self.to_square] = 1.0;
        off += 64;
        if self.is_check {
            out[off] = 1.0;
        }
    }
}

/// All model targets for one training position.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub policy: MoveIndex,
    pub aux: AuxLabels,
    pub value: f32,
}

pub fn build_labels(board: &Board, played: Move, outcome: f32) -> Result<Labels, EncodingError> {
    if ![-1.0, 0.0, 1.0].contains(&outcome) {
        return Err(EncodingError::BadOutcome(outcome));
    }
    let legal = board.legal_moves();
    if !legal.contains(&played) {
        return Err(EncodingError::IllegalMove {
            mv: played,
            fen: board.to_fen(),
        });
    }
    let mut legal_moves = legal
        .iter()
        .map(|&m| MoveIndex::from_move(m))
        .collect::<Result<Vec<_>, _>>()?;
    legal_moves.sort();
    legal_moves.dedup();
    let piece_moved = board
        .piece_at(played.from)
        .expect("legal move has a piece on its origin")
        .kind;
    let aux = AuxLabels {
        legal_moves,
        piece_moved,
        piece_captured: board.captured_piece(played).map(|p| p.kind),
        from_square: played.from.index(),
        to_square: played.to.index(),
        is_check: board.gives_check(played),
    };
    Ok(Labels {
        policy: MoveIndex::from_move(played)?,
        aux,
        value: outcome,
    })
}

/// Everything the model consumes for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub input: PositionTensor,
    pub active: usize,
    pub opponent: usize,
    pub labels: Labels,
}

pub fn encode_example(
    board: &Board,
    played: Move,
    active: usize,
    opponent: usize,
    outcome: f32,
) -> Result<EncodedExample, EncodingError> {
    Ok(EncodedExample {
        input: encode_position(board)?,
        active,
        opponent,
        labels: build_labels(board, played, outcome)?,
    })
}
