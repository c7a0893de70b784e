//! The fixed policy vocabulary: 64x64 from/to pairs followed by the 72
//! white underpromotions. Queen promotions share the plain from/to index.

use thiserror::Error;

use super::{Board, Move, PieceKind, Square};

pub const VOCAB_SIZE: usize = 4168;
pub const UNDERPROMOTION_BASE: usize = 4096;

const UNDERPROMOTION_PIECES: [PieceKind; 3] = [PieceKind::Knight, PieceKind::Bishop, PieceKind::Rook];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MoveIndex(u16);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("move index {0} out of range (vocabulary has {VOCAB_SIZE} entries)")]
    OutOfRange(usize),
    #[error("move {0} cannot be encoded: underpromotions must go from rank 7 to rank 8")]
    NotEncodable(Move),
    #[error("move index {0} is an unused vocabulary slot")]
    Unused(usize),
}

impl MoveIndex {
    pub fn new(index: usize) -> Result<MoveIndex, VocabError> {
        if index < VOCAB_SIZE {
            Ok(MoveIndex(index as u16))
        } else {
            Err(VocabError::OutOfRange(index))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_move(m: Move) -> Result<MoveIndex, VocabError> {
        match m.promotion {
            None | Some(PieceKind::Queen) => Ok(MoveIndex((m.from.index() * 64 + m.to.index()) as u16)),
            Some(kind) => {
                let piece_idx = UNDERPROMOTION_PIECES
                    .iter()
                    .position(|&k| k == kind)
                    .ok_or(VocabError::NotEncodable(m))?;
                let df = m.to.file() as i8 - m.from.file() as i8;
                if m.from.rank() != 6 || m.to.rank() != 7 || df.abs() > 1 {
                    return Err(VocabError::NotEncodable(m));
                }
                let idx = UNDERPROMOTION_BASE
                    + piece_idx * 24
                    + m.from.file() as usize * 3
                    + (df + 1) as usize;
                Ok(MoveIndex(idx as u16))
            }
        }
    }

    /// Decodes without board context; queen promotions come back as plain
    /// moves. Slots that no move maps to (from == to, or an underpromotion
    /// capturing off the board edge) are reported as [`VocabError::Unused`].
    pub fn to_move(self) -> Result<Move, VocabError> {
        let i = self.index();
        if i < UNDERPROMOTION_BASE {
            let (from, to) = (i / 64, i % 64);
            if from == to {
                return Err(VocabError::Unused(i));
            }
            Ok(Move::new(
                Square::new(from as u8).unwrap(),
                Square::new(to as u8).unwrap(),
            ))
        } else {
            let r = i - UNDERPROMOTION_BASE;
            let kind = UNDERPROMOTION_PIECES[r / 24];
            let from_file = ((r % 24) / 3) as i8;
            let to_file = from_file + (r % 3) as i8 - 1;
            if !(0..8).contains(&to_file) {
                return Err(VocabError::Unused(i));
            }
            Ok(Move::with_promotion(
                Square::from_coords(from_file as u8, 6),
                Square::from_coords(to_file as u8, 7),
                kind,
            ))
        }
    }

    /// Decodes in the context of a position, restoring the queen promotion
    /// when the plain index denotes a pawn reaching the last rank.
    pub fn to_move_in(self, board: &Board) -> Result<Move, VocabError> {
        let m = self.to_move()?;
        if m.promotion.is_none()
            && board.piece_at(m.from).is_some_and(|p| p.kind == PieceKind::Pawn)
            && (m.to.rank() == 7 || m.to.rank() == 0)
        {
            return Ok(Move::with_promotion(m.from, m.to, PieceKind::Queen));
        }
        Ok(m)
    }
}

impl TryFrom<Move> for MoveIndex {
    type Error = VocabError;

    fn try_from(m: Move) -> Result<Self, Self::Error> {
        MoveIndex::from_move(m)
    }
}
