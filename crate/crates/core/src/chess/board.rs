use super::{Color, Piece, PieceKind, Square};

/// Castling availability, one bit per (color, side).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CastlingRights(u8);

impl CastlingRights {
    pub const WHITE_KING: u8 = 1;
    pub const WHITE_QUEEN: u8 = 2;
    pub const BLACK_KING: u8 = 4;
    pub const BLACK_QUEEN: u8 = 8;
    pub const ALL: CastlingRights = CastlingRights(15);
    pub const NONE: CastlingRights = CastlingRights(0);

    pub fn from_bits(bits: u8) -> CastlingRights {
        CastlingRights(bits & 15)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn has(self, flag: u8) -> bool {
        self.0 & flag != 0
    }

    pub fn kingside(self, color: Color) -> bool {
        self.has(match color {
            Color::White => Self::WHITE_KING,
            Color::Black => Self::BLACK_KING,
        })
    }

    pub fn queenside(self, color: Color) -> bool {
        self.has(match color {
            Color::White => Self::WHITE_QUEEN,
            Color::Black => Self::BLACK_QUEEN,
        })
    }

    pub(crate) fn clear(&mut self, flag: u8) {
        self.0 &= !flag;
    }

    pub(crate) fn clear_color(&mut self, color: Color) {
        match color {
            Color::White => self.clear(Self::WHITE_KING | Self::WHITE_QUEEN),
            Color::Black => self.clear(Self::BLACK_KING | Self::BLACK_QUEEN),
        }
    }

    /// White and black rights exchanged.
    pub fn swapped(self) -> CastlingRights {
        CastlingRights(((self.0 & 3) << 2) | ((self.0 >> 2) & 3))
    }
}

/// Full position state. Boards are plain values; every operation returns a new one.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Board {
    pub(crate) squares: [Option<Piece>; 64],
    pub(crate) side_to_move: Color,
    pub(crate) castling: CastlingRights,
    pub(crate) en_passant: Option<Square>,
    pub(crate) halfmove_clock: u32,
    pub(crate) fullmove_number: u32,
}

const KNIGHT_STEPS: [(i8, i8); 8] = [
    (1, 2),
    (2, 1),
    (2, -1),
    (1, -2),
    (-1, -2),
    (-2, -1),
    (-2, 1),
    (-1, 2),
];
const KING_STEPS: [(i8, i8); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];
pub(crate) const ROOK_DIRS: [(i8, i8); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
pub(crate) const BISHOP_DIRS: [(i8, i8); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

impl Board {
    pub fn startpos() -> Board {
        Board::from_fen(super::START_FEN).expect("start FEN is valid")
    }

    pub fn empty() -> Board {
        Board {
            squares: [None; 64],
            side_to_move: Color::White,
            castling: CastlingRights::NONE,
            en_passant: None,
            halfmove_clock: 0,
            fullmove_number: 1,
        }
    }

    pub fn piece_at(&self, sq: Square) -> Option<Piece> {
        self.squares[sq.index()]
    }

    pub fn side_to_move(&self) -> Color {
        self.side_to_move
    }

    pub fn castling(&self) -> CastlingRights {
        self.castling
    }

    pub fn en_passant(&self) -> Option<Square> {
        self.en_passant
    }

    pub fn halfmove_clock(&self) -> u32 {
        self.halfmove_clock
    }

    pub fn fullmove_number(&self) -> u32 {
        self.fullmove_number
    }

    pub fn pieces(&self) -> impl Iterator<Item = (Square, Piece)> + '_ {
        Square::all().filter_map(move |sq| self.piece_at(sq).map(|p| (sq, p)))
    }

    pub fn piece_count(&self) -> usize {
        self.squares.iter().filter(|p| p.is_some()).count()
    }

    pub fn count(&self, piece: Piece) -> usize {
        self.squares.iter().filter(|p| **p == Some(piece)).count()
    }

    pub fn king_square(&self, color: Color) -> Option<Square> {
        let king = Piece::new(color, PieceKind::King);
        Square::all().find(|&sq| self.piece_at(sq) == Some(king))
    }

    /// Whether any piece of `by` attacks `target`.
    pub fn is_attacked(&self, target: Square, by: Color) -> bool {
        // Pawns attack diagonally forward, so look one rank behind the target.
        let pawn_dr = match by {
            Color::White => -1,
            Color::Black => 1,
        };
        for df in [-1, 1] {
            if let Some(sq) = target.offset(df, pawn_dr) {
                if self.piece_at(sq) == Some(Piece::new(by, PieceKind::Pawn)) {
                    return true;
                }
            }
        }
        for (df, dr) in KNIGHT_STEPS {
            if let Some(sq) = target.offset(df, dr) {
                if self.piece_at(sq) == Some(Piece::new(by, PieceKind::Knight)) {
                    return true;
                }
            }
        }
        for (df, dr) in KING_STEPS {
            if let Some(sq) = target.offset(df, dr) {
                if self.piece_at(sq) == Some(Piece::new(by, PieceKind::King)) {
                    return true;
                }
            }
        }
        let slides = |dirs: &[(i8, i8)], kinds: [PieceKind; 2]| {
            dirs.iter().any(|&(df, dr)| {
                let mut cur = target;
                while let Some(next) = cur.offset(df, dr) {
                    if let Some(p) = self.piece_at(next) {
                        return p.color == by && kinds.contains(&p.kind);
                    }
                    cur = next;
                }
                false
            })
        };
        slides(&ROOK_DIRS, [PieceKind::Rook, PieceKind::Queen])
            || slides(&BISHOP_DIRS, [PieceKind::Bishop, PieceKind::Queen])
    }

    pub fn in_check(&self) -> bool {
        self.king_square(self.side_to_move)
            .is_some_and(|k| self.is_attacked(k, self.side_to_move.opposite()))
    }

    /// Rank flip plus color swap: the side to move becomes the other color
    /// and sees the same position from its own point of view.
    pub fn mirror(&self) -> Board {
        let mut squares = [None; 64];
        for (sq, p) in self.pieces() {
            squares[sq.mirror().index()] = Some(Piece::new(p.color.opposite(), p.kind));
        }
        Board {
            squares,
            side_to_move: self.side_to_move.opposite(),
            castling: self.castling.swapped(),
            en_passant: self.en_passant.map(Square::mirror),
            halfmove_clock: self.halfmove_clock,
            fullmove_number: self.fullmove_number,
        }
    }

    pub(crate) fn knight_steps() -> &'static [(i8, i8); 8] {
        &KNIGHT_STEPS
    }

    pub(crate) fn king_steps() -> &'static [(i8, i8); 8] {
        &KING_STEPS
    }
}
