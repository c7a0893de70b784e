//! Legal move generation and move application.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::board::{BISHOP_DIRS, ROOK_DIRS};
use super::{Board, CastlingRights, Color, Piece, PieceKind, Square};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Move {
    pub from: Square,
    pub to: Square,
    pub promotion: Option<PieceKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MoveError {
    #[error("malformed UCI move {0:?}")]
    BadUci(String),
    #[error("illegal move {mv} in {fen}: {reason}")]
    Illegal {
        mv: Move,
        fen: String,
        reason: &'static str,
    },
}

impl Move {
    pub fn new(from: Square, to: Square) -> Move {
        Move {
            from,
            to,
            promotion: None,
        }
    }

    pub fn with_promotion(from: Square, to: Square, promotion: PieceKind) -> Move {
        Move {
            from,
            to,
            promotion: Some(promotion),
        }
    }

    pub fn mirror(self) -> Move {
        Move {
            from: self.from.mirror(),
            to: self.to.mirror(),
            promotion: self.promotion,
        }
    }

    pub fn to_uci(self) -> String {
        self.to_string()
    }

    pub fn from_uci(text: &str) -> Result<Move, MoveError> {
        text.parse()
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.from, self.to)?;
        if let Some(p) = self.promotion {
            write!(f, "{}", p.letter())?;
        }
        Ok(())
    }
}

/// Serialized as its UCI string.
impl serde::Serialize for Move {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Move {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for Move {
    type Err = MoveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MoveError::BadUci(s.to_string());
        if !(4..=5).contains(&s.len()) || !s.is_ascii() {
            return Err(bad());
        }
        let from: Square = s[0..2].parse().map_err(|_| bad())?;
        let to: Square = s[2..4].parse().map_err(|_| bad())?;
        if from == to {
            return Err(bad());
        }
        let promotion = match s.as_bytes().get(4) {
            None => None,
            Some(&c) => match PieceKind::from_letter(c as char) {
                Some(k @ (PieceKind::Knight | PieceKind::Bishop | PieceKind::Rook | PieceKind::Queen)) => {
                    Some(k)
                }
                _ => return Err(bad()),
            },
        };
        Ok(Move { from, to, promotion })
    }
}

const PROMOTIONS: [PieceKind; 4] = [
    PieceKind::Queen,
    PieceKind::Rook,
    PieceKind::Bishop,
    PieceKind::Knight,
];

impl Board {
    /// All legal moves for the side to move.
    pub fn legal_moves(&self) -> Vec<Move> {
        let mut pseudo = Vec::with_capacity(64);
        self.pseudo_legal_moves(&mut pseudo);
        let us = self.side_to_move;
        pseudo
            .into_iter()
            .filter(|&m| {
                let next = self.apply_unchecked(m);
                next.king_square(us)
                    .is_some_and(|k| !next.is_attacked(k, us.opposite()))
            })
            .collect()
    }

    pub fn is_legal(&self, m: Move) -> bool {
        self.legal_moves().contains(&m)
    }

    /// Applies a legal move. Illegal moves are rejected with a reason.
    pub fn apply_move(&self, m: Move) -> Result<Board, MoveError> {
        let illegal = |reason| MoveError::Illegal {
            mv: m,
            fen: self.to_fen(),
            reason,
        };
        match self.piece_at(m.from) {
            None => return Err(illegal("no piece on origin square")),
            Some(p) if p.color != self.side_to_move => {
                return Err(illegal("piece belongs to the side not on move"))
            }
            _ => {}
        }
        if !self.is_legal(m) {
            return Err(illegal("not in the legal move list"));
        }
        Ok(self.apply_unchecked(m))
    }

    /// The piece a move captures, including en passant.
    pub fn captured_piece(&self, m: Move) -> Option<Piece> {
        let mover = self.piece_at(m.from)?;
        if mover.kind == PieceKind::Pawn && Some(m.to) == self.en_passant && m.from.file() != m.to.file()
        {
            return Some(Piece::new(self.side_to_move.opposite(), PieceKind::Pawn));
        }
        self.piece_at(m.to)
    }

    pub fn is_castling(&self, m: Move) -> bool {
        self.piece_at(m.from).is_some_and(|p| p.kind == PieceKind::King)
            && (m.from.file() as i8 - m.to.file() as i8).abs() == 2
    }

    /// Whether the (legal) move leaves the opponent in check.
    pub fn gives_check(&self, m: Move) -> bool {
        self.apply_unchecked(m).in_check()
    }

    pub(crate) fn apply_unchecked(&self, m: Move) -> Board {
        let mut b = self.clone();
        let us = self.side_to_move;
        let mover = self.squares[m.from.index()].expect("move from an empty square");
        let captured = self.captured_piece(m);

        if mover.kind == PieceKind::Pawn && Some(m.to) == self.en_passant && m.from.file() != m.to.file()
        {
            let victim = Square::from_coords(m.to.file(), m.from.rank());
            b.squares[victim.index()] = None;
        }

        b.squares[m.from.index()] = None;
        b.squares[m.to.index()] = Some(match m.promotion {
            Some(kind) if mover.kind == PieceKind::Pawn => Piece::new(us, kind),
            _ => mover,
        });

        if self.is_castling(m) {
            let rank = m.from.rank();
            let (rook_from, rook_to) = if m.to.file() == 6 {
                (Square::from_coords(7, rank), Square::from_coords(5, rank))
            } else {
                (Square::from_coords(0, rank), Square::from_coords(3, rank))
            };
            b.squares[rook_to.index()] = b.squares[rook_from.index()].take();
        }

        if mover.kind == PieceKind::King {
            b.castling.clear_color(us);
        }
        for (sq, flag) in [
            (Square::H1, CastlingRights::WHITE_KING),
            (Square::A1, CastlingRights::WHITE_QUEEN),
            (Square::H8, CastlingRights::BLACK_KING),
            (Square::A8, CastlingRights::BLACK_QUEEN),
        ] {
            if m.from == sq || m.to == sq {
                b.castling.clear(flag);
            }
        }

        b.en_passant = None;
        if mover.kind == PieceKind::Pawn && (m.from.rank() as i8 - m.to.rank() as i8).abs() == 2 {
            b.en_passant = Some(Square::from_coords(m.from.file(), (m.from.rank() + m.to.rank()) / 2));
        }

        b.halfmove_clock = if mover.kind == PieceKind::Pawn || captured.is_some() {
            0
        } else {
            self.halfmove_clock + 1
        };
        if us == Color::Black {
            b.fullmove_number += 1;
        }
        b.side_to_move = us.opposite();
        b
    }

    fn pseudo_legal_moves(&self, out: &mut Vec<Move>) {
        let us = self.side_to_move;
        for (from, piece) in self.pieces() {
            if piece.color != us {
                continue;
            }
            match piece.kind {
                PieceKind::Pawn => self.pawn_moves(from, out),
                PieceKind::Knight => self.step_moves(from, Board::knight_steps(), out),
                PieceKind::Bishop => self.slide_moves(from, &BISHOP_DIRS, out),
                PieceKind::Rook => self.slide_moves(from, &ROOK_DIRS, out),
                PieceKind::Queen => {
                    self.slide_moves(from, &ROOK_DIRS, out);
                    self.slide_moves(from, &BISHOP_DIRS, out);
                }
                PieceKind::King => {
                    self.step_moves(from, Board::king_steps(), out);
                    self.castling_moves(from, out);
                }
            }
        }
    }

    fn can_land(&self, sq: Square) -> bool {
        self.piece_at(sq).is_none_or(|p| p.color != self.side_to_move)
    }

    fn step_moves(&self, from: Square, steps: &[(i8, i8)], out: &mut Vec<Move>) {
        for &(df, dr) in steps {
            if let Some(to) = from.offset(df, dr) {
                if self.can_land(to) {
                    out.push(Move::new(from, to));
                }
            }
        }
    }

    fn slide_moves(&self, from: Square, dirs: &[(i8, i8)], out: &mut Vec<Move>) {
        for &(df, dr) in dirs {
            let mut cur = from;
            while let Some(to) = cur.offset(df, dr) {
                match self.piece_at(to) {
                    None => out.push(Move::new(from, to)),
                    Some(p) => {
                        if p.color != self.side_to_move {
                            out.push(Move::new(from, to));
                        }
                        break;
                    }
                }
                cur = to;
            }
        }
    }

    fn pawn_moves(&self, from: Square, out: &mut Vec<Move>) {
        let us = self.side_to_move;
        let (dr, start_rank, last_rank) = match us {
            Color::White => (1, 1, 7),
            Color::Black => (-1, 6, 0),
        };
        let mut push = |to: Square| {
            if to.rank() == last_rank {
                for p in PROMOTIONS {
                    out.push(Move::with_promotion(from, to, p));
                }
            } else {
                out.push(Move::new(from, to));
            }
        };
        if let Some(one) = from.offset(0, dr) {
            if self.piece_at(one).is_none() {
                push(one);
                if from.rank() == start_rank {
                    let two = one.offset(0, dr).expect("double push stays on board");
                    if self.piece_at(two).is_none() {
                        push(two);
                    }
                }
            }
        }
        for df in [-1, 1] {
            if let Some(to) = from.offset(df, dr) {
                let enemy = self.piece_at(to).is_some_and(|p| p.color != us);
                if enemy || Some(to) == self.en_passant {
                    push(to);
                }
            }
        }
    }

    fn castling_moves(&self, from: Square, out: &mut Vec<Move>) {
        let us = self.side_to_move;
        let home = match us {
            Color::White => Square::E1,
            Color::Black => Square::E8,
        };
        if from != home || self.is_attacked(home, us.opposite()) {
            return;
        }
        let rank = home.rank();
        let sq = |file| Square::from_coords(file, rank);
        let rook = Some(Piece::new(us, PieceKind::Rook));
        if self.castling.kingside(us)
            && self.piece_at(sq(7)) == rook
            && self.piece_at(sq(5)).is_none()
            && self.piece_at(sq(6)).is_none()
            && !self.is_attacked(sq(5), us.opposite())
            && !self.is_attacked(sq(6), us.opposite())
        {
            out.push(Move::new(home, sq(6)));
        }
        if self.castling.queenside(us)
            && self.piece_at(sq(0)) == rook
            && self.piece_at(sq(1)).is_none()
            && self.piece_at(sq(2)).is_none()
            && self.piece_at(sq(3)).is_none()
            && !self.is_attacked(sq(3), us.opposite())
            && !self.is_attacked(sq(2), us.opposite())
        {
            out.push(Move::new(home, sq(2)));
        }
    }
}

/// Number of leaves of the legal move tree at `depth`.
pub fn perft(board: &Board, depth: u32) -> u64 {
    if depth == 0 {
        return 1;
    }
    let moves = board.legal_moves();
    if depth == 1 {
        return moves.len() as u64;
    }
    moves
        .into_iter()
        .map(|m| perft(&board.apply_unchecked(m), depth - 1))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn board(fen: &str) -> Board {
        Board::from_fen(fen).unwrap()
    }

    fn mv(s: &str) -> Move {
        s.parse().unwrap()
    }

    #[test]
    fn startpos_has_20_moves() {
        assert_eq!(Board::startpos().legal_moves().len(), 20);
    }

    #[test]
    fn bare_kings_corner() {
        let b = board("8/8/8/8/8/8/8/K6k w - - 0 1");
        let mut got: Vec<String> = b.legal_moves().iter().map(|m| m.to_uci()).collect();
        got.sort();
        assert_eq!(got, ["a1a2", "a1b1", "a1b2"]);
    }

    #[test]
    fn stalemate_has_no_moves() {
        let b = board("7k/5Q2/6K1/8/8/8/8/8 b - - 0 1");
        assert!(b.legal_moves().is_empty());
        assert!(!b.in_check());
    }

    #[test]
    fn double_push_sets_en_passant() {
        let b = Board::startpos().apply_move(mv("e2e4")).unwrap();
        assert_eq!(b.side_to_move(), Color::Black);
        assert_eq!(b.en_passant(), Some("e3".parse().unwrap()));
        assert_eq!(b.halfmove_clock(), 0);
    }

    #[test]
    fn castling_relocates_rook_and_clears_rights() {
        let b = board("r3k2r/8/8/8/8/8/8/R3K2R w KQkq - 0 1");
        let k = b.apply_move(mv("e1g1")).unwrap();
        assert_eq!(k.piece_at(Square::G1), Some(Piece::new(Color::White, PieceKind::King)));
        assert_eq!(k.piece_at(Square::F1), Some(Piece::new(Color::White, PieceKind::Rook)));
        assert_eq!(k.piece_at(Square::H1), None);
        assert!(!k.castling().kingside(Color::White) && !k.castling().queenside(Color::White));
        assert!(k.castling().kingside(Color::Black));

        let q = b.apply_move(mv("e1c1")).unwrap();
        assert_eq!(q.piece_at(Square::D1), Some(Piece::new(Color::White, PieceKind::Rook)));
        assert_eq!(q.piece_at(Square::A1), None);
    }

    #[test]
    fn castling_through_check_is_illegal() {
        let b = board("r3k2r/8/8/8/8/8/5r2/R3K2R w KQkq - 0 1");
        // f2 rook attacks f1 and e2, e1 is not attacked; kingside passes through f1.
        let legal = b.legal_moves();
        assert!(!legal.contains(&mv("e1g1")));
        assert!(legal.contains(&mv("e1c1")));
    }

    #[test]
    fn en_passant_capture_removes_bypassed_pawn() {
        let b = board("4k3/8/8/3pP3/8/8/8/4K3 w - d6 0 1");
        let after = b.apply_move(mv("e5d6")).unwrap();
        assert_eq!(after.piece_at("d5".parse().unwrap()), None);
        assert_eq!(
            after.piece_at("d6".parse().unwrap()),
            Some(Piece::new(Color::White, PieceKind::Pawn))
        );
        assert_eq!(b.captured_piece(mv("e5d6")).map(|p| p.kind), Some(PieceKind::Pawn));
    }

    #[test]
    fn promotions_generate_four_moves() {
        let b = board("4k3/P7/8/8/8/8/8/4K3 w - - 0 1");
        let promos: Vec<_> = b
            .legal_moves()
            .into_iter()
            .filter(|m| m.from == "a7".parse().unwrap())
            .collect();
        assert_eq!(promos.len(), 4);
        let after = b.apply_move(mv("a7a8n")).unwrap();
        assert_eq!(after.piece_at(Square::A8), Some(Piece::new(Color::White, PieceKind::Knight)));
    }

    #[test]
    fn illegal_moves_rejected() {
        let b = Board::startpos();
        assert!(matches!(b.apply_move(mv("e2e5")), Err(MoveError::Illegal { .. })));
        assert!(matches!(b.apply_move(mv("e7e5")), Err(MoveError::Illegal { .. })));
        assert!(matches!(b.apply_move(mv("e3e4")), Err(MoveError::Illegal { .. })));
    }

    #[test]
    fn uci_parsing() {
        assert_eq!(mv("a7a8n").promotion, Some(PieceKind::Knight));
        assert!("a7a8k".parse::<Move>().is_err());
        assert!("e2e2".parse::<Move>().is_err());
        assert!("e2".parse::<Move>().is_err());
    }

    #[test]
    fn perft_shallow() {
        let b = Board::startpos();
        assert_eq!(perft(&b, 0), 1);
        assert_eq!(perft(&b, 1), 20);
        assert_eq!(perft(&b, 2), 400);
        assert_eq!(perft(&b, 3), 8902);
    }
}
