//! Forsyth-Edwards Notation parsing and serialization.

use std::fmt;

use thiserror::Error;

use super::{Board, CastlingRights, Color, Piece, PieceKind, Square};

pub const START_FEN: &str = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1";

/// A FEN parse failure, tagged with the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid FEN {field}: {reason}")]
pub struct FenError {
    pub field: &'static str,
    pub reason: String,
}

fn err(field: &'static str, reason: impl Into<String>) -> FenError {
    FenError {
        field,
        reason: reason.into(),
    }
}

impl Board {
    /// Parses a 4 to 6 field FEN. Missing clocks default to `0 1`.
    pub fn from_fen(text: &str) -> Result<Board, FenError> {
        let fields: Vec<&str> = text.split_whitespace().collect();
        if !(4..=6).contains(&fields.len()) {
            return Err(err(
                "fields",
                format!("expected 4 to 6 fields, found {}", fields.len()),
            ));
        }
        let mut board = Board::empty();
        parse_placement(fields[0], &mut board)?;

        board.side_to_move = match fields[1] {
            "w" => Color::White,
            "b" => Color::Black,
            other => return Err(err("side to move", format!("unexpected {other:?}"))),
        };

        board.castling = parse_castling(fields[2])?;
        check_castling_consistency(&board)?;

        board.en_passant = match fields[3] {
            "-" => None,
            s => {
                let sq: Square = s
                    .parse()
                    .map_err(|_| err("en passant", format!("bad square {s:?}")))?;
                let expected_rank = match board.side_to_move {
                    Color::White => 5,
                    Color::Black => 2,
                };
                if sq.rank() != expected_rank {
                    return Err(err(
                        "en passant",
                        format!("{s} is not a target square for the side to move"),
                    ));
                }
                Some(sq)
            }
        };

        if let Some(s) = fields.get(4) {
            board.halfmove_clock = s
                .parse()
                .map_err(|_| err("halfmove clock", format!("not a number: {s:?}")))?;
        }
        if let Some(s) = fields.get(5) {
            board.fullmove_number = s
                .parse()
                .map_err(|_| err("fullmove number", format!("not a number: {s:?}")))?;
        }
        Ok(board)
    }

    pub fn to_fen(&self) -> String {
        self.to_string()
    }
}

fn parse_placement(text: &str, board: &mut Board) -> Result<(), FenError> {
    let ranks: Vec<&str> = text.split('/').collect();
    if ranks.len() != 8 {
        return Err(err(
            "piece placement",
            format!("expected 8 ranks, found {}", ranks.len()),
        ));
    }
    for (i, rank_text) in ranks.iter().enumerate() {
        let rank = 7 - i as u8;
        let mut file = 0u8;
        for c in rank_text.chars() {
            if let Some(d) = c.to_digit(10) {
                if !(1..=8).contains(&d) {
                    return Err(err("piece placement", format!("bad empty count {c}")));
                }
                file += d as u8;
            } else {
                let piece = Piece::from_fen_char(c)
                    .ok_or_else(|| err("piece placement", format!("unknown piece {c:?}")))?;
                if file >= 8 {
                    return Err(err(
                        "piece placement",
                        format!("rank {} overflows", rank + 1),
                    ));
                }
                if piece.kind == PieceKind::Pawn && (rank == 0 || rank == 7) {
                    return Err(err("piece placement", "pawn on first or last rank"));
                }
                board.squares[Square::from_coords(file, rank).index()] = Some(piece);
                file += 1;
            }
        }
        if file != 8 {
            return Err(err(
                "piece placement",
                format!("rank {} has {} files", rank + 1, file),
            ));
        }
    }
    for color in [Color::White, Color::Black] {
        let kings = board.count(Piece::new(color, PieceKind::King));
        if kings != 1 {
            return Err(err(
                "piece placement",
                format!("{color:?} has {kings} kings, expected exactly 1"),
            ));
        }
    }
    Ok(())
}

fn parse_castling(text: &str) -> Result<CastlingRights, FenError> {
    if text == "-" {
        return Ok(CastlingRights::NONE);
    }
    let mut bits = 0u8;
    for c in text.chars() {
        let flag = match c {
            'K' => CastlingRights::WHITE_KING,
            'Q' => CastlingRights::WHITE_QUEEN,
            'k' => CastlingRights::BLACK_KING,
            'q' => CastlingRights::BLACK_QUEEN,
            _ => return Err(err("castling", format!("unexpected {c:?}"))),
        };
        if bits & flag != 0 {
            return Err(err("castling", format!("duplicate {c:?}")));
        }
        bits |= flag;
    }
    Ok(CastlingRights::from_bits(bits))
}

fn check_castling_consistency(board: &Board) -> Result<(), FenError> {
    let checks = [
        (CastlingRights::WHITE_KING, Color::White, Square::E1, Square::H1),
        (CastlingRights::WHITE_QUEEN, Color::White, Square::E1, Square::A1),
        (CastlingRights::BLACK_KING, Color::Black, Square::E8, Square::H8),
        (CastlingRights::BLACK_QUEEN, Color::Black, Square::E8, Square::A8),
    ];
    for (flag, color, king_sq, rook_sq) in checks {
        if !board.castling.has(flag) {
            continue;
        }
        if board.piece_at(king_sq) != Some(Piece::new(color, PieceKind::King))
            || board.piece_at(rook_sq) != Some(Piece::new(color, PieceKind::Rook))
        {
            return Err(err(
                "castling",
                format!("right declared but king/rook not on {king_sq}/{rook_sq}"),
            ));
        }
    }
    Ok(())
}

impl fmt::Display for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rank in (0..8).rev() {
            let mut empty = 0;
            for file in 0..8 {
                match self.piece_at(Square::from_coords(file, rank)) {
                    Some(p) => {
                        if empty > 0 {
                            write!(f, "{empty}")?;
                            empty = 0;
                        }
                        write!(f, "{}", p.fen_char())?;
                    }
                    None => empty += 1,
                }
            }
            if empty > 0 {
                write!(f, "{empty}")?;
            }
            if rank > 0 {
                f.write_str("/")?;
            }
        }
        let side = match self.side_to_move {
            Color::White => 'w',
            Color::Black => 'b',
        };
        write!(f, " {side} ")?;
        if self.castling.bits() == 0 {
            f.write_str("-")?;
        } else {
            for (flag, c) in [
                (CastlingRights::WHITE_KING, 'K'),
                (CastlingRights::WHITE_QUEEN, 'Q'),
                (CastlingRights::BLACK_KING, 'k'),
                (CastlingRights::BLACK_QUEEN, 'q'),
            ] {
                if self.castling.has(flag) {
                    write!(f, "{c}")?;
                }
            }
        }
        match self.en_passant {
            Some(sq) => write!(f, " {sq}")?,
            None => f.write_str(" -")?,
        }
        write!(f, " {} {}", self.halfmove_clock, self.fullmove_number)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn startpos() {
        let b = Board::from_fen(START_FEN).unwrap();
        assert_eq!(b.piece_count(), 32);
        assert_eq!(b.side_to_move(), Color::White);
        assert_eq!(b.castling(), CastlingRights::ALL);
        assert_eq!(b.en_passant(), None);
        assert_eq!(b.to_fen(), START_FEN);
    }

    #[test]
    fn bare_kings() {
        let b = Board::from_fen("8/8/8/8/8/8/8/K6k w - - 0 1").unwrap();
        assert_eq!(b.piece_count(), 2);
        assert_eq!(b.castling(), CastlingRights::NONE);
    }

    #[test]
    fn after_e4() {
        let b = Board::from_fen("rnbqkbnr/pppppppp/8/8/4P3/8/PPPP1PPP/RNBQKBNR b KQkq e3 0 1")
            .unwrap();
        assert_eq!(b.side_to_move(), Color::Black);
        assert_eq!(b.en_passant(), Some("e3".parse().unwrap()));
    }

    #[test]
    fn whitespace_normalized_on_round_trip() {
        let b = Board::from_fen("  8/8/8/8/8/8/8/K6k   w  -  -  0   1 ").unwrap();
        assert_eq!(b.to_fen(), "8/8/8/8/8/8/8/K6k w - - 0 1");
        let four = Board::from_fen("8/8/8/8/8/8/8/K6k b - -").unwrap();
        assert_eq!(four.to_fen(), "8/8/8/8/8/8/8/K6k b - - 0 1");
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            ("8/8/8/8/8/8/8/K7 w - - 0 1", "piece placement"),
            ("8/8/8/8/8/8/8/KK5k w - - 0 1", "piece placement"),
            ("8/8/8/8/8/8/8/K6kk w - - 0 1", "piece placement"),
            ("8/8/8/8/8/8/8/K5xk w - - 0 1", "piece placement"),
            ("8/8/8/8/8/8/K6k w - - 0 1", "piece placement"),
            ("P7/8/8/8/8/8/8/K6k w - - 0 1", "piece placement"),
            ("8/8/8/8/8/8/8/K6k x - - 0 1", "side to move"),
            ("8/8/8/8/8/8/8/K6k w KQ - 0 1", "castling"),
            ("8/8/8/8/8/8/8/K6k w Z - 0 1", "castling"),
            ("8/8/8/8/8/8/8/K6k w - e4 0 1", "en passant"),
            ("8/8/8/8/8/8/8/K6k w - e3 0 1", "en passant"),
            ("8/8/8/8/8/8/8/K6k w - - x 1", "halfmove clock"),
            ("8/8/8/8/8/8/8/K6k w", "fields"),
        ];
        for (fen, field) in cases {
            let e = Board::from_fen(fen).unwrap_err();
            assert_eq!(e.field, field, "{fen}: {e}");
        }
    }
}
