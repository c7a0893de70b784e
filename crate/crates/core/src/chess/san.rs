//! Standard Algebraic Notation, as found in PGN movetext.

use thiserror::Error;

use super::{Board, Move, PieceKind, Square};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SanError {
    #[error("malformed SAN {0:?}")]
    Malformed(String),
    #[error("SAN {0:?} matches no legal move")]
    NoMatch(String),
    #[error("SAN {0:?} is ambiguous")]
    Ambiguous(String),
}

impl Board {
    /// Resolves a SAN token against the legal moves of this position.
    pub fn parse_san(&self, san: &str) -> Result<Move, SanError> {
        let malformed = || SanError::Malformed(san.to_string());
        let text = san.trim_end_matches(['+', '#', '!', '?']);
        if text.is_empty() {
            return Err(malformed());
        }
        let legal = self.legal_moves();

        if matches!(text, "O-O" | "0-0" | "O-O-O" | "0-0-0") {
            let long = text.len() == 5;
            return legal
                .into_iter()
                .find(|&m| self.is_castling(m) && (m.to.file() == 2) == long)
                .ok_or_else(|| SanError::NoMatch(san.to_string()));
        }

        let (body, promotion) = match text.find('=') {
            Some(i) => {
                let p = text[i + 1..]
                    .chars()
                    .next()
                    .and_then(PieceKind::from_letter)
                    .ok_or_else(malformed)?;
                (&text[..i], Some(p))
            }
            None => {
                // Some exporters omit the '=' (e.g. "e8Q").
                let last = text.chars().last().unwrap();
                if text.len() > 2 && "QRBN".contains(last) && text.as_bytes()[text.len() - 2].is_ascii_digit() {
                    (&text[..text.len() - 1], PieceKind::from_letter(last))
                } else {
                    (text, None)
                }
            }
        };
        if body.len() < 2 || !body.is_ascii() {
            return Err(malformed());
        }

        let first = body.chars().next().unwrap();
        let (kind, rest) = match first {
            'K' | 'Q' | 'R' | 'B' | 'N' => (PieceKind::from_letter(first).unwrap(), &body[1..]),
            _ => (PieceKind::Pawn, body),
        };
        let rest = rest.replace('x', "");
        if rest.len() < 2 {
            return Err(malformed());
        }
        let to: Square = rest[rest.len() - 2..].parse().map_err(|_| malformed())?;
        let mut from_file = None;
        let mut from_rank = None;
        for c in rest[..rest.len() - 2].chars() {
            match c {
                'a'..='h' => from_file = Some(c as u8 - b'a'),
                '1'..='8' => from_rank = Some(c as u8 - b'1'),
                _ => return Err(malformed()),
            }
        }

        let mut candidates = legal.into_iter().filter(|m| {
            m.to == to
                && self.piece_at(m.from).map(|p| p.kind) == Some(kind)
                && from_file.is_none_or(|f| m.from.file() == f)
                && from_rank.is_none_or(|r| m.from.rank() == r)
                && m.promotion == promotion
                && !(kind == PieceKind::King && self.is_castling(*m))
        });
        let found = candidates
            .next()
            .ok_or_else(|| SanError::NoMatch(san.to_string()))?;
        if candidates.next().is_some() {
            return Err(SanError::Ambiguous(san.to_string()));
        }
        Ok(found)
    }

    /// SAN for a legal move, with check/mate suffix.
    pub fn to_san(&self, m: Move) -> String {
        let piece = self.piece_at(m.from).expect("move from an empty square");
        let mut s = String::new();
        if self.is_castling(m) {
            s.push_str(if m.to.file() == 6 { "O-O" } else { "O-O-O" });
        } else {
            let capture = self.captured_piece(m).is_some();
            if piece.kind == PieceKind::Pawn {
                if capture {
                    s.push((b'a' + m.from.file()) as char);
                }
            } else {
                s.push(piece.kind.letter().to_ascii_uppercase());
                let rivals: Vec<Move> = self
                    .legal_moves()
                    .into_iter()
                    .filter(|o| {
                        o.to == m.to && o.from != m.from && self.piece_at(o.from) == Some(piece)
                    })
                    .collect();
                if !rivals.is_empty() {
                    let file_unique = rivals.iter().all(|o| o.from.file() != m.from.file());
                    let rank_unique = rivals.iter().all(|o| o.from.rank() != m.from.rank());
                    if file_unique {
                        s.push((b'a' + m.from.file()) as char);
                    } else if rank_unique {
                        s.push((b'1' + m.from.rank()) as char);
                    } else {
                        s.push_str(&m.from.to_string());
                    }
                }
            }
            if capture {
                s.push('x');
            }
            s.push_str(&m.to.to_string());
            if let Some(p) = m.promotion {
                s.push('=');
                s.push(p.letter().to_ascii_uppercase());
            }
        }
        let next = self.apply_unchecked(m);
        if next.in_check() {
            s.push(if next.legal_moves().is_empty() { '#' } else { '+' });
        }
        s
    }
}
