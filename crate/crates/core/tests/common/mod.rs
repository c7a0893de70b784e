#![allow(dead_code)]

use std::fmt::Write as _;

use maia2::chess::{Board, Color};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shakmaty::fen::Fen;
use shakmaty::san::SanPlus;
use shakmaty::{CastlingMode, Chess, EnPassantMode, Position};

/// Positions visited by seeded random playouts, either side to move.
pub fn random_positions(n: usize, seed: u64) -> Vec<Board> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut board = Board::startpos();
    while out.len() < n {
        let moves = board.legal_moves();
        if moves.is_empty() || board.halfmove_clock() > 60 {
            board = Board::startpos();
            continue;
        }
        out.push(board.clone());
        board = board.apply_move(moves[rng.gen_range(0..moves.len())]).unwrap();
    }
    out
}

/// Same positions, mirrored to white to move.
pub fn white_to_move(boards: &[Board]) -> Vec<Board> {
    boards
        .iter()
        .map(|b| if b.side_to_move() == Color::White { b.clone() } else { b.mirror() })
        .collect()
}

pub fn sk_position(fen: &str) -> Chess {
    Fen::from_ascii(fen.as_bytes())
        .unwrap()
        .into_position(CastlingMode::Standard)
        .unwrap()
}

pub fn sk_fen(pos: &Chess) -> String {
    Fen::from_position(pos, EnPassantMode::Legal).to_string()
}

/// Sorted UCI strings of the legal moves, per shakmaty.
pub fn sk_legal_uci(fen: &str) -> Vec<String> {
    let pos = sk_position(fen);
    let mut v: Vec<String> = pos
        .legal_moves()
        .iter()
        .map(|m| m.to_uci(CastlingMode::Standard).to_string())
        .collect();
    v.sort();
    v
}

/// First three FEN fields (placement, side, castling).
pub fn fen_key(fen: &str) -> String {
    fen.split_whitespace().take(3).collect::<Vec<_>>().join(" ")
}

/// Rank-flipped UCI string, e.g. "e7e5" -> "e2e4".
pub fn mirror_uci(uci: &str) -> String {
    uci.chars()
        .enumerate()
        .map(|(i, c)| if i == 1 || i == 3 { (b'1' + b'8' - c as u8) as char } else { c })
        .collect()
}

/// Ground truth for one ply of a generated game.
#[derive(Debug, Clone)]
pub struct FixturePly {
    /// `fen_key` of the position mirrored to white to move.
    pub key: String,
    /// Played move in the same orientation.
    pub uci: String,
    pub white_to_move: bool,
    pub clock: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct FixtureGame {
    pub white_elo: u32,
    pub black_elo: u32,
    pub event: &'static str,
    pub base: Option<u32>,
    pub increment: u32,
    pub white_score: i8,
    pub plies: Vec<FixturePly>,
}

const EVENTS: [&str; 4] = ["Rated Rapid game", "Rated Blitz game", "Rated Classical game", "Casual game"];
const CONTROLS: [(Option<u32>, u32); 5] = [(Some(600), 0), (Some(180), 2), (Some(900), 10), (Some(1800), 0), (None, 0)];

/// A PGN corpus of random games written with shakmaty's SAN, plus the
/// ground truth behind every game.
pub fn pgn_fixture(games: usize, seed: u64) -> (String, Vec<FixtureGame>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    let mut truth = Vec::with_capacity(games);
    for g in 0..games {
        let event = EVENTS[rng.gen_range(0..EVENTS.len())];
        let (base, increment) = CONTROLS[rng.gen_range(0..CONTROLS.len())];
        let with_clock = rng.gen_bool(0.9);
        let white_elo = rng.gen_range(800..2500);
        let black_elo = rng.gen_range(800..2500);
        let white_score: i8 = rng.gen_range(-1..=1);
        let result = match white_score {
            1 => "1-0",
            -1 => "0-1",
            _ => "1/2-1/2",
        };
        let target = rng.gen_range(12..110);
        // clocks drain at a per-game rate so some games fall under 30 s
        let drain = rng.gen_range(1..25u32);

        let _ = writeln!(text, "[Event \"{event}\"]");
        let _ = writeln!(text, "[Site \"fixture/{g}\"]");
        let _ = writeln!(text, "[Result \"{result}\"]");
        let _ = writeln!(text, "[WhiteElo \"{white_elo}\"]");
        let _ = writeln!(text, "[BlackElo \"{black_elo}\"]");
        match base {
            Some(b) => {
                let _ = writeln!(text, "[TimeControl \"{b}+{increment}\"]");
            }
            None => {
                let _ = writeln!(text, "[TimeControl \"-\"]");
            }
        }
        text.push('\n');

        let mut pos = Chess::default();
        let mut clocks = [base.unwrap_or(600); 2];
        let mut plies = Vec::new();
        let mut line = String::new();
        for ply in 0..target {
            let legal = pos.legal_moves();
            if legal.is_empty() {
                break;
            }
            let m = legal[rng.gen_range(0..legal.len())];
            let white = pos.turn() == shakmaty::Color::White;
            let mut setup = pos.to_setup(EnPassantMode::Legal);
            let uci = m.to_uci(CastlingMode::Standard).to_string();
            let uci = if white {
                uci
            } else {
                setup.mirror();
                mirror_uci(&uci)
            };
            let key = fen_key(&Fen::try_from_setup(setup).expect("standard setup").to_string());
            let clock = with_clock.then(|| {
                let c = &mut clocks[ply % 2];
                *c = c.saturating_sub(rng.gen_range(0..2 * drain)) + increment;
                *c
            });
            plies.push(FixturePly {
                key,
                uci,
                white_to_move: white,
                clock,
            });

            if white {
                let _ = write!(line, "{}. ", ply / 2 + 1);
            }
            let san = SanPlus::from_move_and_play_unchecked(&mut pos, m);
            let _ = write!(line, "{san} ");
            if let Some(c) = clock {
                let _ = write!(line, "{{ [%clk {}:{:02}:{:02}] }} ", c / 3600, c / 60 % 60, c % 60);
            }
            if line.len() > 70 {
                text.push_str(line.trim_end());
                text.push('\n');
                line.clear();
            }
        }
        line.push_str(result);
        text.push_str(&line);
        text.push_str("\n\n");
        truth.push(FixtureGame {
            white_elo,
            black_elo,
            event,
            base,
            increment,
            white_score,
            plies,
        });
    }
    (text, truth)
}
