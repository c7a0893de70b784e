//! Streaming PGN reader for Lichess-style exports.
//!
//! Games are replayed while parsing so every emitted record carries legal,
//! resolved moves. Anything unusable (bad headers, unknown SAN, missing
//! result) is skipped and counted; the stream itself never aborts.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::Diagnostics;
use crate::chess::{Board, Move};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeControl {
    pub base_seconds: u32,
    pub increment_seconds: u32,
}

impl TimeControl {
    /// Parses "600+5"; "-" (correspondence) and malformed values give `None`.
    pub fn parse(text: &str) -> Option<TimeControl> {
        let (base, inc) = text.split_once('+')?;
        Some(TimeControl {
            base_seconds: base.trim().parse().ok()?,
            increment_seconds: inc.trim().parse().ok()?,
        })
    }

    /// Estimated game duration: base + 40 * increment.
    pub fn estimated_seconds(self) -> u32 {
        self.base_seconds + 40 * self.increment_seconds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GameResult {
    WhiteWins,
    BlackWins,
    Draw,
}

impl GameResult {
    pub fn parse(token: &str) -> Option<GameResult> {
        match token {
            "1-0" => Some(GameResult::WhiteWins),
            "0-1" => Some(GameResult::BlackWins),
            "1/2-1/2" => Some(GameResult::Draw),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GameResult::WhiteWins => "1-0",
            GameResult::BlackWins => "0-1",
            GameResult::Draw => "1/2-1/2",
        }
    }

    /// +1 / 0 / -1 from white's point of view.
    pub fn white_score(self) -> i8 {
        match self {
            GameResult::WhiteWins => 1,
            GameResult::BlackWins => -1,
            GameResult::Draw => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordedMove {
    pub mv: Move,
    /// Mover's remaining clock after the move, if a `%clk` comment was present.
    pub clock: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameRecord {
    pub white_elo: u32,
    pub black_elo: u32,
    pub event: String,
    pub time_control: Option<TimeControl>,
    pub result: GameResult,
    /// Starting position; the standard one unless a FEN header was given.
    pub start: Board,
    pub moves: Vec<RecordedMove>,
}

impl GameRecord {
    /// True when no move carries a clock comment.
    pub fn no_clock(&self) -> bool {
        self.moves.iter().all(|m| m.clock.is_none())
    }
}

/// Iterator over the games of a PGN stream.
pub struct PgnReader<R> {
    input: R,
    line: String,
    pending_header: Option<String>,
    tally: Diagnostics,
    done: bool,
}

pub fn parse_pgn_stream<R: BufRead>(input: R) -> PgnReader<R> {
    PgnReader::new(input)
}

/// Raw text of one game: header lines and concatenated movetext.
#[derive(Default)]
struct RawGame {
    headers: Vec<String>,
    movetext: String,
}

impl<R: BufRead> PgnReader<R> {
    pub fn new(input: R) -> Self {
        PgnReader {
            input,
            line: String::new(),
            pending_header: None,
            tally: Diagnostics::default(),
            done: false,
        }
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.tally
    }

    fn next_line(&mut self) -> Option<String> {
        self.line.clear();
        match self.input.read_line(&mut self.line) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(self.line.trim_end_matches(['\n', '\r']).to_string()),
        }
    }

    fn next_raw(&mut self) -> Option<RawGame> {
        if self.done {
            return None;
        }
        let mut raw = RawGame::default();
        if let Some(h) = self.pending_header.take() {
            raw.headers.push(h);
        }
        let mut comment_depth = 0usize;
        loop {
            let Some(line) = self.next_line() else {
                self.done = true;
                break;
            };
            let trimmed = line.trim();
            if comment_depth == 0 && trimmed.starts_with('[') {
                if raw.movetext.trim().is_empty() {
                    raw.headers.push(trimmed.to_string());
                    continue;
                }
                // A header after movetext starts the next game.
                self.pending_header = Some(trimmed.to_string());
                break;
            }
            if trimmed.starts_with('%') {
                continue;
            }
            for c in trimmed.chars() {
                match c {
                    '{' => comment_depth += 1,
                    '}' => comment_depth = comment_depth.saturating_sub(1),
                    _ => {}
                }
            }
            raw.movetext.push_str(trimmed);
            raw.movetext.push(' ');
        }
        if raw.headers.is_empty() && raw.movetext.trim().is_empty() {
            return None;
        }
        Some(raw)
    }
}

impl<R: BufRead> Iterator for PgnReader<R> {
    type Item = GameRecord;

    fn next(&mut self) -> Option<GameRecord> {
        loop {
            let raw = self.next_raw()?;
            self.tally.games_read += 1;
            match build_record(&raw) {
                Some(g) => return Some(g),
                None => self.tally.malformed += 1,
            }
        }
    }
}

fn parse_header(line: &str) -> Option<(&str, &str)> {
    let inner = line.strip_prefix('[')?.strip_suffix(']')?;
    let (name, rest) = inner.split_once(' ')?;
    let value = rest.trim().strip_prefix('"')?.strip_suffix('"')?;
    Some((name, value))
}

fn build_record(raw: &RawGame) -> Option<GameRecord> {
    let mut white_elo = None;
    let mut black_elo = None;
    let mut event = String::new();
    let mut time_control = None;
    let mut header_result = None;
    let mut start = Board::startpos();
    for h in &raw.headers {
        let (name, value) = parse_header(h)?;
        match name {
            "WhiteElo" => white_elo = value.parse::<u32>().ok(),
            "BlackElo" => black_elo = value.parse::<u32>().ok(),
            "Event" => event = value.to_string(),
            "TimeControl" => time_control = TimeControl::parse(value),
            "Result" => header_result = GameResult::parse(value),
            "FEN" => start = Board::from_fen(value).ok()?,
            _ => {}
        }
    }
    let (white_elo, black_elo) = (white_elo?, black_elo?);
    if white_elo == 0 || black_elo == 0 {
        return None;
    }

    let tokens = tokenize(&raw.movetext)?;
    let mut board = start.clone();
    let mut moves: Vec<RecordedMove> = Vec::new();
    let mut result_token = None;
    for tok in tokens {
        match tok {
            Token::San(s) => {
                let mv = board.parse_san(s).ok()?;
                board = board.apply_move(mv).ok()?;
                moves.push(RecordedMove { mv, clock: None });
            }
            Token::Clock(c) => {
                if let Some(last) = moves.last_mut() {
                    last.clock = Some(c);
                }
            }
            Token::Result(r) => result_token = Some(r),
        }
    }
    let result = GameResult::parse(result_token.unwrap_or("*")).or(header_result)?;
    if moves.is_empty() {
        return None;
    }
    Some(GameRecord {
        white_elo,
        black_elo,
        event,
        time_control,
        result,
        start,
        moves,
    })
}

enum Token<'a> {
    San(&'a str),
    Clock(u32),
    Result(&'a str),
}

/// Splits movetext into SAN moves, clock readings and the result token.
/// Variations, NAGs, move numbers and other comments are dropped.
fn tokenize(text: &str) -> Option<Vec<Token<'_>>> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut variation_depth = 0usize;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' => i += 1,
            b'{' => {
                let end = text[i..].find('}').map(|e| i + e)?;
                if variation_depth == 0 {
                    if let Some(clk) = clock_in_comment(&text[i + 1..end]) {
                        out.push(Token::Clock(clk));
                    }
                }
                i = end + 1;
            }
            b';' => break,
            b'(' => {
                variation_depth += 1;
                i += 1;
            }
            b')' => {
                variation_depth = variation_depth.checked_sub(1)?;
                i += 1;
            }
            _ => {
                let end = text[i..]
                    .find([' ', '\t', '{', '(', ')'])
                    .map_or(text.len(), |e| i + e);
                let word = &text[i..end];
                i = end;
                if variation_depth > 0 || word.starts_with('$') {
                    continue;
                }
                if matches!(word, "1-0" | "0-1" | "1/2-1/2" | "*") {
                    out.push(Token::Result(word));
                    continue;
                }
                // Strip a leading move number such as "12." or "12...".
                let san = word.trim_start_matches(|c: char| c.is_ascii_digit());
                let san = if san.len() < word.len() {
                    if !san.starts_with('.') {
                        return None;
                    }
                    san.trim_start_matches('.')
                } else {
                    san
                };
                if !san.is_empty() {
                    out.push(Token::San(san));
                }
            }
        }
    }
    if variation_depth != 0 {
        return None;
    }
    Some(out)
}

/// Extracts whole seconds from a `[%clk H:MM:SS(.f)]` annotation.
fn clock_in_comment(comment: &str) -> Option<u32> {
    let start = comment.find("[%clk")? + "[%clk".len();
    let rest = comment[start..].trim_start();
    let end = rest.find(']')?;
    let mut parts = rest[..end].trim().split(':');
    let h: u32 = parts.next()?.parse().ok()?;
    let m: u32 = parts.next()?.parse().ok()?;
    let s_text = parts.next()?;
    let s: u32 = s_text.split('.').next()?.parse().ok()?;
    if parts.next().is_some() || m >= 60 || s >= 60 {
        return None;
    }
    Some(h * 3600 + m * 60 + s)
}
