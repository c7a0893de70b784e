use crate::chess::{Board, Color, FenError, Move};

use super::{bucket_of, BucketScheme, Diagnostics, FilterConfig, GameRecord, SkillBucket};

/// One training position, always seen from the side to move (white).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub fen: String,
    pub mv: Move,
    pub active_bucket: SkillBucket,
    pub opp_bucket: SkillBucket,
    /// +1 win, 0 draw, -1 loss for the active player.
    pub outcome: i8,
    pub ply: u32,
}

impl TrainingExample {
    pub fn board(&self) -> Result<Board, FenError> {
        Board::from_fen(&self.fen)
    }
}

/// Emits the filtered, mirrored examples of an accepted game.
///
/// A position at ply `i` (0-based) is kept when `min_ply <= i <= max_ply` and
/// both players' most recent clock readings are at least `min_clock_seconds`.
/// Before a player's first reading the time-control base is assumed.
pub fn extract_examples(
    game: &GameRecord,
    cfg: &FilterConfig,
    scheme: BucketScheme,
    tally: &mut Diagnostics,
) -> Vec<TrainingExample> {
    let base = game.time_control.map(|tc| tc.base_seconds);
    let mut clocks = [base, base];
    let white_bucket = bucket_of(game.white_elo, scheme);
    let black_bucket = bucket_of(game.black_elo, scheme);
    let white_score = game.result.white_score();

    let mut board = game.start.clone();
    let mut out = Vec::new();
    for (ply, rec) in game.moves.iter().enumerate() {
        let ply = ply as u32;
        if ply > cfg.max_ply {
            break;
        }
        let clocks_ok = clocks
            .iter()
            .all(|c| c.is_none_or(|s| s >= cfg.min_clock_seconds));
        let mover = board.side_to_move();
        let next = match board.apply_move(rec.mv) {
            Ok(b) => b,
            Err(_) => {
                tally.illegal_moves += 1;
                break;
            }
        };
        if ply >= cfg.min_ply && clocks_ok {
            let (fen, mv, active, opp, outcome) = match mover {
                Color::White => (board.to_fen(), rec.mv, white_bucket, black_bucket, white_score),
                Color::Black => (
                    board.mirror().to_fen(),
                    rec.mv.mirror(),
                    black_bucket,
                    white_bucket,
                    -white_score,
                ),
            };
            out.push(TrainingExample {
                fen,
                mv,
                active_bucket: active,
                opp_bucket: opp,
                outcome,
                ply,
            });
        }
        if let Some(c) = rec.clock {
            clocks[mover.index()] = Some(c);
        }
        board = next;
    }
    tally.examples += out.len() as u64;
    out
}
