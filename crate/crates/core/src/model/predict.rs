use super::network::{Network, Sample};
use super::ModelError;
use crate::chess::{Board, Color, Move, MoveIndex, VOCAB_SIZE};
use crate::encoding::encode_position;

/// Distribution over the legal moves of a position.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Legal moves in generation order, in the orientation of the queried board.
    pub moves: Vec<Move>,
    pub probs: Vec<f64>,
    /// Win probability of the side to move.
    pub win_prob: f64,
}

impl Prediction {
    pub fn probability(&self, mv: Move) -> f64 {
        self.moves.iter().position(|&m| m == mv).map_or(0.0, |i| self.probs[i])
    }

    /// Most likely move; ties go to the earlier move.
    pub fn best(&self) -> Move {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        self.moves[best]
    }
}

/// Per-bucket move distributions for one position at a fixed opponent bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillSweep {
    pub moves: Vec<Move>,
    /// Vocabulary index of each move, in the white-to-move orientation.
    pub indices: Vec<MoveIndex>,
    /// `rows[a][i]` is the probability of `moves[i]` for active bucket `a`.
    pub rows: Vec<Vec<f64>>,
    pub win_probs: Vec<f64>,
}

impl SkillSweep {
    pub fn probability(&self, bucket: usize, mv: Move) -> f64 {
        self.moves.iter().position(|&m| m == mv).map_or(0.0, |i| self.rows[bucket][i])
    }

    /// Full vocabulary-sized row for one bucket; zero on illegal moves.
    pub fn dense_row(&self, bucket: usize) -> Vec<f64> {
        let mut out = vec![0.0; VOCAB_SIZE];
        for (idx, &p) in self.indices.iter().zip(&self.rows[bucket]) {
            out[idx.index()] = p;
        }
        out
    }

    pub fn argmax(&self, bucket: usize) -> Move {
        Prediction {
            moves: self.moves.clone(),
            probs: self.rows[bucket].clone(),
            win_prob: self.win_probs[bucket],
        }
        .best()
    }
}

/// The position as the network sees it (white to move), its legal moves in
/// the caller's orientation and their vocabulary indices.
fn prepare(board: &Board) -> Result<(Board, Vec<Move>, Vec<MoveIndex>), ModelError> {
    let flip = board.side_to_move() == Color::Black;
    let view = if flip { board.mirror() } else { board.clone() };
    let legal = view.legal_moves();
    if legal.is_empty() {
        return Err(ModelError::NoLegalMoves(board.to_fen()));
    }
    let indices = legal
        .iter()
        .map(|&m| MoveIndex::from_move(m))
        .collect::<Result<Vec<_>, _>>()
        .map_err(crate::encoding::EncodingError::from)?;
    let moves = legal.iter().map(|&m| if flip { m.mirror() } else { m }).collect();
    Ok((view, moves, indices))
}

fn masked_softmax(logits: &[f64], indices: &[MoveIndex]) -> Vec<f64> {
    let m = indices.iter().map(|i| logits[i.index()]).fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = indices.iter().map(|i| (logits[i.index()] - m).exp()).collect();
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    probs
}

impl Network {
    /// Move distribution restricted to legal moves. Positions with black to
    /// move are mirrored for the network and the moves mapped back.
    pub fn predict(&self, board: &Board, active: usize, opponent: usize) -> Result<Prediction, ModelError> {
        let (view, moves, indices) = prepare(board)?;
        let out = self.forward(&encode_position(&view)?, active, opponent)?;
        Ok(Prediction {
            moves,
            probs: masked_softmax(&out.policy_logits, &indices),
            win_prob: out.win_prob(),
        })
    }

    /// Runs `predict` for every active bucket at a fixed opponent bucket.
    pub fn sweep_skills(&self, board: &Board, opponent: usize) -> Result<SkillSweep, ModelError> {
        let (view, moves, indices) = prepare(board)?;
        let input = encode_position(&view)?;
        let samples: Vec<Sample<'_>> = (0..self.config().buckets)
            .map(|active| Sample {
                input: &input,
                active,
                opponent,
            })
            .collect();
        let outs = self.forward_batch(&samples)?;
        Ok(SkillSweep {
            rows: outs.iter().map(|o| masked_softmax(&o.policy_logits, &indices)).collect(),
            win_probs: outs.iter().map(|o| o.win_prob()).collect(),
            moves,
            indices,
        })
    }
}
