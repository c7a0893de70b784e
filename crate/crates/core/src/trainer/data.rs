use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::encoding::{encode_example, EncodedExample};
use crate::pipeline::{read_shard, ShardError, TrainingExample};

/// Training examples grouped by shard.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub shards: Vec<Vec<TrainingExample>>,
}

impl Dataset {
    pub fn from_examples(examples: Vec<TrainingExample>) -> Dataset {
        Dataset { shards: vec![examples] }
    }

    /// Loads every `*.jsonl` shard under `dir`, in file-name order.
    pub fn from_shard_dir(dir: &Path) -> Result<Dataset, ShardError> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        paths.sort();
        let mut shards = Vec::with_capacity(paths.len());
        for p in paths {
            shards.push(read_shard(&p)?.collect());
        }
        Ok(Dataset { shards })
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, at: (usize, usize)) -> &TrainingExample {
        &self.shards[at.0][at.1]
    }

    /// Visiting order for one epoch: shards permuted, then examples shuffled
    /// within consecutive windows of `buffer`. A pure function of its inputs.
    pub fn epoch_order(&self, seed: u64, epoch: u64, buffer: usize) -> Vec<(usize, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut shard_ids: Vec<usize> = (0..self.shards.len()).collect();
        shard_ids.shuffle(&mut rng);
        let mut order: Vec<(usize, usize)> = shard_ids
            .into_iter()
            .flat_map(|s| (0..self.shards[s].len()).map(move |i| (s, i)))
            .collect();
        for window in order.chunks_mut(buffer.max(1)) {
            window.shuffle(&mut rng);
        }
        order
    }
}

pub fn encode_training_example(ex: &TrainingExample) -> Result<EncodedExample, TrainError> {
    let board = ex.board().map_err(|e| TrainError::Data(format!("{}: {e}", ex.fen)))?;
    encode_example(&board, ex.mv, ex.active_bucket, ex.opp_bucket, ex.outcome as f32)
        .map_err(|e| TrainError::Data(e.to_string()))
}

/// Position in the epoch stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Cursor {
    pub epoch: u64,
    pub position: usize,
}

/// Walks epochs in order, regenerating each epoch's permutation from the seed.
pub(crate) struct Stream {
    seed: u64,
    buffer: usize,
    cursor: Cursor,
    order: Vec<(usize, usize)>,
}

impl Stream {
    pub fn new(data: &Dataset, seed: u64, buffer: usize, cursor: Cursor) -> Stream {
        Stream {
            seed,
            buffer,
            cursor,
            order: data.epoch_order(seed, cursor.epoch, buffer),
        }
    }

    pub fn cursor(&self) -> Cursor {
        self.cursor
    }

    pub fn next_batch(&mut self, data: &Dataset, n: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.cursor.position >= self.order.len() {
                self.cursor = Cursor {
                    epoch: self.cursor.epoch + 1,
                    position: 0,
                };
                self.order = data.epoch_order(self.seed, self.cursor.epoch, self.buffer);
                continue;
            }
            out.push(self.order[self.cursor.position]);
            self.cursor.position += 1;
        }
        out
    }
}
