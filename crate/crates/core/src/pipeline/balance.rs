use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{bucket_of, BucketScheme, GameRecord, SkillBucket};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalancerConfig {
    /// Games per chunk.
    pub chunk_size: usize,
    /// Maximum games per unordered skill combination within a chunk.
    pub per_combo_cap: usize,
    /// Reserved for randomized variants; the scan itself is order-deterministic.
    pub seed: u64,
}

impl Default for BalancerConfig {
    fn default() -> Self {
        BalancerConfig {
            chunk_size: 20_000,
            per_combo_cap: 20,
            seed: 0,
        }
    }
}

impl BalancerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.per_combo_cap > self.chunk_size {
            return Err(format!(
                "per_combo_cap ({}) exceeds chunk_size ({})",
                self.per_combo_cap, self.chunk_size
            ));
        }
        if self.chunk_size == 0 {
            return Err("chunk_size must be positive".into());
        }
        Ok(())
    }
}

/// Unordered pair of skill buckets, stored low-high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairKey(pub SkillBucket, pub SkillBucket);

impl PairKey {
    pub fn new(a: SkillBucket, b: SkillBucket) -> PairKey {
        PairKey(a.min(b), a.max(b))
    }

    pub fn of_game(g: &GameRecord, scheme: BucketScheme) -> PairKey {
        PairKey::new(bucket_of(g.white_elo, scheme), bucket_of(g.black_elo, scheme))
    }
}

/// Number of unordered bucket pairs, including equal-skill pairs.
pub fn combination_count(scheme: BucketScheme) -> usize {
    let n = scheme.bucket_count();
    n * (n + 1) / 2
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceOutcome {
    /// Indices of the selected games, in scan order.
    pub selected: Vec<usize>,
    /// Games examined before the scan stopped.
    pub scanned: usize,
    pub counts: HashMap<PairKey, usize>,
}

/// Scans a chunk in order, keeping a game while its skill combination has
/// fewer than `per_combo_cap` games. Stops as soon as every combination is full.
pub fn balance_chunk(games: &[GameRecord], cfg: &BalancerConfig, scheme: BucketScheme) -> BalanceOutcome {
    let total = combination_count(scheme);
    let mut counts: HashMap<PairKey, usize> = HashMap::new();
    let mut full = 0;
    let mut selected = Vec::new();
    let mut scanned = 0;
    for (i, g) in games.iter().enumerate() {
        if full == total {
            break;
        }
        scanned = i + 1;
        let n = counts.entry(PairKey::of_game(g, scheme)).or_insert(0);
        if *n < cfg.per_combo_cap {
            *n += 1;
            selected.push(i);
            if *n == cfg.per_combo_cap {
                full += 1;
            }
        }
    }
    BalanceOutcome {
        selected,
        scanned,
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chess::Board;
    use crate::pipeline::{GameResult, RecordedMove};

    fn game(w: u32, b: u32) -> GameRecord {
        let start = Board::startpos();
        GameRecord {
            white_elo: w,
            black_elo: b,
            event: "Rated Rapid game".into(),
            time_control: None,
            result: GameResult::Draw,
            moves: vec![RecordedMove {
                mv: "e2e4".parse().unwrap(),
                clock: Some(60),
            }],
            start,
        }
    }

    fn rating(bucket: usize) -> u32 {
        1000 + 100 * bucket as u32 + 50
    }

    #[test]
    fn cap_on_single_combination() {
        let games: Vec<_> = (0..100).map(|_| game(1150, 1180)).collect();
        let out = balance_chunk(&games, &BalancerConfig::default(), BucketScheme::Standard);
        assert_eq!(out.selected.len(), 20);
        assert_eq!(out.selected, (0..20).collect::<Vec<_>>());
        assert_eq!(out.scanned, 100);
    }

    #[test]
    fn distinct_combinations_all_kept() {
        let mut games = Vec::new();
        'outer: for a in 0..11 {
            for b in a..11 {
                games.push(game(rating(a), rating(b)));
                if games.len() == 20 {
                    break 'outer;
                }
            }
        }
        let out = balance_chunk(&games, &BalancerConfig::default(), BucketScheme::Standard);
        assert_eq!(out.selected.len(), 20);
    }

    #[test]
    fn key_is_unordered() {
        assert_eq!(PairKey::new(3, 7), PairKey::new(7, 3));
        let games = vec![game(1350, 1750), game(1750, 1350)];
        let cfg = BalancerConfig {
            per_combo_cap: 1,
            ..Default::default()
        };
        let out = balance_chunk(&games, &cfg, BucketScheme::Standard);
        assert_eq!(out.selected, vec![0]);
    }

    #[test]
    fn early_stop_when_every_combination_is_full() {
        // 5000 games cycle through all 66 pairs; after that only (1,1) games follow.
        let pairs: Vec<(usize, usize)> = (0..11).flat_map(|a| (a..11).map(move |b| (a, b))).collect();
        assert_eq!(pairs.len(), 66);
        let cap = 20;
        let mut games: Vec<_> = (0..66 * cap)
            .map(|i| {
                let (a, b) = pairs[i % 66];
                game(rating(a), rating(b))
            })
            .collect();
        while games.len() < 5000 {
            games.push(game(rating(1), rating(1)));
        }
        // The last slot to fill sits at index 5000 - 1.
        let last = games.len() - 1;
        games.swap(66 * cap - 1, last);
        while games.len() < 20_000 {
            games.push(game(rating(4), rating(9)));
        }
        let out = balance_chunk(&games, &BalancerConfig::default(), BucketScheme::Standard);
        assert_eq!(out.scanned, 5000);
        assert_eq!(out.selected.len(), 66 * cap);
        assert!(out.counts.values().all(|&c| c == cap));
    }

    #[test]
    fn config_validation() {
        assert!(BalancerConfig::default().validate().is_ok());
        let bad = BalancerConfig {
            chunk_size: 10,
            per_combo_cap: 20,
            seed: 0,
        };
        assert!(bad.validate().is_err());
    }
}
