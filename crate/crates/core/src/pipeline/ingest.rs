use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    balance_chunk, extract_examples, filter_game, parse_pgn_stream, write_shard, BalancerConfig,
    BucketScheme, Diagnostics, FilterConfig, GameRecord, RejectReason, ShardError, TrainingExample,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub filter: FilterConfig,
    pub balancer: BalancerConfig,
    pub scheme: BucketScheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub diagnostics: Diagnostics,
    pub shards: Vec<PathBuf>,
}

pub fn shard_file_name(chunk: usize) -> String {
    format!("shard-{chunk:05}.jsonl")
}

/// Filters, balances and extracts one chunk of parsed games. Pure: chunks
/// can be processed by independent workers and their tallies merged.
pub fn process_chunk(games: &[GameRecord], cfg: &IngestConfig) -> (Vec<TrainingExample>, Diagnostics) {
    let mut tally = Diagnostics::default();
    let mut accepted = Vec::with_capacity(games.len());
    for g in games {
        match filter_game(g, &cfg.filter) {
            Ok(()) => accepted.push(g.clone()),
            Err(RejectReason::NotRapid) => tally.rejected_not_rapid += 1,
            Err(RejectReason::NoClock) => tally.rejected_no_clock += 1,
        }
    }
    tally.accepted = accepted.len() as u64;
    let outcome = balance_chunk(&accepted, &cfg.balancer, cfg.scheme);
    tally.balanced_out = (accepted.len() - outcome.selected.len()) as u64;
    let mut examples = Vec::new();
    for &i in &outcome.selected {
        examples.extend(extract_examples(&accepted[i], &cfg.filter, cfg.scheme, &mut tally));
    }
    (examples, tally)
}

/// Streams a PGN source into balanced shards under `out_dir`, one shard per
/// chunk of `chunk_size` parsed games.
pub fn ingest<R: BufRead>(input: R, cfg: &IngestConfig, out_dir: &Path) -> Result<IngestReport, ShardError> {
    ingest_parallel(input, cfg, out_dir, 1)
}

/// As [`ingest`], processing up to `workers` chunks at a time. Shards and
/// tallies are identical for every worker count.
pub fn ingest_parallel<R: BufRead>(
    input: R,
    cfg: &IngestConfig,
    out_dir: &Path,
    workers: usize,
) -> Result<IngestReport, ShardError> {
    std::fs::create_dir_all(out_dir)?;
    let workers = workers.max(1);
    let mut reader = parse_pgn_stream(input);
    let mut tally = Diagnostics::default();
    let mut shards = Vec::new();
    loop {
        let mut batch: Vec<Vec<GameRecord>> = Vec::with_capacity(workers);
        while batch.len() < workers {
            let chunk: Vec<GameRecord> = reader.by_ref().take(cfg.balancer.chunk_size).collect();
            if chunk.is_empty() {
                break;
            }
            batch.push(chunk);
        }
        if batch.is_empty() {
            break;
        }
        let results: Vec<(Vec<TrainingExample>, Diagnostics)> = if batch.len() == 1 {
            vec![process_chunk(&batch[0], cfg)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = batch.iter().map(|c| s.spawn(move || process_chunk(c, cfg))).collect();
                handles.into_iter().map(|h| h.join().expect("chunk worker panicked")).collect()
            })
        };
        for (examples, t) in results {
            tally += t;
            let path = out_dir.join(shard_file_name(shards.len()));
            write_shard(&path, &examples)?;
            shards.push(path);
        }
    }
    let parsed = reader.diagnostics();
    tally.games_read += parsed.games_read;
    tally.malformed += parsed.malformed;
    Ok(IngestReport {
        diagnostics: tally,
        shards,
    })
}
