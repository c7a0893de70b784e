//! Game ingestion: PGN streaming, game and position filters, skill
//! bucketing, the per-chunk skill-combination balancer and the shard format.

mod balance;
mod bucket;
mod diagnostics;
mod extract;
mod filter;
mod ingest;
mod pgn;
mod shard;

pub use balance::{balance_chunk, combination_count, BalanceOutcome, BalancerConfig, PairKey};
pub use bucket::{bucket_of, BucketScheme, SkillBucket};
pub use diagnostics::Diagnostics;
pub use extract::{extract_examples, TrainingExample};
pub use filter::{filter_game, FilterConfig, RejectReason};
pub use ingest::{ingest, ingest_parallel, process_chunk, shard_file_name, IngestConfig, IngestReport};
pub use pgn::{parse_pgn_stream, GameRecord, GameResult, PgnReader, RecordedMove, TimeControl};
pub use shard::{read_shard, write_shard, ShardError, ShardReader, ShardWriter, SHARD_FORMAT, SHARD_VERSION};
