//! Line-delimited JSON shards of training examples.
//!
//! ```text
//! {"format":"maia2-shard","version":1}
//! {"fen":"...","move":"e2e4","active_bucket":5,"opp_bucket":7,"outcome":1,"ply":12}
//! ```

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Diagnostics, TrainingExample};
use crate::chess::{Board, Color, Move};

pub const SHARD_FORMAT: &str = "maia2-shard";
pub const SHARD_VERSION: u32 = 1;

/// Upper bound on bucket ids across supported schemes.
const MAX_BUCKETS: usize = 12;

#[derive(Debug, Error)]
pub enum ShardError {
    #[error("shard I/O error")]
    Io(#[from] io::Error),
    #[error("bad shard header: {0}")]
    BadHeader(String),
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    fen: String,
    #[serde(rename = "move")]
    mv: String,
    active_bucket: usize,
    opp_bucket: usize,
    outcome: i8,
    ply: u32,
}

impl From<&TrainingExample> for Record {
    fn from(e: &TrainingExample) -> Self {
        Record {
            fen: e.fen.clone(),
            mv: e.mv.to_uci(),
            active_bucket: e.active_bucket,
            opp_bucket: e.opp_bucket,
            outcome: e.outcome,
            ply: e.ply,
        }
    }
}

impl Record {
    fn into_example(self) -> Option<TrainingExample> {
        let board = Board::from_fen(&self.fen).ok()?;
        let mv: Move = self.mv.parse().ok()?;
        if board.side_to_move() != Color::White
            || !board.is_legal(mv)
            || !(-1..=1).contains(&self.outcome)
            || self.active_bucket >= MAX_BUCKETS
            || self.opp_bucket >= MAX_BUCKETS
        {
            return None;
        }
        Some(TrainingExample {
            fen: board.to_fen(),
            mv,
            active_bucket: self.active_bucket,
            opp_bucket: self.opp_bucket,
            outcome: self.outcome,
            ply: self.ply,
        })
    }
}

/// Writes examples after a format header. Each shard has a single writer.
pub struct ShardWriter<W: Write> {
    out: W,
}

impl<W: Write> ShardWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        let header = Header {
            format: SHARD_FORMAT.to_string(),
            version: SHARD_VERSION,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        Ok(ShardWriter { out })
    }

    fn resume(out: W) -> Self {
        ShardWriter { out }
    }

    pub fn write(&mut self, example: &TrainingExample) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, &Record::from(example))?;
        self.out.write_all(b"\n")
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

impl ShardWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> io::Result<Self> {
        ShardWriter::new(BufWriter::new(File::create(path)?))
    }

    /// Opens an existing shard for appending, writing the header if the file is new or empty.
    pub fn append(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let empty = file.metadata()?.len() == 0;
        let out = BufWriter::new(file);
        if empty {
            ShardWriter::new(out)
        } else {
            Ok(ShardWriter::resume(out))
        }
    }
}

pub fn write_shard<'a>(
    path: &Path,
    examples: impl IntoIterator<Item = &'a TrainingExample>,
) -> io::Result<()> {
    let mut w = ShardWriter::create(path)?;
    for e in examples {
        w.write(e)?;
    }
    w.finish().map(drop)
}

/// Iterates the examples of one shard; unparsable or invalid lines are
/// skipped and counted in `diagnostics().corrupt_lines`.
pub struct ShardReader<R> {
    lines: io::Lines<R>,
    tally: Diagnostics,
}

impl<R: BufRead> ShardReader<R> {
    pub fn new(input: R) -> Result<Self, ShardError> {
        let mut lines = input.lines();
        if let Some(first) = lines.next() {
            let first = first?;
            let header: Header = serde_json::from_str(&first)
                .map_err(|e| ShardError::BadHeader(format!("{e}: {first:?}")))?;
            if header.format != SHARD_FORMAT || header.version != SHARD_VERSION {
                return Err(ShardError::BadHeader(format!(
                    "expected {SHARD_FORMAT} v{SHARD_VERSION}, found {} v{}",
                    header.format, header.version
                )));
            }
        }
        Ok(ShardReader {
            lines,
            tally: Diagnostics::default(),
        })
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.tally
    }
}

impl<R: BufRead> Iterator for ShardReader<R> {
    type Item = TrainingExample;

    fn next(&mut self) -> Option<TrainingExample> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(_) => {
                    self.tally.corrupt_lines += 1;
                    continue;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Record>(&line).ok().and_then(Record::into_example) {
                Some(e) => return Some(e),
                None => self.tally.corrupt_lines += 1,
            }
        }
    }
}

pub fn read_shard(path: &Path) -> Result<ShardReader<BufReader<File>>, ShardError> {
    ShardReader::new(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn examples(n: usize) -> Vec<TrainingExample> {
        let mut b = Board::startpos();
        let mut out = Vec::new();
        let cycle = ["g1f3", "g8f6", "f3g1", "f6g8"];
        for i in 0..n {
            let mv: Move = cycle[i % 4].parse().unwrap();
            let (fen, m) = if b.side_to_move() == Color::White {
                (b.to_fen(), mv)
            } else {
                (b.mirror().to_fen(), mv.mirror())
            };
            out.push(TrainingExample {
                fen,
                mv: m,
                active_bucket: i % 11,
                opp_bucket: (i * 7) % 11,
                outcome: (i % 3) as i8 - 1,
                ply: i as u32,
            });
            b = b.apply_move(mv).unwrap();
        }
        out
    }

    #[test]
    fn round_trip_1000() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let ex = examples(1000);
        write_shard(&path, &ex).unwrap();
        let mut reader = read_shard(&path).unwrap();
        let back: Vec<_> = reader.by_ref().collect();
        assert_eq!(back, ex);
        assert_eq!(reader.diagnostics().corrupt_lines, 0);
    }

    #[test]
    fn empty_shard() {
        assert_eq!(ShardReader::new(&b""[..]).unwrap().count(), 0);
        let mut buf = Vec::new();
        ShardWriter::new(&mut buf).unwrap().finish().unwrap();
        assert_eq!(ShardReader::new(&buf[..]).unwrap().count(), 0);
    }

    #[test]
    fn truncated_final_line() {
        let ex = examples(1000);
        let mut buf = Vec::new();
        let mut w = ShardWriter::new(&mut buf).unwrap();
        for e in &ex {
            w.write(e).unwrap();
        }
        w.finish().unwrap();
        buf.truncate(buf.len() - 20);
        let mut reader = ShardReader::new(&buf[..]).unwrap();
        let back: Vec<_> = reader.by_ref().collect();
        assert_eq!(back.len(), 999);
        assert_eq!(reader.diagnostics().corrupt_lines, 1);
    }

    #[test]
    fn wrong_header_rejected() {
        let text = b"{\"format\":\"other\",\"version\":1}\n";
        assert!(matches!(ShardReader::new(&text[..]), Err(ShardError::BadHeader(_))));
        let text = b"{\"format\":\"maia2-shard\",\"version\":2}\n";
        assert!(matches!(ShardReader::new(&text[..]), Err(ShardError::BadHeader(_))));
    }

    #[test]
    fn illegal_record_counted_as_corrupt() {
        let mut buf = Vec::new();
        let w = ShardWriter::new(&mut buf).unwrap();
        w.finish().unwrap();
        buf.extend_from_slice(
            br#"{"fen":"rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1","move":"e2e5","active_bucket":1,"opp_bucket":1,"outcome":0,"ply":3}"#,
        );
        buf.push(b'\n');
        let mut reader = ShardReader::new(&buf[..]).unwrap();
        assert_eq!(reader.by_ref().count(), 0);
        assert_eq!(reader.diagnostics().corrupt_lines, 1);
    }

    #[test]
    fn append_keeps_single_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let ex = examples(6);
        let mut w = ShardWriter::append(&path).unwrap();
        for e in &ex[..3] {
            w.write(e).unwrap();
        }
        w.finish().unwrap();
        let mut w = ShardWriter::append(&path).unwrap();
        for e in &ex[3..] {
            w.write(e).unwrap();
        }
        w.finish().unwrap();
        let back: Vec<_> = read_shard(&path).unwrap().collect();
        assert_eq!(back, ex);
    }
}
