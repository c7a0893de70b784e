use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EngineError, EngineEval, Evaluator, Score};
use crate::chess::Board;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheMode {
    /// Serve hits, ask the engine on a miss and append the answer.
    ReadWrite,
    /// Serve only stored entries; a miss is an error.
    Replay,
}

#[derive(Serialize, Deserialize)]
struct Record {
    fen: String,
    depth: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    cp: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    mate: Option<i32>,
    best: Option<String>,
}

/// Position evaluations keyed by (FEN, depth), backed by a JSON-lines file.
pub struct CachedEvaluator<E> {
    inner: Option<E>,
    mode: CacheMode,
    path: PathBuf,
    entries: HashMap<(String, u32), EngineEval>,
    pub hits: usize,
    pub misses: usize,
}

impl<E: Evaluator> CachedEvaluator<E> {
    /// Opens `path` in read-write mode. A missing file starts an empty cache.
    pub fn open(path: &Path, engine: E) -> Result<Self, EngineError> {
        let entries = if path.exists() { read_cache(path)? } else { HashMap::new() };
        Ok(CachedEvaluator {
            inner: Some(engine),
            mode: CacheMode::ReadWrite,
            path: path.to_path_buf(),
            entries,
            hits: 0,
            misses: 0,
        })
    }
}

impl CachedEvaluator<NoEngine> {
    /// Opens `path` for replay; the file must exist.
    pub fn replay(path: &Path) -> Result<Self, EngineError> {
        if !path.exists() {
            return Err(cache_err(path, "replay cache file does not exist"));
        }
        Ok(CachedEvaluator {
            inner: None,
            mode: CacheMode::Replay,
            path: path.to_path_buf(),
            entries: read_cache(path)?,
            hits: 0,
            misses: 0,
        })
    }
}

impl<E> CachedEvaluator<E> {
    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Placeholder engine type for replay-only caches.
pub enum NoEngine {}

impl Evaluator for NoEngine {
    fn evaluate(&mut self, _: &Board, _: u32) -> Result<EngineEval, EngineError> {
        match *self {}
    }
}

impl<E: Evaluator> Evaluator for CachedEvaluator<E> {
    fn evaluate(&mut self, board: &Board, depth: u32) -> Result<EngineEval, EngineError> {
        let fen = board.to_fen();
        let key = (fen, depth);
        if let Some(e) = self.entries.get(&key) {
            self.hits += 1;
            return Ok(e.clone());
        }
        self.misses += 1;
        let Some(engine) = self.inner.as_mut() else {
            return Err(EngineError::CacheMiss { fen: key.0, depth });
        };
        let eval = engine.evaluate(board, depth)?;
        append(&self.path, &key.0, depth, &eval)?;
        self.entries.insert(key, eval.clone());
        Ok(eval)
    }
}

fn cache_err(path: &Path, reason: impl Into<String>) -> EngineError {
    EngineError::Cache {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn read_cache(path: &Path) -> Result<HashMap<(String, u32), EngineEval>, EngineError> {
    let file = File::open(path).map_err(|e| cache_err(path, e.to_string()))?;
    let mut out = HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| cache_err(path, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| cache_err(path, format!("line {}: {reason}", n + 1));
        let rec: Record = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let score = match (rec.cp, rec.mate) {
            (Some(cp), None) => Score::Cp(cp),
            (None, Some(m)) => Score::Mate(m),
            _ => return Err(bad("exactly one of cp and mate must be present".into())),
        };
        let board = Board::from_fen(&rec.fen).map_err(|e| bad(e.to_string()))?;
        let best_move = match rec.best {
            None => None,
            Some(uci) => {
                let mv = uci.parse().map_err(|_| bad(format!("bad move {uci}")))?;
                if !board.legal_moves().contains(&mv) {
                    return Err(bad(format!("illegal move {uci}")));
                }
                Some(mv)
            }
        };
        out.insert(
            (board.to_fen(), rec.depth),
            EngineEval {
                score,
                best_move,
                depth: rec.depth,
            },
        );
    }
    Ok(out)
}

fn append(path: &Path, fen: &str, depth: u32, eval: &EngineEval) -> Result<(), EngineError> {
    let (cp, mate) = match eval.score {
        Score::Cp(cp) => (Some(cp), None),
        Score::Mate(m) => (None, Some(m)),
    };
    let rec = Record {
        fen: fen.to_string(),
        depth,
        cp,
        mate,
        best: eval.best_move.map(|m| m.to_string()),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| cache_err(path, e.to_string()))?;
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| cache_err(path, e.to_string()))?;
    let line = serde_json::to_string(&rec).expect("record serializes");
    writeln!(file, "{line}").map_err(|e| cache_err(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Counting(usize);

    impl Evaluator for Counting {
        fn evaluate(&mut self, board: &Board, depth: u32) -> Result<EngineEval, EngineError> {
            self.0 += 1;
            Ok(EngineEval {
                score: Score::Cp(board.legal_moves().len() as i32),
                best_move: board.legal_moves().first().copied(),
                depth,
            })
        }
    }

    #[test]
    fn cold_then_warm_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let b = Board::startpos();
        let mut cold = CachedEvaluator::open(&path, Counting(0)).unwrap();
        let first = cold.evaluate(&b, 8).unwrap();
        assert_eq!(cold.evaluate(&b, 8).unwrap(), first);
        assert_eq!(cold.inner.as_ref().unwrap().0, 1);
        assert_eq!(cold.hits, 1);

        let mut warm = CachedEvaluator::open(&path, Counting(0)).unwrap();
        assert_eq!(warm.evaluate(&b, 8).unwrap(), first);
        assert_eq!(warm.inner.as_ref().unwrap().0, 0);

        let mut replay = CachedEvaluator::replay(&path).unwrap();
        assert_eq!(replay.evaluate(&b, 8).unwrap(), first);
        assert!(matches!(replay.evaluate(&b, 9), Err(EngineError::CacheMiss { depth: 9, .. })));
    }

    #[test]
    fn replay_without_file_fails() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            CachedEvaluator::replay(&dir.path().join("absent.jsonl")),
            Err(EngineError::Cache { .. })
        ));
    }

    #[test]
    fn record_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(
            &path,
            "{\"fen\":\"rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1\",\"depth\":12,\"cp\":35,\"best\":\"e2e4\"}\n\
             {\"fen\":\"7k/5Q2/6K1/8/8/8/8/8 b - - 0 1\",\"depth\":12,\"cp\":0,\"best\":null}\n",
        )
        .unwrap();
        let mut c = CachedEvaluator::replay(&path).unwrap();
        let e = c.evaluate(&Board::startpos(), 12).unwrap();
        assert_eq!(e.score, Score::Cp(35));
        assert_eq!(e.best_move.unwrap().to_string(), "e2e4");
        let stale = Board::from_fen("7k/5Q2/6K1/8/8/8/8/8 b - - 0 1").unwrap();
        assert!(c.evaluate(&stale, 12).unwrap().is_terminal());

        fs::write(&path, "{\"fen\":\"7k/5Q2/6K1/8/8/8/8/8 b - - 0 1\",\"depth\":1,\"cp\":0,\"mate\":1,\"best\":null}\n").unwrap();
        assert!(CachedEvaluator::replay(&path).is_err());
    }
}
