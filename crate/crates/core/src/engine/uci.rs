use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::{EngineError, EngineEval, Evaluator, Score};
use crate::chess::{Board, Move};

/// One `info` line's search depth and score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InfoLine {
    pub depth: u32,
    pub score: Score,
}

/// Parses `info ... depth D ... score (cp|mate) X ...`. Lines without a
/// score, bound scores and secondary principal variations are ignored.
pub fn parse_info(line: &str) -> Option<InfoLine> {
    let mut tokens = line.split_whitespace();
    if tokens.next()? != "info" {
        return None;
    }
    let (mut depth, mut score) = (None, None);
    let rest: Vec<&str> = tokens.collect();
    let mut i = 0;
    while i < rest.len() {
        match rest[i] {
            "depth" => depth = rest.get(i + 1).and_then(|v| v.parse().ok()),
            "multipv" if rest.get(i + 1) != Some(&"1") => return None,
            "lowerbound" | "upperbound" => return None,
            "score" => {
                let v: i32 = rest.get(i + 2)?.parse().ok()?;
                score = match rest.get(i + 1)? {
                    &"cp" => Some(Score::Cp(v)),
                    &"mate" => Some(Score::Mate(v)),
                    _ => return None,
                };
                i += 2;
            }
            "pv" => break,
            _ => {}
        }
        i += 1;
    }
    Some(InfoLine {
        depth: depth?,
        score: score?,
    })
}

/// Parses `bestmove <uci> [ponder ...]`. Returns `Some(None)` for `(none)`.
pub fn parse_bestmove(line: &str) -> Option<Option<String>> {
    let mut tokens = line.split_whitespace();
    if tokens.next()? != "bestmove" {
        return None;
    }
    match tokens.next() {
        None | Some("(none)") | Some("0000") => Some(None),
        Some(m) => Some(Some(m.to_string())),
    }
}

/// Turns the output of one search into an evaluation: the last scored info
/// line at `depth` (or the deepest one when the target was not reached) and
/// the best move, checked for legality in `board`.
pub fn parse_search<S: AsRef<str>>(board: &Board, lines: &[S], depth: u32) -> Result<EngineEval, EngineError> {
    let mut at_target = None;
    let mut deepest: Option<InfoLine> = None;
    let mut best = None;
    for line in lines {
        let line = line.as_ref();
        if let Some(info) = parse_info(line) {
            if info.depth == depth {
                at_target = Some(info);
            }
            if deepest.is_none_or(|d| info.depth >= d.depth) {
                deepest = Some(info);
            }
        } else if let Some(bm) = parse_bestmove(line) {
            best = Some(bm);
        }
    }
    let best = best.ok_or_else(|| EngineError::Protocol("no bestmove line".into()))?;
    let Some(uci) = best else {
        return Ok(EngineEval::terminal(board, depth));
    };
    let mv: Move = uci
        .parse()
        .map_err(|_| EngineError::Protocol(format!("unparsable best move {uci}")))?;
    let mv = board
        .legal_moves()
        .into_iter()
        .find(|&m| m == mv)
        .ok_or_else(|| EngineError::Protocol(format!("best move {uci} is illegal in {}", board.to_fen())))?;
    let info = at_target
        .or(deepest)
        .ok_or_else(|| EngineError::Protocol("no scored info line".into()))?;
    Ok(EngineEval {
        score: info.score,
        best_move: Some(mv),
        depth: info.depth,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TranscriptLine {
    Sent(String),
    Received(String),
}

/// Everything exchanged with the engine, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub lines: Vec<TranscriptLine>,
}

impl Transcript {
    /// True when no `go` was sent while a previous search was still running.
    pub fn searches_serialized(&self) -> bool {
        let mut searching = false;
        for l in &self.lines {
            match l {
                TranscriptLine::Sent(s) if s.starts_with("go") => {
                    if searching {
                        return false;
                    }
                    searching = true;
                }
                TranscriptLine::Received(s) if s.starts_with("bestmove") => searching = false,
                _ => {}
            }
        }
        true
    }
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = writeln!(self.stdin, "quit");
        let _ = self.stdin.flush();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A UCI engine child process. Requests are strictly serialized.
pub struct UciEngine {
    path: String,
    args: Vec<String>,
    timeout: Duration,
    proc: Option<Process>,
    transcript: Transcript,
    searching: bool,
}

impl UciEngine {
    pub fn spawn(path: &str, args: &[String], timeout: Duration) -> Result<UciEngine, EngineError> {
        let mut engine = UciEngine {
            path: path.to_string(),
            args: args.to_vec(),
            timeout,
            proc: None,
            transcript: Transcript::default(),
            searching: false,
        };
        engine.start()?;
        Ok(engine)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    fn start(&mut self) -> Result<(), EngineError> {
        let mut child = Command::new(&self.path)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|source| EngineError::Spawn {
                path: self.path.clone(),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        self.proc = Some(Process {
            child,
            stdin,
            lines: rx,
        });
        self.searching = false;
        self.send("uci")?;
        self.wait_for("uciok")?;
        self.send("ucinewgame")?;
        self.sync()
    }

    fn send(&mut self, cmd: &str) -> Result<(), EngineError> {
        if cmd.starts_with("go") {
            assert!(!self.searching, "new search sent before bestmove");
            self.searching = true;
        }
        let proc = self.proc.as_mut().ok_or(EngineError::Crashed)?;
        self.transcript.lines.push(TranscriptLine::Sent(cmd.to_string()));
        writeln!(proc.stdin, "{cmd}").and_then(|_| proc.stdin.flush()).map_err(|_| EngineError::Crashed)
    }

    fn recv(&mut self) -> Result<String, EngineError> {
        let proc = self.proc.as_mut().ok_or(EngineError::Crashed)?;
        match proc.lines.recv_timeout(self.timeout) {
            Ok(line) => {
                if line.starts_with("bestmove") {
                    self.searching = false;
                }
                self.transcript.lines.push(TranscriptLine::Received(line.clone()));
                Ok(line)
            }
            Err(RecvTimeoutError::Timeout) => Err(EngineError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(EngineError::Crashed),
        }
    }

    fn wait_for(&mut self, token: &str) -> Result<Vec<String>, EngineError> {
        let mut seen = Vec::new();
        loop {
            let line = self.recv()?;
            let done = line.split_whitespace().next() == Some(token);
            seen.push(line);
            if done {
                return Ok(seen);
            }
        }
    }

    /// `isready` round trip; discards anything the engine still had queued.
    fn sync(&mut self) -> Result<(), EngineError> {
        self.send("isready")?;
        self.wait_for("readyok").map(drop)
    }

    fn search(&mut self, board: &Board, depth: u32) -> Result<EngineEval, EngineError> {
        self.sync()?;
        self.send(&format!("position fen {}", board.to_fen()))?;
        self.send(&format!("go depth {depth}"))?;
        let lines = self.wait_for("bestmove")?;
        parse_search(board, &lines, depth)
    }
}

impl Evaluator for UciEngine {
    /// Positions without legal moves are decided by the rules. A crashed
    /// engine is restarted once before the position fails.
    fn evaluate(&mut self, board: &Board, depth: u32) -> Result<EngineEval, EngineError> {
        if board.legal_moves().is_empty() {
            return Ok(EngineEval::terminal(board, depth));
        }
        match self.search(board, depth) {
            Err(EngineError::Crashed) => {
                self.proc = None;
                self.start()?;
                self.search(board, depth)
            }
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fixture_transcript() {
        let lines = [
            "info depth 11 seldepth 14 score cp 20 nodes 1000 pv d2d4",
            "info depth 12 seldepth 16 multipv 1 score cp 35 nodes 5123 nps 100000 pv e2e4 e7e5",
            "info depth 12 currmove e2e4 currmovenumber 1",
            "bestmove e2e4 ponder e7e5",
        ];
        let e = parse_search(&Board::startpos(), &lines, 12).unwrap();
        assert_eq!(e.score, Score::Cp(35));
        assert_eq!(e.best_move, Some("e2e4".parse().unwrap()));
        assert_eq!(e.depth, 12);
    }

    #[test]
    fn parses_mate_and_bounds() {
        assert_eq!(
            parse_info("info depth 5 score mate 1 pv h5f7"),
            Some(InfoLine {
                depth: 5,
                score: Score::Mate(1)
            })
        );
        assert_eq!(parse_info("info depth 5 score cp 10 lowerbound pv e2e4"), None);
        assert_eq!(parse_info("info depth 5 multipv 2 score cp 10 pv e2e4"), None);
        assert_eq!(parse_info("info string hello"), None);
        assert_eq!(parse_info("info depth 5 score cp -42"), Some(InfoLine {
            depth: 5,
            score: Score::Cp(-42)
        }));
    }

    #[test]
    fn bestmove_none_is_terminal() {
        assert_eq!(parse_bestmove("bestmove (none)"), Some(None));
        let stalemate = Board::from_fen("7k/5Q2/6K1/8/8/8/8/8 b - - 0 1").unwrap();
        let e = parse_search(&stalemate, &["info depth 0 score cp 0", "bestmove (none)"], 12).unwrap();
        assert!(e.is_terminal());
        assert_eq!(e.score, Score::Cp(0));
    }

    #[test]
    fn illegal_best_move_rejected() {
        let err = parse_search(&Board::startpos(), &["info depth 1 score cp 1", "bestmove e2e5"], 1).unwrap_err();
        assert!(matches!(err, EngineError::Protocol(_)));
    }

    #[test]
    fn falls_back_to_deepest_line() {
        let lines = ["info depth 3 score cp 5", "info depth 7 score cp 9", "bestmove g1f3"];
        assert_eq!(parse_search(&Board::startpos(), &lines, 20).unwrap().score, Score::Cp(9));
    }

    #[test]
    fn transcript_serialization_check() {
        let ok = Transcript {
            lines: vec![
                TranscriptLine::Sent("go depth 1".into()),
                TranscriptLine::Received("bestmove e2e4".into()),
                TranscriptLine::Sent("go depth 1".into()),
            ],
        };
        assert!(ok.searches_serialized());
        let bad = Transcript {
            lines: vec![TranscriptLine::Sent("go depth 1".into()), TranscriptLine::Sent("go depth 1".into())],
        };
        assert!(!bad.searches_serialized());
    }
}
