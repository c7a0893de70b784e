use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use maia2::chess::Board;
use maia2::engine::{CachedEvaluator, Evaluator, NoEngine, UciEngine};
use maia2::eval::{evaluate, EvalExample};
use maia2::model::{ModelConfig, Network, Params};
use maia2::pipeline::{balance_chunk, filter_game, ingest_parallel, parse_pgn_stream, Diagnostics, PairKey};
use maia2::probes::{run_probes, write_probe_csv, Builtin, Concept};
use maia2::trainer::{
    gradient_check, load_checkpoint, load_params, save_checkpoint, Dataset, TrainError, Trainer,
};

use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::{Cli, Command, Numeric, Usage};

pub fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let mut cfg = RunConfig::load(g.config.as_deref())?;
    if g.toy {
        cfg.model = ModelConfig {
            buckets: cfg.model.buckets,
            ..ModelConfig::toy()
        };
    }
    let workers = if g.reference_mode {
        1
    } else {
        match g.workers {
            Some(0) => bail!(Usage("--workers must be at least 1".into())),
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    };
    let name = cli.command.name();
    let run_dir = g.run_dir.unwrap_or_else(|| Path::new("runs").join(name));
    Manifest::new(name, &cfg, workers, g.reference_mode).write(&run_dir)?;

    match cli.command {
        Command::Ingest { pgn, out } => ingest(&cfg, &pgn, out, &run_dir, workers),
        Command::BalanceStats { pgn } => balance_stats(&cfg, &pgn, &run_dir),
        Command::Train {
            data,
            steps,
            resume,
            freeze,
            checkpoint_every,
        } => train(&cfg, &data, steps, resume, freeze, checkpoint_every, &run_dir),
        Command::Eval {
            data,
            checkpoint,
            limit,
            replay,
        } => eval(&cfg, &data, &checkpoint, limit, replay, &run_dir),
        Command::Probe { data, checkpoint, replay } => probe(&cfg, &data, &checkpoint, replay, &run_dir),
        Command::Predict {
            fen,
            active,
            opp,
            topk,
            checkpoint,
        } => predict(&cfg, &fen, active, opp, topk, checkpoint),
        Command::Sweep { fen, opp, checkpoint } => sweep(&cfg, &fen, opp, checkpoint, &run_dir),
        Command::Gradcheck => gradcheck(&cfg, &run_dir),
    }
}

fn open_pgn(path: &Path) -> Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufReader::new(std::io::stdin().lock())));
    }
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Box::new(BufReader::new(f)))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn print_diagnostics(d: &Diagnostics) {
    println!("games read        {}", d.games_read);
    println!("malformed         {}", d.malformed);
    println!("not rapid         {}", d.rejected_not_rapid);
    println!("no clock          {}", d.rejected_no_clock);
    println!("accepted          {}", d.accepted);
    println!("balanced out      {}", d.balanced_out);
    println!("illegal moves     {}", d.illegal_moves);
    println!("examples          {}", d.examples);
}

fn ingest(cfg: &RunConfig, pgn: &Path, out: Option<PathBuf>, run_dir: &Path, workers: usize) -> Result<()> {
    let out = out.unwrap_or_else(|| run_dir.join("shards"));
    let report = ingest_parallel(open_pgn(pgn)?, &cfg.ingest(), &out, workers)
        .with_context(|| format!("ingesting {}", pgn.display()))?;
    write_json(&run_dir.join("ingest_report.json"), &report)?;
    print_diagnostics(&report.diagnostics);
    println!("shards            {} in {}", report.shards.len(), out.display());
    Ok(())
}

fn balance_stats(cfg: &RunConfig, pgn: &Path, run_dir: &Path) -> Result<()> {
    let scheme = cfg.bucket_scheme;
    let n = scheme.bucket_count();
    let mut reader = parse_pgn_stream(open_pgn(pgn)?);
    let mut totals = vec![0u64; n * n];
    let (mut chunks, mut accepted_total, mut selected_total) = (0usize, 0usize, 0usize);
    println!("chunk  games  accepted  selected  scanned  full_pairs");
    loop {
        let chunk: Vec<_> = reader.by_ref().take(cfg.balancer.chunk_size).collect();
        if chunk.is_empty() {
            break;
        }
        let parsed = chunk.len();
        let accepted: Vec<_> = chunk.into_iter().filter(|g| filter_game(g, &cfg.filter).is_ok()).collect();
        let outcome = balance_chunk(&accepted, &cfg.balancer, scheme);
        let full = outcome.counts.values().filter(|&&c| c >= cfg.balancer.per_combo_cap).count();
        for &i in &outcome.selected {
            let PairKey(lo, hi) = PairKey::of_game(&accepted[i], scheme);
            totals[lo * n + hi] += 1;
        }
        println!(
            "{chunks:>5}  {parsed:>5}  {:>8}  {:>8}  {:>7}  {full:>10}",
            accepted.len(),
            outcome.selected.len(),
            outcome.scanned,
        );
        accepted_total += accepted.len();
        selected_total += outcome.selected.len();
        chunks += 1;
    }
    let d = reader.diagnostics();
    let path = run_dir.join("balance_stats.csv");
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "low,high,low_label,high_label,games")?;
    for lo in 0..n {
        for hi in lo..n {
            writeln!(w, "{lo},{hi},{},{},{}", scheme.label(lo), scheme.label(hi), totals[lo * n + hi])?;
        }
    }
    w.flush()?;
    println!(
        "{chunks} chunks, {} games parsed ({} malformed), {accepted_total} accepted, {selected_total} kept; per-pair totals in {}",
        d.games_read,
        d.malformed,
        path.display()
    );
    Ok(())
}

fn load_data(dir: &Path) -> Result<Dataset> {
    let data = Dataset::from_shard_dir(dir).with_context(|| format!("loading shards from {}", dir.display()))?;
    if data.is_empty() {
        bail!("no examples in {}", dir.display());
    }
    Ok(data)
}

fn train(
    cfg: &RunConfig,
    data_dir: &Path,
    steps: Option<u64>,
    resume: Option<PathBuf>,
    freeze: Vec<String>,
    checkpoint_every: Option<u64>,
    run_dir: &Path,
) -> Result<()> {
    let data = load_data(data_dir)?;
    let mut trainer = match &resume {
        Some(dir) => {
            let ckpt = load_checkpoint(dir).with_context(|| format!("loading checkpoint {}", dir.display()))?;
            if !freeze.is_empty() && freeze != ckpt.frozen {
                bail!(Usage("--freeze cannot change when resuming".into()));
            }
            Trainer::from_checkpoint(ckpt, &data)?
        }
        None => Trainer::new(&cfg.model, cfg.optimizer.clone(), &data, freeze)?,
    };
    let steps = steps.unwrap_or(cfg.optimizer.max_steps);
    let log_path = run_dir.join("train_log.jsonl");
    let log_file = std::fs::OpenOptions::new()
        .create(true)
        .append(resume.is_some())
        .write(true)
        .truncate(resume.is_none())
        .open(&log_path)
        .with_context(|| format!("opening {}", log_path.display()))?;
    let mut log = BufWriter::new(log_file);
    let mut failure: Option<anyhow::Error> = None;
    let result = trainer.run(steps, Some(run_dir), |t, entry| {
        let line = serde_json::to_string(entry).expect("log entry serializes");
        if let Err(e) = writeln!(log, "{line}") {
            failure = Some(e.into());
            return false;
        }
        if entry.step % 100 == 0 {
            eprintln!("step {:>7}  loss {:.4}  lr {:.2e}", entry.step, entry.loss.total, entry.learning_rate);
        }
        if let Some(every) = checkpoint_every.filter(|&k| k > 0) {
            if entry.step % every == 0 {
                let dir = run_dir.join(format!("checkpoint-{}", entry.step));
                if let Err(e) = save_checkpoint(&dir, &t.checkpoint()) {
                    failure = Some(e.into());
                    return false;
                }
            }
        }
        true
    });
    log.flush()?;
    if let Some(e) = failure {
        return Err(e);
    }
    let entries = match result {
        Err(e @ TrainError::NonFinite { .. }) => return Err(anyhow::Error::new(e).context("training diverged")),
        other => other?,
    };
    let out = run_dir.join("checkpoint");
    save_checkpoint(&out, &trainer.checkpoint())?;
    match entries.last() {
        Some(last) => println!(
            "trained {} steps (now at {}), final loss {:.4}; checkpoint in {}",
            entries.len(),
            trainer.steps_done(),
            last.loss.total,
            out.display()
        ),
        None => println!("no steps run; checkpoint in {}", out.display()),
    }
    Ok(())
}

/// The engine for eval and probe: a replay-only cache, a live engine
/// (optionally cached), or none.
fn engine(cfg: &RunConfig, replay: Option<PathBuf>) -> Result<Option<Box<dyn Evaluator>>> {
    if let Some(path) = replay {
        let cache = CachedEvaluator::<NoEngine>::replay(&path).with_context(|| format!("opening {}", path.display()))?;
        return Ok(Some(Box::new(cache)));
    }
    let Some(exe) = &cfg.engine.path else {
        return Ok(None);
    };
    let live = UciEngine::spawn(exe, &cfg.engine.args, Duration::from_secs(cfg.engine.timeout_secs))
        .with_context(|| format!("starting engine {exe}"))?;
    Ok(Some(match &cfg.engine.cache {
        Some(path) => Box::new(CachedEvaluator::open(path, live)?),
        None => Box::new(live),
    }))
}

fn as_evaluator(engine: &mut Option<Box<dyn Evaluator>>) -> Option<&mut dyn Evaluator> {
    match engine {
        Some(e) => Some(&mut **e),
        None => None,
    }
}

fn load_network(checkpoint: &Path) -> Result<Network> {
    let params = load_params(checkpoint).with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    Ok(Network::new(&params))
}

fn eval(
    cfg: &RunConfig,
    data_dir: &Path,
    checkpoint: &Path,
    limit: Option<usize>,
    replay: Option<PathBuf>,
    run_dir: &Path,
) -> Result<()> {
    let net = load_network(checkpoint)?;
    if net.config().buckets != cfg.bucket_scheme.bucket_count() {
        bail!(Usage(format!(
            "checkpoint has {} buckets but the {:?} scheme has {}",
            net.config().buckets,
            cfg.bucket_scheme,
            cfg.bucket_scheme.bucket_count()
        )));
    }
    let data = load_data(data_dir)?;
    let examples = data
        .shards
        .iter()
        .flatten()
        .take(limit.unwrap_or(usize::MAX))
        .map(EvalExample::from_training)
        .collect::<Result<Vec<_>, _>>()?;
    let mut engine = engine(cfg, replay)?;
    if engine.is_none() {
        eprintln!("no engine configured: smoothness and move quality are skipped");
    }
    let report = evaluate(&net, &examples, &cfg.eval, as_evaluator(&mut engine))?;
    let out = run_dir.join("eval");
    report.write(&out, cfg.bucket_scheme)?;
    println!("examples      {}", report.examples);
    for g in &report.accuracy.groups {
        println!("{g:?}");
    }
    if let Some(m) = report.accuracy.macro_average {
        println!("macro top-1   {m:.4}");
    }
    println!("perplexity    {:?}", report.perplexity.overall);
    println!("reports in {}", out.display());
    Ok(())
}

fn probe_boards(data: &Dataset, n: usize) -> Result<Vec<Board>> {
    data.shards
        .iter()
        .flatten()
        .take(n)
        .map(|ex| ex.board().map_err(anyhow::Error::from))
        .collect()
}

fn probe(cfg: &RunConfig, data_dir: &Path, checkpoint: &Path, replay: Option<PathBuf>, run_dir: &Path) -> Result<()> {
    let net = load_network(checkpoint)?;
    let data = load_data(data_dir)?;
    let boards = probe_boards(&data, cfg.probe.positions)?;
    let mut engine = engine(cfg, replay)?;
    let mut pcfg = cfg.probe.clone();
    if engine.is_none() {
        let (keep, drop): (Vec<String>, Vec<String>) = pcfg.concepts.iter().cloned().partition(|n| {
            Builtin::by_name(n, pcfg.engine_depth).is_none_or(|c| !c.needs_engine())
        });
        if !drop.is_empty() {
            eprintln!("no engine configured: skipping {}", drop.join(", "));
        }
        pcfg.concepts = keep;
    }
    let results = run_probes(&net, &boards, &pcfg, as_evaluator(&mut engine), cfg.probe_seed())?;
    let path = run_dir.join("probes.csv");
    write_probe_csv(&path, &results)?;
    write_json(&run_dir.join("probes.json"), &results)?;
    println!("{} probes over {} positions; results in {}", results.len(), boards.len(), path.display());
    Ok(())
}

fn parse_fen(fen: &str) -> Result<Board> {
    Board::from_fen(fen).map_err(|e| Usage(format!("bad FEN: {e}")).into())
}

fn network_for(cfg: &RunConfig, checkpoint: Option<PathBuf>) -> Result<Network> {
    match checkpoint {
        Some(dir) => load_network(&dir),
        None => {
            eprintln!("no checkpoint given: using the seeded initialization");
            Ok(Network::new(&Params::init(&cfg.model, cfg.optimizer.seed)))
        }
    }
}

fn check_bucket(net: &Network, what: &str, b: usize) -> Result<()> {
    let n = net.config().buckets;
    if b >= n {
        bail!(Usage(format!("--{what} {b} out of range (0..{n})")));
    }
    Ok(())
}

fn predict(cfg: &RunConfig, fen: &str, active: usize, opp: usize, topk: usize, checkpoint: Option<PathBuf>) -> Result<()> {
    let board = parse_fen(fen)?;
    let net = network_for(cfg, checkpoint)?;
    check_bucket(&net, "active", active)?;
    check_bucket(&net, "opp", opp)?;
    let p = net.predict(&board, active, opp)?;
    let mut order: Vec<usize> = (0..p.moves.len()).collect();
    order.sort_by(|&a, &b| p.probs[b].total_cmp(&p.probs[a]));
    for (rank, &i) in order.iter().take(topk).enumerate() {
        let m = p.moves[i];
        println!("{:>2}  {:<8} {:<6} {:.6}", rank + 1, board.to_san(m), m.to_uci(), p.probs[i]);
    }
    println!("win_prob {:.6}", p.win_prob);
    Ok(())
}

fn sweep(cfg: &RunConfig, fen: &str, opp: Option<usize>, checkpoint: Option<PathBuf>, run_dir: &Path) -> Result<()> {
    let board = parse_fen(fen)?;
    let net = network_for(cfg, checkpoint)?;
    if let Some(o) = opp {
        check_bucket(&net, "opp", o)?;
    }
    let n = net.config().buckets;
    let mut rows = Vec::with_capacity(n);
    for a in 0..n {
        rows.push(net.predict(&board, a, opp.unwrap_or(a))?);
    }
    let moves = rows[0].moves.clone();
    // columns by probability averaged over the buckets
    let mut cols: Vec<usize> = (0..moves.len()).collect();
    let mean = |i: usize| rows.iter().map(|r| r.probs[i]).sum::<f64>();
    cols.sort_by(|&a, &b| mean(b).total_cmp(&mean(a)));

    let scheme = cfg.bucket_scheme;
    let path = run_dir.join("sweep.csv");
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    let sans: Vec<String> = cols.iter().map(|&i| board.to_san(moves[i])).collect();
    writeln!(w, "bucket,label,win_prob,{}", cols.iter().map(|&i| moves[i].to_uci()).collect::<Vec<_>>().join(","))?;
    println!("{:<10} {}", "bucket", sans.iter().map(|s| format!("{s:>8}")).collect::<String>());
    for (a, r) in rows.iter().enumerate() {
        let label = if scheme.bucket_count() == n { scheme.label(a) } else { a.to_string() };
        println!("{label:<10} {}", cols.iter().map(|&i| format!("{:>8.4}", r.probs[i])).collect::<String>());
        let probs: Vec<String> = cols.iter().map(|&i| r.probs[i].to_string()).collect();
        writeln!(w, "{a},{label},{},{}", r.win_prob, probs.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn gradcheck(cfg: &RunConfig, run_dir: &Path) -> Result<()> {
    let report = gradient_check(&cfg.model, &cfg.gradcheck)?;
    write_json(&run_dir.join("gradcheck.json"), &report)?;
    let worst = report.worst();
    println!(
        "{} coordinates, max relative error {:.3e} at {}[{}] (tolerance {:.1e})",
        report.coords.len(),
        report.max_rel_error,
        worst.path,
        worst.index,
        report.tolerance
    );
    if !report.passed {
        bail!(Numeric("gradient check failed".into()));
    }
    println!("PASS");
    Ok(())
}
