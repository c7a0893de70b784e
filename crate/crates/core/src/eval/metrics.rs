use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::{EvalError, EvalExample, MovePredictor, SkillGroup};
use crate::chess::{Board, Move};
use crate::pipeline::BucketScheme;

/// The per-example quantities every prediction metric is computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub group: SkillGroup,
    pub active: usize,
    pub opponent: usize,
    /// The most likely legal move equals the played move.
    pub correct: bool,
    /// Probability assigned to the played move.
    pub p_played: f64,
    pub win_prob: f64,
    /// Game result for the side to move in {0, 0.5, 1}.
    pub score: f64,
}

/// Runs the predictor once per example. Output order follows the input.
pub fn score_examples(
    predictor: &dyn MovePredictor,
    examples: &[EvalExample],
    scheme: BucketScheme,
) -> Result<Vec<ScoredExample>, EvalError> {
    examples
        .iter()
        .map(|ex| {
            let pred = predictor.predict(&ex.board, ex.active, ex.opponent)?;
            Ok(ScoredExample {
                group: SkillGroup::from_bucket(ex.active, scheme),
                active: ex.active,
                opponent: ex.opponent,
                correct: pred.best() == ex.played,
                p_played: pred.probability(ex.played),
                win_prob: pred.win_prob,
                score: ex.score(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub group: SkillGroup,
    pub total: usize,
    pub correct: usize,
    /// Percent; `None` for an empty group.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub groups: Vec<GroupAccuracy>,
    /// Unweighted mean over the groups that have examples.
    pub macro_average: Option<f64>,
}

impl AccuracyReport {
    pub fn from_outcomes(outcomes: impl IntoIterator<Item = (SkillGroup, bool)>) -> AccuracyReport {
        let mut counts = [(0usize, 0usize); 3];
        for (g, ok) in outcomes {
            let c = &mut counts[g as usize];
            c.0 += 1;
            c.1 += ok as usize;
        }
        let groups: Vec<GroupAccuracy> = SkillGroup::ALL
            .iter()
            .zip(counts)
            .map(|(&group, (total, correct))| GroupAccuracy {
                group,
                total,
                correct,
                accuracy: (total > 0).then(|| 100.0 * correct as f64 / total as f64),
            })
            .collect();
        AccuracyReport {
            macro_average: mean(groups.iter().filter_map(|g| g.accuracy)),
            groups,
        }
    }

    pub fn group(&self, g: SkillGroup) -> &GroupAccuracy {
        &self.groups[g as usize]
    }
}

pub fn accuracy_report(scored: &[ScoredExample]) -> AccuracyReport {
    AccuracyReport::from_outcomes(scored.iter().map(|s| (s.group, s.correct)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPerplexity {
    pub group: Option<SkillGroup>,
    pub count: usize,
    /// `exp` of the mean negative natural-log likelihood.
    pub perplexity: Option<f64>,
    /// Mean negative log2 likelihood (cross-entropy in bits).
    pub cross_entropy_bits: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub groups: Vec<GroupPerplexity>,
    pub overall: GroupPerplexity,
}

impl PerplexityReport {
    pub fn from_probs(probs: impl IntoIterator<Item = (SkillGroup, f64)>) -> PerplexityReport {
        let mut nll = [(0usize, 0.0f64); 3];
        for (g, p) in probs {
            let c = &mut nll[g as usize];
            c.0 += 1;
            c.1 -= p.ln();
        }
        let make = |group, (count, sum): (usize, f64)| {
            let mean = (count > 0).then(|| sum / count as f64);
            GroupPerplexity {
                group,
                count,
                perplexity: mean.map(f64::exp),
                cross_entropy_bits: mean.map(|m| m / std::f64::consts::LN_2),
            }
        };
        let total = nll.iter().fold((0, 0.0), |a, c| (a.0 + c.0, a.1 + c.1));
        PerplexityReport {
            groups: SkillGroup::ALL.iter().zip(nll).map(|(&g, c)| make(Some(g), c)).collect(),
            overall: make(None, total),
        }
    }
}

pub fn perplexity(scored: &[ScoredExample]) -> PerplexityReport {
    PerplexityReport::from_probs(scored.iter().map(|s| (s.group, s.p_played)))
}

/// Active buckets swept when measuring smoothness (1100 to 1999).
pub const SMOOTHNESS_BUCKETS: RangeInclusive<usize> = 1..=9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Monotonicity {
    /// Every step must increase: `p[i+1] > p[i]`.
    Strict,
    /// Steps may dip by less than the tolerance: `p[i+1] > p[i] - eps`.
    Tolerant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepClass {
    pub monotonic: bool,
    pub transitional: bool,
}

/// Classifies one position's sweep. `p_optimal[i]` is the probability of the
/// optimal move at the i-th swept bucket and `argmax_optimal[i]` whether it
/// was also the most likely move there.
pub fn classify_sweep(p_optimal: &[f64], argmax_optimal: &[bool], mode: Monotonicity) -> SweepClass {
    let eps = match mode {
        Monotonicity::Strict => 0.0,
        Monotonicity::Tolerant(e) => e,
    };
    let monotonic = p_optimal.len() >= 2 && p_optimal.windows(2).all(|w| w[1] > w[0] - eps);
    let first_opt = argmax_optimal.iter().position(|&o| o);
    let transitional = match first_opt {
        Some(k) => k > 0 && argmax_optimal[k..].iter().all(|&o| o),
        None => false,
    };
    SweepClass {
        monotonic,
        transitional,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessStats {
    pub positions: usize,
    /// Positions without legal moves.
    pub skipped: usize,
    pub monotonic: usize,
    pub transitional: usize,
    pub pct_monotonic: f64,
    pub pct_transitional: f64,
}

impl SmoothnessStats {
    pub fn from_classes(classes: &[SweepClass], skipped: usize) -> SmoothnessStats {
        let n = classes.len();
        let monotonic = classes.iter().filter(|c| c.monotonic).count();
        let transitional = classes.iter().filter(|c| c.transitional).count();
        let pct = |k: usize| if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 };
        SmoothnessStats {
            positions: n,
            skipped,
            monotonic,
            transitional,
            pct_monotonic: pct(monotonic),
            pct_transitional: pct(transitional),
        }
    }
}

/// Sweeps active buckets 1 to 9 with the opponent bucket equal to the active
/// one, for positions annotated with their optimal move.
pub fn smoothness(
    predictor: &dyn MovePredictor,
    positions: &[(Board, Move)],
    mode: Monotonicity,
) -> Result<SmoothnessStats, EvalError> {
    if predictor.buckets() <= *SMOOTHNESS_BUCKETS.end() {
        return Err(EvalError::Data(format!(
            "smoothness sweep needs at least {} buckets",
            SMOOTHNESS_BUCKETS.end() + 1
        )));
    }
    let mut classes = Vec::with_capacity(positions.len());
    let mut skipped = 0;
    for (board, optimal) in positions {
        if board.legal_moves().is_empty() {
            skipped += 1;
            continue;
        }
        if !board.is_legal(*optimal) {
            return Err(EvalError::Data(format!("optimal move {optimal} is illegal in {}", board.to_fen())));
        }
        let (mut p, mut top) = (Vec::new(), Vec::new());
        for b in SMOOTHNESS_BUCKETS {
            let pred = predictor.predict(board, b, b)?;
            p.push(pred.probability(*optimal));
            top.push(pred.best() == *optimal);
        }
        classes.push(classify_sweep(&p, &top, mode));
    }
    Ok(SmoothnessStats::from_classes(&classes, skipped))
}

/// Top-1 accuracy for every (active, opponent) bucket pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSkillMatrix {
    pub total: Vec<Vec<usize>>,
    pub correct: Vec<Vec<usize>>,
    /// Cells with fewer examples are reported absent.
    pub min_count: usize,
}

impl CrossSkillMatrix {
    pub fn cell(&self, active: usize, opponent: usize) -> Option<f64> {
        let n = self.total[active][opponent];
        (n > 0 && n >= self.min_count).then(|| self.correct[active][opponent] as f64 / n as f64)
    }

    pub fn matrix(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.total.len())
            .map(|a| (0..self.total.len()).map(|o| self.cell(a, o)).collect())
            .collect()
    }
}

pub fn cross_skill_accuracy(scored: &[ScoredExample], buckets: usize, min_count: usize) -> CrossSkillMatrix {
    let mut m = CrossSkillMatrix {
        total: vec![vec![0; buckets]; buckets],
        correct: vec![vec![0; buckets]; buckets],
        min_count,
    };
    for s in scored {
        m.total[s.active][s.opponent] += 1;
        m.correct[s.active][s.opponent] += s.correct as usize;
    }
    m
}

/// Fractions of identical top moves between two skill configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrices {
    /// `active[i][j]`: active bucket i vs j, averaged over positions and
    /// every fixed opponent bucket.
    pub active: Vec<Vec<f64>>,
    /// `opponent[i][j]`: opponent bucket i vs j, averaged over positions and
    /// every fixed active bucket.
    pub opponent: Vec<Vec<f64>>,
}

/// `grid[p][a][o]` is the top move for position p at active a, opponent o.
pub fn agreement_from_argmax(grid: &[Vec<Vec<Move>>]) -> Result<AgreementMatrices, EvalError> {
    let n = grid.first().map_or(0, |g| g.len());
    if n == 0 || grid.iter().any(|g| g.len() != n || g.iter().any(|row| row.len() != n)) {
        return Err(EvalError::Data("agreement needs a non-empty square grid per position".into()));
    }
    let mut active = vec![vec![0usize; n]; n];
    let mut opponent = vec![vec![0usize; n]; n];
    for g in grid {
        for i in 0..n {
            for j in 0..n {
                for f in 0..n {
                    active[i][j] += (g[i][f] == g[j][f]) as usize;
                    opponent[i][j] += (g[f][i] == g[f][j]) as usize;
                }
            }
        }
    }
    let total = (grid.len() * n) as f64;
    let norm = |m: Vec<Vec<usize>>| -> Vec<Vec<f64>> {
        m.into_iter()
            .map(|row| row.into_iter().map(|c| c as f64 / total).collect())
            .collect()
    };
    Ok(AgreementMatrices {
        active: norm(active),
        opponent: norm(opponent),
    })
}

/// Agreement over a fixed position set. Positions without legal moves are
/// ignored.
pub fn agreement(predictor: &dyn MovePredictor, positions: &[Board]) -> Result<AgreementMatrices, EvalError> {
    let n = predictor.buckets();
    let mut grid = Vec::new();
    for board in positions.iter().filter(|b| !b.legal_moves().is_empty()) {
        let mut g = vec![Vec::with_capacity(n); n];
        for o in 0..n {
            for (a, pred) in predictor.sweep(board, o)?.iter().enumerate() {
                g[a].push(pred.best());
            }
        }
        grid.push(g);
    }
    agreement_from_argmax(&grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_predicted: Option<f64>,
    pub empirical: Option<f64>,
}

/// 100 uniform bins over the predicted win probability; bin k covers
/// [k/100, (k+1)/100), with 1.0 itself placed in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBins {
    pub bins: Vec<CalibrationBin>,
}

pub const CALIBRATION_BINS: usize = 100;

impl CalibrationBins {
    pub fn bin_of(win_prob: f64) -> usize {
        ((win_prob * CALIBRATION_BINS as f64) as usize).min(CALIBRATION_BINS - 1)
    }

    /// Mean |predicted - empirical| over occupied bins.
    pub fn mean_abs_gap(&self) -> Option<f64> {
        mean(self
            .bins
            .iter()
            .filter_map(|b| Some((b.mean_predicted? - b.empirical?).abs())))
    }

    pub fn occupied(&self) -> usize {
        self.bins.iter().filter(|b| b.count > 0).count()
    }
}

/// Bins (predicted win probability, observed score) pairs.
pub fn calibration_from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<CalibrationBins, EvalError> {
    let mut acc = vec![(0usize, 0.0f64, 0.0f64); CALIBRATION_BINS];
    for (w, y) in pairs {
        if !(0.0..=1.0).contains(&w) {
            return Err(EvalError::Data(format!("win probability {w} outside [0, 1]")));
        }
        let a = &mut acc[CalibrationBins::bin_of(w)];
        a.0 += 1;
        a.1 += w;
        a.2 += y;
    }
    let bins = acc
        .into_iter()
        .enumerate()
        .map(|(k, (count, sp, sy))| CalibrationBin {
            lower: k as f64 / CALIBRATION_BINS as f64,
            upper: (k + 1) as f64 / CALIBRATION_BINS as f64,
            count,
            mean_predicted: (count > 0).then(|| sp / count as f64),
            empirical: (count > 0).then(|| sy / count as f64),
        })
        .collect();
    Ok(CalibrationBins { bins })
}

pub fn calibration(scored: &[ScoredExample]) -> Result<CalibrationBins, EvalError> {
    calibration_from_pairs(scored.iter().map(|s| (s.win_prob, s.score)))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| s / n as f64)
}
