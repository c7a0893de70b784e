use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ConceptKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub folds: usize,
    /// Share of positions held out for scoring.
    pub test_fraction: f64,
    /// Number of L1 penalties on the log grid.
    pub lasso_path: usize,
    /// Smallest penalty as a fraction of the one that zeroes every weight.
    pub lasso_min_ratio: f64,
    pub lasso_max_sweeps: usize,
    /// L2 penalties tried for the logistic probes.
    pub logistic_l2_grid: Vec<f64>,
    pub logistic_iters: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            folds: 5,
            test_fraction: 0.2,
            lasso_path: 20,
            lasso_min_ratio: 1e-4,
            lasso_max_sweeps: 1000,
            logistic_l2_grid: vec![1e-6, 1e-4, 1e-2],
            logistic_iters: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    R2,
    MacroF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeScore {
    pub metric: Metric,
    pub score: f64,
    /// The chosen penalty.
    pub regularization: f64,
    pub train_size: usize,
    pub test_size: usize,
}

/// Seeded shuffle of `0..n` split into (train, test).
pub fn train_test_split(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = ((n as f64 * test_fraction).round() as usize).clamp(1, n.saturating_sub(1));
    let train = idx.split_off(test);
    (train, idx)
}

fn rows(x: ArrayView2<'_, f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

/// Column-wise z-scoring fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Array1<f64>,
    scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Standardizer {
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let scale = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.mean) / &self.scale
    }
}

/// Coordinate descent for `(1/2n)|y - Xw|^2 + lambda |w|_1` on centered
/// data, warm-started from `w`. `xt` is X transposed (features by rows).
fn lasso_cd(xt: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, lambda: f64, w: &mut Array1<f64>, max_sweeps: usize) {
    let n = y.len() as f64;
    let colsq: Vec<f64> = xt.outer_iter().map(|c| c.dot(&c) / n).collect();
    let mut r = &y - &xt.t().dot(w);
    for _ in 0..max_sweeps {
        let mut max_delta = 0.0f64;
        for (j, col) in xt.outer_iter().enumerate() {
            if colsq[j] == 0.0 {
                continue;
            }
            let old = w[j];
            let rho = col.dot(&r) / n + colsq[j] * old;
            let new = rho.signum() * (rho.abs() - lambda).max(0.0) / colsq[j];
            if new != old {
                r.scaled_add(old - new, &col);
                w[j] = new;
                max_delta = max_delta.max((new - old).abs());
            }
        }
        if max_delta < 1e-7 {
            break;
        }
    }
}

fn lambda_grid(xt: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, cfg: &FitConfig) -> Vec<f64> {
    let n = y.len() as f64;
    let max = xt.outer_iter().map(|c| (c.dot(&y) / n).abs()).fold(0.0, f64::max);
    let k = cfg.lasso_path.max(2);
    (0..k)
        .map(|i| max * cfg.lasso_min_ratio.powf(i as f64 / (k - 1) as f64))
        .collect()
}

fn folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = k.clamp(2, n.max(2));
    (0..k).map(|f| idx.iter().copied().skip(f).step_by(k).collect()).collect()
}

fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    fold.iter().for_each(|&i| mask[i] = false);
    (0..n).filter(|&i| mask[i]).collect()
}

/// L1-regularized linear model on standardized features.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub lambda: f64,
    pub weights: Array1<f64>,
    pub intercept: f64,
    standardizer: Standardizer,
}

impl LassoFit {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        self.standardizer.apply(x).dot(&self.weights) + self.intercept
    }
}

fn lasso_path(x: &Array2<f64>, y: &Array1<f64>, lambdas: &[f64], cfg: &FitConfig) -> Vec<(Array1<f64>, f64)> {
    let ymean = y.mean().unwrap_or(0.0);
    let yc = y - ymean;
    let xt = x.t().as_standard_layout().into_owned();
    let mut w = Array1::zeros(x.ncols());
    lambdas
        .iter()
        .map(|&l| {
            lasso_cd(xt.view(), yc.view(), l, &mut w, cfg.lasso_max_sweeps);
            (w.clone(), ymean)
        })
        .collect()
}

/// Lasso with the penalty picked by k-fold cross-validated squared error.
pub fn fit_lasso(x: ArrayView2<'_, f64>, y: &[f64], cfg: &FitConfig, seed: u64) -> LassoFit {
    let standardizer = Standardizer::fit(x);
    let xs = standardizer.apply(x);
    let y = Array1::from(y.to_vec());
    let xt = xs.t().as_standard_layout().into_owned();
    let yc = &y - y.mean().unwrap_or(0.0);
    let lambdas = lambda_grid(xt.view(), yc.view(), cfg);

    let mut cv_err = vec![0.0; lambdas.len()];
    for fold in folds(y.len(), cfg.folds, seed) {
        let train = complement(y.len(), &fold);
        let (xtr, ytr) = (rows(xs.view(), &train), y.select(Axis(0), &train));
        let (xva, yva) = (rows(xs.view(), &fold), y.select(Axis(0), &fold));
        for (e, (w, b)) in cv_err.iter_mut().zip(lasso_path(&xtr, &ytr, &lambdas, cfg)) {
            let resid = &yva - &(xva.dot(&w) + b);
            *e += resid.dot(&resid);
        }
    }
    let best = (0..lambdas.len())
        .min_by(|&a, &b| cv_err[a].total_cmp(&cv_err[b]))
        .expect("non-empty grid");
    let (weights, intercept) = lasso_path(&xs, &y, &lambdas[..=best], cfg).pop().expect("path");
    LassoFit {
        lambda: lambdas[best],
        weights,
        intercept,
        standardizer,
    }
}

/// Coefficient of determination; `None` when the targets are constant.
pub fn r2(truth: &[f64], pred: &[f64]) -> Option<f64> {
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot)
}

/// Mean of the per-class F1 scores (a class never predicted nor present
/// scores 0).
pub fn macro_f1(truth: &[bool], pred: &[bool]) -> f64 {
    let f1 = |c: bool| {
        let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
        for (&t, &p) in truth.iter().zip(pred) {
            match (t == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fnn += 1,
                _ => {}
            }
        }
        let d = 2 * tp + fp + fnn;
        if d == 0 {
            0.0
        } else {
            2.0 * tp as f64 / d as f64
        }
    };
    (f1(false) + f1(true)) / 2.0
}

/// L2-regularized logistic regression on standardized features.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub l2: f64,
    pub weights: Array1<f64>,
    pub intercept: f64,
    standardizer: Standardizer,
}

impl LogisticFit {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<bool> {
        let z = self.standardizer.apply(x).dot(&self.weights) + self.intercept;
        z.iter().map(|&v| v > 0.0).collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Largest eigenvalue of X^T X / n by power iteration.
fn gram_norm(x: ArrayView2<'_, f64>) -> f64 {
    let n = x.nrows() as f64;
    let mut v = Array1::from_elem(x.ncols(), 1.0 / (x.ncols() as f64).sqrt());
    let mut eig = 0.0;
    for _ in 0..50 {
        let u = x.t().dot(&x.dot(&v)) / n;
        eig = u.dot(&u).sqrt();
        if eig == 0.0 {
            break;
        }
        v = u / eig;
    }
    eig
}

/// Nesterov-accelerated gradient descent on the mean log loss plus
/// `l2/2 |w|^2`.
fn logistic_gd(x: ArrayView2<'_, f64>, y: &Array1<f64>, l2: f64, iters: usize) -> (Array1<f64>, f64) {
    let n = x.nrows() as f64;
    let step = 1.0 / (0.25 * (gram_norm(x) + 1.0) + l2);
    let (mut w, mut b) = (Array1::<f64>::zeros(x.ncols()), 0.0);
    let (mut w_prev, mut b_prev) = (w.clone(), b);
    for k in 0..iters {
        let mom = k as f64 / (k as f64 + 3.0);
        let wy = &w + &((&w - &w_prev) * mom);
        let by = b + mom * (b - b_prev);
        let err = (x.dot(&wy) + by).mapv(sigmoid) - y;
        let gw = x.t().dot(&err) / n + &wy * l2;
        let gb = err.sum() / n;
        w_prev = std::mem::replace(&mut w, &wy - &(gw * step));
        b_prev = std::mem::replace(&mut b, by - step * gb);
    }
    (w, b)
}

/// Logistic regression with the L2 penalty picked by k-fold cross-validated
/// macro-F1. Ties go to the earlier grid entry.
pub fn fit_logistic(x: ArrayView2<'_, f64>, y: &[bool], cfg: &FitConfig, seed: u64) -> LogisticFit {
    let standardizer = Standardizer::fit(x);
    let xs = standardizer.apply(x);
    let yf = Array1::from_iter(y.iter().map(|&v| if v { 1.0 } else { 0.0 }));
    let grid = if cfg.logistic_l2_grid.is_empty() {
        vec![1e-2]
    } else {
        cfg.logistic_l2_grid.clone()
    };
    let mut scores = vec![0.0; grid.len()];
    for fold in folds(y.len(), cfg.folds, seed) {
        let train = complement(y.len(), &fold);
        let xtr = rows(xs.view(), &train);
        let ytr = yf.select(Axis(0), &train);
        let xva = rows(xs.view(), &fold);
        let truth: Vec<bool> = fold.iter().map(|&i| y[i]).collect();
        for (s, &l2) in scores.iter_mut().zip(&grid) {
            let (w, b) = logistic_gd(xtr.view(), &ytr, l2, cfg.logistic_iters);
            let pred: Vec<bool> = (xva.dot(&w) + b).iter().map(|&z| z > 0.0).collect();
            *s += macro_f1(&truth, &pred);
        }
    }
    let mut best = 0;
    for i in 1..grid.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    let (weights, intercept) = logistic_gd(xs.view(), &yf, grid[best], cfg.logistic_iters);
    LogisticFit {
        l2: grid[best],
        weights,
        intercept,
        standardizer,
    }
}

/// Keeps every minority example and an equal-size seeded sample of the
/// majority class. Returns indices into `idx`'s referent, sorted.
pub fn downsample_majority(idx: &[usize], labels: &[bool], seed: u64) -> Vec<usize> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| labels[i]);
    let (minority, mut majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    majority.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    majority.truncate(minority.len());
    let mut out = [minority, majority].concat();
    out.sort_unstable();
    out
}

/// Fits a probe on a seeded train split and scores it on the held-out rest:
/// r^2 for continuous labels, macro-F1 for binary ones (trained on a
/// majority-downsampled copy of the train split). `Err` carries the reason
/// a degenerate label set was skipped.
pub fn fit_probe(
    x: ArrayView2<'_, f64>,
    labels: &[f64],
    kind: ConceptKind,
    cfg: &FitConfig,
    seed: u64,
) -> Result<ProbeScore, String> {
    if x.nrows() != labels.len() {
        return Err(format!("{} feature rows for {} labels", x.nrows(), labels.len()));
    }
    if labels.len() < 2 * cfg.folds.max(2) {
        return Err(format!("too few positions ({})", labels.len()));
    }
    let (train, test) = train_test_split(labels.len(), cfg.test_fraction, seed);
    let pick = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| labels[i]).collect() };
    match kind {
        ConceptKind::Continuous => {
            let ytr = pick(&train);
            if ytr.iter().all(|&v| v == ytr[0]) {
                return Err("constant labels".into());
            }
            let fit = fit_lasso(rows(x, &train).view(), &ytr, cfg, seed ^ 1);
            let pred = fit.predict(rows(x, &test).view());
            let score = r2(&pick(&test), pred.as_slice().expect("contiguous"))
                .ok_or_else(|| "constant held-out labels".to_string())?;
            Ok(ProbeScore {
                metric: Metric::R2,
                score,
                regularization: fit.lambda,
                train_size: train.len(),
                test_size: test.len(),
            })
        }
        ConceptKind::Binary => {
            let flags: Vec<bool> = labels.iter().map(|&v| v > 0.5).collect();
            let has_both = |idx: &[usize]| idx.iter().any(|&i| flags[i]) && idx.iter().any(|&i| !flags[i]);
            if !has_both(&train) || !has_both(&test) {
                return Err("only one class present".into());
            }
            let balanced = downsample_majority(&train, &flags, seed ^ 2);
            if balanced.len() < 2 * cfg.folds.max(2) {
                return Err(format!("minority class too small ({})", balanced.len() / 2));
            }
            let ytr: Vec<bool> = balanced.iter().map(|&i| flags[i]).collect();
            let fit = fit_logistic(rows(x, &balanced).view(), &ytr, cfg, seed ^ 3);
            let truth: Vec<bool> = test.iter().map(|&i| flags[i]).collect();
            let pred = fit.predict(rows(x, &test).view());
            Ok(ProbeScore {
                metric: Metric::MacroF1,
                score: macro_f1(&truth, &pred),
                regularization: fit.l2,
                train_size: balanced.len(),
                test_size: test.len(),
            })
        }
    }
}
