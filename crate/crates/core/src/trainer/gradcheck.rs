use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chess::{Board, Color};
use crate::encoding::{encode_example, EncodedExample};
use crate::model::{Grads, ModelConfig, ModelError, Network, Params};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    /// Random coordinates checked on top of one per parameter tensor.
    pub coords: usize,
    pub epsilon: f64,
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator, so coordinates whose
    /// true gradient is essentially zero compare absolute differences.
    pub floor: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            coords: 40,
            epsilon: 1e-4,
            tolerance: 1e-3,
            floor: 1e-6,
            batch: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordCheck {
    pub path: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub coords: Vec<CoordCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst(&self) -> &CoordCheck {
        self.coords
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
            .expect("at least one coordinate")
    }

    pub fn failures(&self) -> impl Iterator<Item = &CoordCheck> {
        self.coords.iter().filter(move |c| !(c.rel_error < self.tolerance))
    }
}

/// Positions from seeded random playouts, mirrored to white-to-move, with a
/// random played move, buckets and outcome.
pub fn random_examples(n: usize, buckets: usize, seed: u64) -> Vec<EncodedExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut board = Board::startpos();
    while out.len() < n {
        let moves = board.legal_moves();
        if moves.is_empty() || board.halfmove_clock() > 50 {
            board = Board::startpos();
            continue;
        }
        let view = if board.side_to_move() == Color::White {
            board.clone()
        } else {
            board.mirror()
        };
        let vm = view.legal_moves();
        let played = vm[rng.gen_range(0..vm.len())];
        let outcome = rng.gen_range(-1i32..=1) as f32;
        let (a, o) = (rng.gen_range(0..buckets), rng.gen_range(0..buckets));
        out.push(encode_example(&view, played, a, o, outcome).expect("legal move from legal position"));
        board = board.apply_move(moves[rng.gen_range(0..moves.len())]).expect("legal");
    }
    out
}

/// Central-difference check of the analytic gradient on a fresh random
/// initialization.
pub fn gradient_check(model: &ModelConfig, cfg: &GradCheckConfig) -> Result<GradCheckReport, ModelError> {
    gradient_check_with(model, cfg, |_, _| {})
}

/// As [`gradient_check`], with `hook` applied to the analytic gradients
/// before comparison (fault injection).
pub fn gradient_check_with(
    model: &ModelConfig,
    cfg: &GradCheckConfig,
    hook: impl Fn(&Params, &mut Grads),
) -> Result<GradCheckReport, ModelError> {
    let params = Params::init(model, cfg.seed);
    let batch = random_examples(cfg.batch.max(1), model.buckets, cfg.seed ^ 0x5EED);
    let net = Network::new(&params);
    let (_, mut grads) = net.loss_and_grads(&params, &batch)?;
    hook(&params, &mut grads);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let tensors = params.tensors();
    let mut picks: Vec<(usize, usize)> = tensors
        .iter()
        .enumerate()
        .map(|(i, t)| (i, rng.gen_range(0..t.len())))
        .collect();
    let total = params.count();
    for _ in 0..cfg.coords {
        let mut flat = rng.gen_range(0..total);
        let mut i = 0;
        while flat >= tensors[i].len() {
            flat -= tensors[i].len();
            i += 1;
        }
        picks.push((i, flat));
    }

    let mut net = net;
    let mut coords = Vec::with_capacity(picks.len());
    for (i, j) in picks {
        let orig = net.weights().values(i)[j];
        net.set_weight(i, j, orig + cfg.epsilon);
        let lp = net.batch_loss(&batch)?.total;
        net.set_weight(i, j, orig - cfg.epsilon);
        let lm = net.batch_loss(&batch)?.total;
        net.set_weight(i, j, orig);
        let numeric = (lp - lm) / (2.0 * cfg.epsilon);
        let analytic = grads.data[i][j];
        let denom = analytic.abs().max(numeric.abs()).max(cfg.floor);
        let rel_error = if analytic.is_finite() {
            (analytic - numeric).abs() / denom
        } else {
            f64::INFINITY
        };
        coords.push(CoordCheck {
            path: tensors[i].name.clone(),
            index: j,
            analytic,
            numeric,
            rel_error,
        });
    }
    let max_rel_error = coords.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        passed: max_rel_error < cfg.tolerance,
        coords,
        max_rel_error,
        tolerance: cfg.tolerance,
    })
}
