//! Linear concept probes on the backbone output (pre-attention) and the
//! attention output (post-attention) as the injected skill varies.

mod concepts;
mod fit;

pub use concepts::{compute_labels, Builtin, Concept, ConceptKind, BUILTIN_NAMES};
pub use fit::{
    downsample_majority, fit_lasso, fit_logistic, fit_probe, macro_f1, r2, train_test_split, FitConfig, LassoFit,
    LogisticFit, Metric, ProbeScore, Standardizer,
};

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chess::{Board, Color};
use crate::encoding::{encode_position, EncodingError};
use crate::engine::{EngineError, Evaluator};
use crate::model::{ModelError, Network, Sample};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("concept {0} needs an engine")]
    EngineRequired(String),
    #[error("unknown concept {0}")]
    UnknownConcept(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("pre-attention features differ between skill buckets for position {0}")]
    SkillDependentBackbone(usize),
    #[error("cannot write {path}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    /// Backbone output, before any skill enters.
    Pre,
    /// Output of the last attention block, after its final normalization.
    Post,
}

/// Activations of a position set. Boards with black to move are mirrored
/// first, as for prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub buckets: Vec<usize>,
    /// One row per position.
    pub pre: Array2<f64>,
    /// `post[k]` holds the rows for `buckets[k]` (active = opponent).
    pub post: Vec<Array2<f64>>,
}

/// Runs every position at every listed bucket and checks that the
/// pre-attention features are bitwise identical across buckets.
pub fn extract_activations(net: &Network, boards: &[Board], buckets: &[usize]) -> Result<Activations, ProbeError> {
    let cfg = net.config();
    if !cfg.skill_attention {
        return Err(ModelError::Variant("the attention blocks").into());
    }
    let pre_dim = cfg.patch_channels * 64;
    let post_dim = cfg.patch_channels * cfg.attention_dim;
    let mut pre = Array2::zeros((boards.len(), pre_dim));
    let mut post = vec![Array2::zeros((boards.len(), post_dim)); buckets.len()];
    for (i, board) in boards.iter().enumerate() {
        let view = if board.side_to_move() == Color::Black {
            board.mirror()
        } else {
            board.clone()
        };
        let input = encode_position(&view)?;
        let samples: Vec<Sample<'_>> = buckets
            .iter()
            .map(|&b| Sample {
                input: &input,
                active: b,
                opponent: b,
            })
            .collect();
        let outs = net.forward_batch(&samples)?;
        for (k, out) in outs.iter().enumerate() {
            if out.p_encoded.iter().zip(&outs[0].p_encoded).any(|(a, b)| a.to_bits() != b.to_bits()) {
                return Err(ProbeError::SkillDependentBackbone(i));
            }
            let p = out.p.as_ref().expect("attention output present");
            post[k].row_mut(i).iter_mut().zip(p).for_each(|(d, s)| *d = *s);
        }
        if let Some(first) = outs.first() {
            pre.row_mut(i).iter_mut().zip(&first.p_encoded).for_each(|(d, s)| *d = *s);
        }
    }
    Ok(Activations {
        buckets: buckets.to_vec(),
        pre,
        post,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub concept: String,
    pub kind: ConceptKind,
    pub layer: Layer,
    pub bucket: usize,
    pub score: Option<ProbeScore>,
    /// Why no score was produced.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub positions: usize,
    /// Buckets to probe; empty means all.
    pub buckets: Vec<usize>,
    pub concepts: Vec<String>,
    pub engine_depth: u32,
    pub fit: FitConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            positions: 5000,
            buckets: Vec::new(),
            concepts: BUILTIN_NAMES.iter().map(|s| s.to_string()).collect(),
            engine_depth: 12,
            fit: FitConfig::default(),
        }
    }
}

/// Scores one concept at both layers. The pre-attention probe is fitted
/// once and its score reported for every bucket.
pub fn probe_concept(
    acts: &Activations,
    concept: &dyn Concept,
    labels: &[f64],
    fit: &FitConfig,
    seed: u64,
) -> Vec<ProbeResult> {
    let row = |layer, bucket, r: &Result<ProbeScore, String>| ProbeResult {
        concept: concept.name().to_string(),
        kind: concept.kind(),
        layer,
        bucket,
        score: r.as_ref().ok().cloned(),
        skipped: r.as_ref().err().cloned(),
    };
    let pre = fit_probe(acts.pre.view(), labels, concept.kind(), fit, seed);
    let mut out: Vec<ProbeResult> = acts.buckets.iter().map(|&b| row(Layer::Pre, b, &pre)).collect();
    for (k, &b) in acts.buckets.iter().enumerate() {
        let post = fit_probe(acts.post[k].view(), labels, concept.kind(), fit, seed);
        out.push(row(Layer::Post, b, &post));
    }
    out
}

/// Computes the configured concepts and probes both layers.
pub fn run_probes(
    net: &Network,
    boards: &[Board],
    cfg: &ProbeConfig,
    mut engine: Option<&mut dyn Evaluator>,
    seed: u64,
) -> Result<Vec<ProbeResult>, ProbeError> {
    let concepts = cfg
        .concepts
        .iter()
        .map(|n| Builtin::by_name(n, cfg.engine_depth).ok_or_else(|| ProbeError::UnknownConcept(n.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let buckets: Vec<usize> = if cfg.buckets.is_empty() {
        (0..net.config().buckets).collect()
    } else {
        cfg.buckets.clone()
    };
    let boards = &boards[..boards.len().min(cfg.positions)];
    let acts = extract_activations(net, boards, &buckets)?;
    let mut out = Vec::new();
    for c in &concepts {
        let e: Option<&mut dyn Evaluator> = match engine {
            Some(ref mut e) => Some(&mut **e),
            None => None,
        };
        let labels = compute_labels(c, boards, e)?;
        out.extend(probe_concept(&acts, c, &labels, &cfg.fit, seed));
    }
    Ok(out)
}

pub const PROBE_CSV_HEADER: &str =
    "# pre = backbone output (one fit reused for every bucket); post = attention output after its final normalization";

/// CSV of (concept, layer, bucket, score) with the fit details.
pub fn write_probe_csv(path: &Path, results: &[ProbeResult]) -> Result<(), ProbeError> {
    let err = |source| ProbeError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(err)?;
    writeln!(file, "{PROBE_CSV_HEADER}").map_err(err)?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| ProbeError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(["concept", "layer", "bucket", "metric", "score", "regularization", "note"])
        .map_err(csv_err)?;
    for r in results {
        let layer = match r.layer {
            Layer::Pre => "pre",
            Layer::Post => "post",
        };
        let (metric, score, reg) = match &r.score {
            Some(s) => (
                match s.metric {
                    Metric::R2 => "r2",
                    Metric::MacroF1 => "macro_f1",
                },
                s.score.to_string(),
                s.regularization.to_string(),
            ),
            None => ("", String::new(), String::new()),
        };
        w.write_record([
            r.concept.as_str(),
            layer,
            &r.bucket.to_string(),
            metric,
            &score,
            &reg,
            r.skipped.as_deref().unwrap_or(""),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(err)
}

#[cfg(test)]
mod tests;
