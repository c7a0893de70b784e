//! Named parameter storage.
//!
//! Parameters are kept as `f32` (the checkpoint representation) and widened
//! to `f64` for computation, so a saved and reloaded model computes exactly
//! the same values as the one that was saved.

use ndarray::ArrayView2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Normal(f64),
    Ones,
    Zeros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvIds {
    pub weight: usize,
    pub gamma: usize,
    pub beta: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct AttnIds {
    pub wq: Vec<usize>,
    pub wk: Vec<usize>,
    pub wv: Vec<usize>,
    pub wskill: Vec<usize>,
    pub wo: usize,
    pub norm1_gamma: usize,
    pub norm1_beta: usize,
    pub ffn_w1: usize,
    pub ffn_b1: usize,
    pub ffn_w2: usize,
    pub ffn_b2: usize,
    pub norm2_gamma: usize,
    pub norm2_beta: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub skill: usize,
    pub stem: ConvIds,
    pub blocks: Vec<[ConvIds; 2]>,
    pub exit_w: usize,
    pub exit_b: usize,
    pub patch_w: Option<usize>,
    pub patch_b: Option<usize>,
    pub attn: Vec<AttnIds>,
    pub policy_w: usize,
    pub policy_b: usize,
    pub aux: Option<(usize, usize)>,
    pub value_w: usize,
    pub value_b: usize,
}

struct Builder {
    specs: Vec<(String, Vec<usize>, Init)>,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.specs.push((name, shape, init));
        self.specs.len() - 1
    }

    fn linear(&mut self, name: String, fan_in: usize, fan_out: usize) -> usize {
        self.add(name, vec![fan_in, fan_out], Init::Normal(1.0 / (fan_in as f64).sqrt()))
    }

    fn conv(&mut self, prefix: &str, c_in: usize, c_out: usize) -> ConvIds {
        let fan_in = c_in * 9;
        ConvIds {
            weight: self.add(
                format!("{prefix}.weight"),
                vec![c_out, fan_in],
                Init::Normal(1.0 / (fan_in as f64).sqrt()),
            ),
            gamma: self.add(format!("{prefix}.norm.gamma"), vec![c_out], Init::Ones),
            beta: self.add(format!("{prefix}.norm.beta"), vec![c_out], Init::Zeros),
        }
    }
}

fn build(config: &ModelConfig) -> (Vec<(String, Vec<usize>, Init)>, Layout) {
    let mut b = Builder { specs: Vec::new() };
    let c = config;
    let skill = b.add("skill.E".into(), vec![c.buckets, c.skill_dim], Init::Normal(1.0));
    let stem = b.conv("backbone.stem", c.input_channels, c.mid_channels);
    let blocks = (0..c.conv_blocks)
        .map(|i| {
            [
                b.conv(&format!("backbone.block.{i}.conv1"), c.mid_channels, c.mid_channels),
                b.conv(&format!("backbone.block.{i}.conv2"), c.mid_channels, c.mid_channels),
            ]
        })
        .collect();
    let exit_w = b.add(
        "backbone.exit.weight".into(),
        vec![c.patch_channels, c.mid_channels],
        Init::Normal(1.0 / (c.mid_channels as f64).sqrt()),
    );
    let exit_b = b.add("backbone.exit.bias".into(), vec![c.patch_channels], Init::Zeros);

    let (mut patch_w, mut patch_b, mut attn) = (None, None, Vec::new());
    if c.skill_attention {
        patch_w = Some(b.linear("patch.W".into(), 64, c.attention_dim));
        patch_b = Some(b.add("patch.b".into(), vec![c.attention_dim], Init::Zeros));
        for j in 0..c.attention_blocks {
            let mut ids = AttnIds {
                wq: Vec::new(),
                wk: Vec::new(),
                wv: Vec::new(),
                wskill: Vec::new(),
                wo: 0,
                norm1_gamma: 0,
                norm1_beta: 0,
                ffn_w1: 0,
                ffn_b1: 0,
                ffn_w2: 0,
                ffn_b2: 0,
                norm2_gamma: 0,
                norm2_beta: 0,
            };
            for k in 0..c.heads {
                let p = format!("attn.{j}.head.{k}");
                ids.wq.push(b.linear(format!("{p}.Wq"), c.attention_dim, c.head_dim));
                ids.wk.push(b.linear(format!("{p}.Wk"), c.attention_dim, c.head_dim));
                ids.wv.push(b.linear(format!("{p}.Wv"), c.attention_dim, c.head_dim));
                ids.wskill.push(b.linear(format!("{p}.Wskill"), 2 * c.skill_dim, c.head_dim));
            }
            let p = format!("attn.{j}");
            ids.wo = b.linear(format!("{p}.Wo"), c.projection_dim(), c.attention_dim);
            ids.norm1_gamma = b.add(format!("{p}.norm1.gamma"), vec![c.attention_dim], Init::Ones);
            ids.norm1_beta = b.add(format!("{p}.norm1.beta"), vec![c.attention_dim], Init::Zeros);
            ids.ffn_w1 = b.linear(format!("{p}.ffn.W1"), c.attention_dim, c.ffn_dim());
            ids.ffn_b1 = b.add(format!("{p}.ffn.b1"), vec![c.ffn_dim()], Init::Zeros);
            ids.ffn_w2 = b.linear(format!("{p}.ffn.W2"), c.ffn_dim(), c.attention_dim);
            ids.ffn_b2 = b.add(format!("{p}.ffn.b2"), vec![c.attention_dim], Init::Zeros);
            ids.norm2_gamma = b.add(format!("{p}.norm2.gamma"), vec![c.attention_dim], Init::Ones);
            ids.norm2_beta = b.add(format!("{p}.norm2.beta"), vec![c.attention_dim], Init::Zeros);
            attn.push(ids);
        }
    }

    let f = c.feature_dim();
    let policy_w = b.linear("head.policy.W".into(), f, c.vocab_size);
    let policy_b = b.add("head.policy.b".into(), vec![c.vocab_size], Init::Zeros);
    let aux = c.aux_head.then(|| {
        (
            b.linear("head.aux.W".into(), f, c.aux_dim),
            b.add("head.aux.b".into(), vec![c.aux_dim], Init::Zeros),
        )
    });
    let value_w = b.linear("head.value.W".into(), f, 1);
    let value_b = b.add("head.value.b".into(), vec![1], Init::Zeros);

    let layout = Layout {
        skill,
        stem,
        blocks,
        exit_w,
        exit_b,
        patch_w,
        patch_b,
        attn,
        policy_w,
        policy_b,
        aux,
        value_w,
        value_b,
    };
    (b.specs, layout)
}

/// All learnable weights of a model, addressed by stable path names such
/// as `attn.0.head.3.Wq`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    config: ModelConfig,
    tensors: Vec<Tensor>,
    pub(crate) layout: Layout,
}

impl Params {
    /// Fresh random initialization, deterministic in `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Params {
        let (specs, layout) = build(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = specs
            .into_iter()
            .map(|(name, shape, init)| {
                let n: usize = shape.iter().product();
                let data = match init {
                    Init::Zeros => vec![0.0; n],
                    Init::Ones => vec![1.0; n],
                    Init::Normal(std) => {
                        let dist = Normal::new(0.0, std).expect("finite std");
                        (0..n).map(|_| dist.sample(&mut rng) as f32).collect()
                    }
                };
                Tensor { name, shape, data }
            })
            .collect();
        Params {
            config: config.clone(),
            tensors,
            layout,
        }
    }

    /// Rebuilds a parameter set from named tensors, checking names and shapes
    /// against the layout implied by `config`.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor>) -> Result<Params, String> {
        let (specs, layout) = build(config);
        if specs.len() != tensors.len() {
            return Err(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                tensors.len()
            ));
        }
        for ((name, shape, _), t) in specs.iter().zip(&tensors) {
            if *name != t.name {
                return Err(format!("expected parameter {name}, found {}", t.name));
            }
            if *shape != t.shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(format!("{name}: shape mismatch, expected {shape:?} found {:?}", t.shape));
            }
        }
        Ok(Params {
            config: config.clone(),
            tensors,
            layout,
        })
    }

    /// Names and shapes the layout for `config` expects, in storage order.
    pub fn expected_layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        build(config).0.into_iter().map(|(n, s, _)| (n, s)).collect()
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Zeroes every skill projection, removing the skill term from all queries.
    pub fn zero_skill_projections(&mut self) {
        for t in &mut self.tensors {
            if t.name.ends_with(".Wskill") {
                t.data.fill(0.0);
            }
        }
    }

    pub fn widen(&self) -> Weights {
        Weights {
            data: self
                .tensors
                .iter()
                .map(|t| t.data.iter().map(|&v| v as f64).collect())
                .collect(),
            shapes: self.tensors.iter().map(|t| t.shape.clone()).collect(),
        }
    }
}

/// `f64` copy of the parameters used by the forward and backward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub(crate) data: Vec<Vec<f64>>,
    pub(crate) shapes: Vec<Vec<usize>>,
}

impl Weights {
    pub(crate) fn mat(&self, id: usize) -> ArrayView2<'_, f64> {
        let s = &self.shapes[id];
        ArrayView2::from_shape((s[0], s[1]), &self.data[id]).expect("2-d parameter")
    }

    pub fn values(&self, id: usize) -> &[f64] {
        &self.data[id]
    }

    pub fn values_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.data[id]
    }
}

/// Gradients, one buffer per parameter tensor in storage order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(params: &Params) -> Grads {
        Grads {
            data: params.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.data {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    /// First parameter with a non-finite gradient entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|g| g.iter().any(|v| !v.is_finite()))
    }
}
