use ndarray::{s, Array1, Array2, Axis};

use super::ops::{
    bce_with_logit, col2im, gelu_back, gelu_map, im2col, instance_norm, instance_norm_back, layer_norm,
    layer_norm_back, neighbor_table, sigmoid, softmax_in_place, NormCache,
};
use super::params::{AttnIds, ConvIds, Grads, Layout, Params, Weights};
use super::{ModelConfig, ModelError};
use crate::encoding::{EncodedExample, Labels, PositionTensor, BOARD_CELLS};

/// One model input: a position and the two skill buckets.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub input: &'a PositionTensor,
    pub active: usize,
    pub opponent: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub policy_logits: Vec<f64>,
    /// Absent when the auxiliary head is disabled.
    pub aux_logits: Option<Vec<f64>>,
    pub value: f64,
    /// Backbone output, `C_patch x 64`, channel-major.
    pub p_encoded: Vec<f64>,
    /// Final token states, `C_patch x d_att`, token-major. Absent without attention.
    pub p: Option<Vec<f64>>,
    /// Attention weights per block, `heads x C_patch x C_patch`.
    pub attention: Vec<Vec<f64>>,
}

impl ForwardOutput {
    pub fn win_prob(&self) -> f64 {
        (self.value.clamp(-1.0, 1.0) + 1.0) / 2.0
    }
}

/// Loss terms. Per-head values are unweighted; `total` applies the weights.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub policy: f64,
    pub aux: f64,
    pub value: f64,
}

impl LossTerms {
    fn add_scaled(&mut self, o: &LossTerms, s: f64) {
        self.total += s * o.total;
        self.policy += s * o.policy;
        self.aux += s * o.aux;
        self.value += s * o.value;
    }
}

struct HeadGrads {
    policy: Vec<f64>,
    aux: Option<Vec<f64>>,
    value: f64,
}

fn example_loss(
    policy: &[f64],
    aux: Option<&[f64]>,
    value: f64,
    labels: &Labels,
    cfg: &ModelConfig,
) -> (LossTerms, HeadGrads) {
    let mut probs = policy.to_vec();
    let lse = softmax_in_place(&mut probs);
    let y = labels.policy.index();
    let ce = lse - policy[y];
    probs[y] -= 1.0;
    probs.iter_mut().for_each(|g| *g *= cfg.policy_weight);

    let (bce, aux_grad) = match aux {
        Some(z) => {
            let target = labels.aux.to_dense();
            let n = z.len() as f64;
            let mut sum = 0.0;
            let mut grad = Vec::with_capacity(z.len());
            for (&zi, &ti) in z.iter().zip(&target) {
                sum += bce_with_logit(zi, ti as f64);
                grad.push(cfg.aux_weight * (sigmoid(zi) - ti as f64) / n);
            }
            (sum / n, Some(grad))
        }
        None => (0.0, None),
    };

    let diff = value - labels.value as f64;
    let terms = LossTerms {
        total: cfg.policy_weight * ce + cfg.aux_weight * bce + cfg.value_weight * diff * diff,
        policy: ce,
        aux: bce,
        value: diff * diff,
    };
    let grads = HeadGrads {
        policy: probs,
        aux: aux_grad,
        value: cfg.value_weight * 2.0 * diff,
    };
    (terms, grads)
}

/// Loss of a single forward output against its labels.
pub fn loss(out: &ForwardOutput, labels: &Labels, cfg: &ModelConfig) -> LossTerms {
    example_loss(&out.policy_logits, out.aux_logits.as_deref(), out.value, labels, cfg).0
}

/// Concatenated per-head projections, assembled once per weight set.
struct AttnCat {
    wq: Array2<f64>,
    wk: Array2<f64>,
    wv: Array2<f64>,
    wskill: Array2<f64>,
}

fn concat_heads(w: &Weights, ids: &[usize]) -> Array2<f64> {
    let first = w.mat(ids[0]);
    let (rows, dh) = first.dim();
    let mut out = Array2::zeros((rows, dh * ids.len()));
    for (k, &id) in ids.iter().enumerate() {
        out.slice_mut(s![.., k * dh..(k + 1) * dh]).assign(&w.mat(id));
    }
    out
}

fn split_heads(cat: &Array2<f64>, ids: &[usize], grads: &mut Grads) {
    let dh = cat.ncols() / ids.len();
    for (k, &id) in ids.iter().enumerate() {
        let block = cat.slice(s![.., k * dh..(k + 1) * dh]);
        for (g, v) in grads.data[id].iter_mut().zip(block.iter()) {
            *g += v;
        }
    }
}

fn add_into(g: &mut [f64], m: impl IntoIterator<Item = f64>) {
    for (a, b) in g.iter_mut().zip(m) {
        *a += b;
    }
}

fn add_row_broadcast(m: &mut Array2<f64>, bias: &[f64]) {
    for mut row in m.rows_mut() {
        add_into(row.as_slice_mut().expect("standard layout"), bias.iter().copied());
    }
}

struct ConvCache {
    cols: Array2<f64>,
    norm: NormCache,
}

struct BlockCache {
    c1: ConvCache,
    a1: Array2<f64>,
    c2: ConvCache,
    r: Array2<f64>,
}

struct AttnCache {
    x: Array2<f64>,
    qs: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    att: Vec<Array2<f64>>,
    o: Array2<f64>,
    z: Array2<f64>,
    y1: Array2<f64>,
    n1: NormCache,
    f1: Array2<f64>,
    f1g: Array2<f64>,
    n2: NormCache,
}

struct Trace {
    batch: usize,
    buckets: Vec<(usize, usize)>,
    skill: Array2<f64>,
    stem: ConvCache,
    stem_a: Array2<f64>,
    blocks: Vec<BlockCache>,
    h_final: Array2<f64>,
    penc: Array2<f64>,
    pflat: Option<Array2<f64>>,
    attn: Vec<AttnCache>,
    feats: Array2<f64>,
    policy: Array2<f64>,
    aux: Option<Array2<f64>>,
    value: Array1<f64>,
}

/// Widened weights plus everything needed to run the network.
pub struct Network {
    config: ModelConfig,
    layout: Layout,
    w: Weights,
    cat: Vec<AttnCat>,
    nbr: [[Option<u8>; 9]; 64],
}

impl Network {
    pub fn new(params: &Params) -> Network {
        Network::from_weights(params, params.widen())
    }

    /// Builds a network over explicit `f64` weights laid out like `params`.
    pub fn from_weights(params: &Params, w: Weights) -> Network {
        let layout = params.layout.clone();
        let cat = layout
            .attn
            .iter()
            .map(|a| AttnCat {
                wq: concat_heads(&w, &a.wq),
                wk: concat_heads(&w, &a.wk),
                wv: concat_heads(&w, &a.wv),
                wskill: concat_heads(&w, &a.wskill),
            })
            .collect();
        Network {
            config: params.config().clone(),
            layout,
            w,
            cat,
            nbr: neighbor_table(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &Weights {
        &self.w
    }

    /// Overwrites one scalar weight, e.g. for finite differences.
    pub fn set_weight(&mut self, tensor: usize, index: usize, value: f64) {
        self.w.data[tensor][index] = value;
        for (ids, cat) in self.layout.attn.iter().zip(&mut self.cat) {
            for (list, m) in [
                (&ids.wq, &mut cat.wq),
                (&ids.wk, &mut cat.wk),
                (&ids.wv, &mut cat.wv),
                (&ids.wskill, &mut cat.wskill),
            ] {
                if let Some(k) = list.iter().position(|&id| id == tensor) {
                    let dh = m.ncols() / list.len();
                    m[[index / dh, k * dh + index % dh]] = value;
                }
            }
        }
    }

    pub fn forward(&self, input: &PositionTensor, active: usize, opponent: usize) -> Result<ForwardOutput, ModelError> {
        let mut out = self.forward_batch(&[Sample {
            input,
            active,
            opponent,
        }])?;
        Ok(out.pop().expect("one output"))
    }

    /// Forward pass of the variant without skill-aware attention.
    pub fn forward_ablation_noatt(
        &self,
        input: &PositionTensor,
        active: usize,
        opponent: usize,
    ) -> Result<ForwardOutput, ModelError> {
        if self.config.skill_attention {
            return Err(ModelError::Variant("a model built without skill-aware attention"));
        }
        self.forward(input, active, opponent)
    }

    pub fn forward_batch(&self, samples: &[Sample<'_>]) -> Result<Vec<ForwardOutput>, ModelError> {
        let t = self.trace(samples)?;
        let cfg = &self.config;
        let cp = cfg.patch_channels;
        let tokens = if cfg.skill_attention {
            Some(t.feats.clone())
        } else {
            None
        };
        Ok((0..t.batch)
            .map(|b| {
                let mut p_encoded = Vec::with_capacity(cp * 64);
                for c in 0..cp {
                    p_encoded.extend(t.penc.slice(s![c, b * 64..(b + 1) * 64]).iter());
                }
                let attention = t
                    .attn
                    .iter()
                    .map(|a| {
                        (0..cfg.heads)
                            .flat_map(|k| a.att[b * cfg.heads + k].iter().copied().collect::<Vec<_>>())
                            .collect()
                    })
                    .collect();
                ForwardOutput {
                    policy_logits: t.policy.row(b).to_vec(),
                    aux_logits: t.aux.as_ref().map(|a| a.row(b).to_vec()),
                    value: t.value[b],
                    p_encoded,
                    p: tokens.as_ref().map(|f| f.row(b).to_vec()),
                    attention,
                }
            })
            .collect())
    }

    /// Mean loss over a batch, without gradients.
    pub fn batch_loss(&self, batch: &[EncodedExample]) -> Result<LossTerms, ModelError> {
        let t = self.trace(&samples_of(batch))?;
        let mut acc = LossTerms::default();
        let scale = 1.0 / batch.len() as f64;
        for (b, ex) in batch.iter().enumerate() {
            let aux = t.aux.as_ref().map(|a| a.row(b).to_vec());
            let (l, _) = example_loss(
                t.policy.row(b).as_slice().expect("row"),
                aux.as_deref(),
                t.value[b],
                &ex.labels,
                &self.config,
            );
            acc.add_scaled(&l, scale);
        }
        Ok(acc)
    }

    /// Mean loss and its exact gradient with respect to every parameter.
    pub fn loss_and_grads(&self, params: &Params, batch: &[EncodedExample]) -> Result<(LossTerms, Grads), ModelError> {
        let t = self.trace(&samples_of(batch))?;
        let cfg = &self.config;
        let n = t.batch;
        let scale = 1.0 / n as f64;
        let mut acc = LossTerms::default();
        let mut dpol = Array2::zeros((n, cfg.vocab_size));
        let mut daux = t.aux.as_ref().map(|_| Array2::zeros((n, cfg.aux_dim)));
        let mut dval = Array1::zeros(n);
        for (b, ex) in batch.iter().enumerate() {
            let aux = t.aux.as_ref().map(|a| a.row(b).to_vec());
            let (l, g) = example_loss(
                t.policy.row(b).as_slice().expect("row"),
                aux.as_deref(),
                t.value[b],
                &ex.labels,
                cfg,
            );
            acc.add_scaled(&l, scale);
            dpol.row_mut(b).assign(&Array1::from(g.policy).mapv(|v| v * scale));
            if let (Some(d), Some(ga)) = (daux.as_mut(), g.aux) {
                d.row_mut(b).assign(&Array1::from(ga).mapv(|v| v * scale));
            }
            dval[b] = g.value * scale;
        }
        let mut grads = Grads::zeros_like(params);
        self.backward(&t, dpol, daux, dval, &mut grads);
        if let Some(i) = grads.first_non_finite() {
            return Err(ModelError::NonFiniteGradient(params.tensors()[i].name.clone()));
        }
        Ok((acc, grads))
    }

    fn trace(&self, samples: &[Sample<'_>]) -> Result<Trace, ModelError> {
        let cfg = &self.config;
        let l = &self.layout;
        if samples.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let n = samples.len();
        for s in samples {
            for bucket in [s.active, s.opponent] {
                if bucket >= cfg.buckets {
                    return Err(ModelError::BucketOutOfRange {
                        bucket,
                        buckets: cfg.buckets,
                    });
                }
            }
            if s.input.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteInput);
            }
        }

        let ds = cfg.skill_dim;
        let e = self.w.mat(l.skill);
        let mut skill = Array2::zeros((n, 2 * ds));
        for (b, s) in samples.iter().enumerate() {
            skill.slice_mut(s![b, ..ds]).assign(&e.row(s.active));
            skill.slice_mut(s![b, ds..]).assign(&e.row(s.opponent));
        }

        let cin = cfg.input_channels;
        let mut x = Array2::zeros((cin, n * BOARD_CELLS));
        for (b, s) in samples.iter().enumerate() {
            let v = s.input.as_slice();
            for c in 0..cin {
                for sq in 0..BOARD_CELLS {
                    x[[c, b * 64 + sq]] = v[c * 64 + sq] as f64;
                }
            }
        }

        let (stem, stem_a) = self.conv_norm(&x, l.stem);
        let mut h = gelu_map(&stem_a);
        let mut blocks = Vec::with_capacity(l.blocks.len());
        for ids in &l.blocks {
            let (c1, a1) = self.conv_norm(&h, ids[0]);
            let u = gelu_map(&a1);
            let (c2, n2) = self.conv_norm(&u, ids[1]);
            let r = n2 + &h;
            h = gelu_map(&r);
            blocks.push(BlockCache { c1, a1, c2, r });
        }
        let mut penc = self.w.mat(l.exit_w).dot(&h);
        for (c, mut row) in penc.rows_mut().into_iter().enumerate() {
            let bias = self.w.values(l.exit_b)[c];
            row.mapv_inplace(|v| v + bias);
        }

        let cp = cfg.patch_channels;
        let (feats, pflat, attn) = if cfg.skill_attention {
            let mut pflat = Array2::zeros((n * cp, 64));
            for b in 0..n {
                for c in 0..cp {
                    pflat.row_mut(b * cp + c).assign(&penc.slice(s![c, b * 64..(b + 1) * 64]));
                }
            }
            let mut tok = pflat.dot(&self.w.mat(l.patch_w.expect("patch")));
            add_row_broadcast(&mut tok, self.w.values(l.patch_b.expect("patch")));
            let mut caches = Vec::with_capacity(l.attn.len());
            for (ids, cat) in l.attn.iter().zip(&self.cat) {
                let (y, cache) = self.attention_block(tok, &skill, ids, cat, n);
                caches.push(cache);
                tok = y;
            }
            let d = cfg.attention_dim;
            let feats = tok.into_shape_with_order((n, cp * d)).expect("contiguous tokens");
            (feats, Some(pflat), caches)
        } else {
            let mut feats = Array2::zeros((n, cp * 64 + 2 * ds));
            for b in 0..n {
                for c in 0..cp {
                    feats
                        .slice_mut(s![b, c * 64..(c + 1) * 64])
                        .assign(&penc.slice(s![c, b * 64..(b + 1) * 64]));
                }
                feats.slice_mut(s![b, cp * 64..]).assign(&skill.row(b));
            }
            (feats, None, Vec::new())
        };

        let mut policy = feats.dot(&self.w.mat(l.policy_w));
        add_row_broadcast(&mut policy, self.w.values(l.policy_b));
        let aux = l.aux.map(|(wa, ba)| {
            let mut a = feats.dot(&self.w.mat(wa));
            add_row_broadcast(&mut a, self.w.values(ba));
            a
        });
        let value = feats.dot(&self.w.mat(l.value_w)).column(0).mapv(|v| v + self.w.values(l.value_b)[0]);

        Ok(Trace {
            batch: n,
            buckets: samples.iter().map(|s| (s.active, s.opponent)).collect(),
            skill,
            stem,
            stem_a,
            blocks,
            h_final: h,
            penc,
            pflat,
            attn,
            feats,
            policy,
            aux,
            value,
        })
    }

    fn conv_norm(&self, x: &Array2<f64>, ids: ConvIds) -> (ConvCache, Array2<f64>) {
        let cols = im2col(x, &self.nbr);
        let y = self.w.mat(ids.weight).dot(&cols);
        let (out, norm) = instance_norm(&y, self.w.values(ids.gamma), self.w.values(ids.beta));
        (ConvCache { cols, norm }, out)
    }

    fn conv_norm_back(
        &self,
        cache: &ConvCache,
        ids: ConvIds,
        d_out: &Array2<f64>,
        grads: &mut Grads,
        need_input_grad: bool,
    ) -> Option<Array2<f64>> {
        let (dg, db) = two_mut(&mut grads.data, ids.gamma, ids.beta);
        let dy = instance_norm_back(d_out, &cache.norm, self.w.values(ids.gamma), dg, db);
        add_into(&mut grads.data[ids.weight], dy.dot(&cache.cols.t()).into_iter());
        need_input_grad.then(|| col2im(&self.w.mat(ids.weight).t().dot(&dy), &self.nbr))
    }

    fn attention_block(
        &self,
        x: Array2<f64>,
        skill: &Array2<f64>,
        ids: &AttnIds,
        cat: &AttnCat,
        n: usize,
    ) -> (Array2<f64>, AttnCache) {
        let cfg = &self.config;
        let (t, h, dh) = (cfg.patch_channels, cfg.heads, cfg.head_dim);
        let scale = 1.0 / (dh as f64).sqrt();
        let mut qs = x.dot(&cat.wq);
        let k = x.dot(&cat.wk);
        let v = x.dot(&cat.wv);
        let sk = skill.dot(&cat.wskill);
        for b in 0..n {
            let mut rows = qs.slice_mut(s![b * t..(b + 1) * t, ..]);
            for mut row in rows.rows_mut() {
                row += &sk.row(b);
            }
        }
        let mut o = Array2::zeros((n * t, h * dh));
        let mut att = Vec::with_capacity(n * h);
        for b in 0..n {
            for head in 0..h {
                let rs = s![b * t..(b + 1) * t, head * dh..(head + 1) * dh];
                let mut a = qs.slice(rs).dot(&k.slice(rs).t()) * scale;
                for mut row in a.rows_mut() {
                    softmax_in_place(row.as_slice_mut().expect("row"));
                }
                o.slice_mut(rs).assign(&a.dot(&v.slice(rs)));
                att.push(a);
            }
        }
        let z = o.dot(&self.w.mat(ids.wo));
        let r1 = gelu_map(&z) + &x;
        let (y1, n1) = layer_norm(&r1, self.w.values(ids.norm1_gamma), self.w.values(ids.norm1_beta));
        let mut f1 = y1.dot(&self.w.mat(ids.ffn_w1));
        add_row_broadcast(&mut f1, self.w.values(ids.ffn_b1));
        let f1g = gelu_map(&f1);
        let mut f2 = f1g.dot(&self.w.mat(ids.ffn_w2));
        add_row_broadcast(&mut f2, self.w.values(ids.ffn_b2));
        let r2 = f2 + &y1;
        let (y2, n2) = layer_norm(&r2, self.w.values(ids.norm2_gamma), self.w.values(ids.norm2_beta));
        let cache = AttnCache {
            x,
            qs,
            k,
            v,
            att,
            o,
            z,
            y1,
            n1,
            f1,
            f1g,
            n2,
        };
        (y2, cache)
    }

    /// Returns the gradient with respect to the block input; accumulates
    /// the skill-vector gradient into `dskill`.
    fn attention_back(
        &self,
        c: &AttnCache,
        ids: &AttnIds,
        cat: &AttnCat,
        skill: &Array2<f64>,
        dy2: &Array2<f64>,
        dskill: &mut Array2<f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        let cfg = &self.config;
        let (t, h, dh) = (cfg.patch_channels, cfg.heads, cfg.head_dim);
        let n = dy2.nrows() / t;
        let scale = 1.0 / (dh as f64).sqrt();

        let (dg, db) = two_mut(&mut grads.data, ids.norm2_gamma, ids.norm2_beta);
        let dr2 = layer_norm_back(dy2, &c.n2, self.w.values(ids.norm2_gamma), dg, db);
        add_into(&mut grads.data[ids.ffn_w2], c.f1g.t().dot(&dr2).into_iter());
        add_into(&mut grads.data[ids.ffn_b2], dr2.sum_axis(Axis(0)).into_iter());
        let df1 = gelu_back(&dr2.dot(&self.w.mat(ids.ffn_w2).t()), &c.f1);
        add_into(&mut grads.data[ids.ffn_w1], c.y1.t().dot(&df1).into_iter());
        add_into(&mut grads.data[ids.ffn_b1], df1.sum_axis(Axis(0)).into_iter());
        let dy1 = dr2 + &df1.dot(&self.w.mat(ids.ffn_w1).t());

        let (dg, db) = two_mut(&mut grads.data, ids.norm1_gamma, ids.norm1_beta);
        let dr1 = layer_norm_back(&dy1, &c.n1, self.w.values(ids.norm1_gamma), dg, db);
        let dz = gelu_back(&dr1, &c.z);
        add_into(&mut grads.data[ids.wo], c.o.t().dot(&dz).into_iter());
        let d_o = dz.dot(&self.w.mat(ids.wo).t());

        let mut dqs = Array2::zeros(c.qs.dim());
        let mut dk = Array2::zeros(c.k.dim());
        let mut dv = Array2::zeros(c.v.dim());
        for b in 0..n {
            for head in 0..h {
                let rs = s![b * t..(b + 1) * t, head * dh..(head + 1) * dh];
                let a = &c.att[b * h + head];
                let dob = d_o.slice(rs);
                let da = dob.dot(&c.v.slice(rs).t());
                dv.slice_mut(rs).assign(&a.t().dot(&dob));
                let mut dsc = a * &da;
                for (mut row, arow) in dsc.rows_mut().into_iter().zip(a.rows()) {
                    let tot: f64 = row.sum();
                    for (g, &p) in row.iter_mut().zip(arow.iter()) {
                        *g -= p * tot;
                    }
                }
                dsc *= scale;
                dqs.slice_mut(rs).assign(&dsc.dot(&c.k.slice(rs)));
                dk.slice_mut(rs).assign(&dsc.t().dot(&c.qs.slice(rs)));
            }
        }
        let mut dsk = Array2::zeros((n, h * dh));
        for b in 0..n {
            dsk.row_mut(b).assign(&dqs.slice(s![b * t..(b + 1) * t, ..]).sum_axis(Axis(0)));
        }
        split_heads(&skill.t().dot(&dsk), &ids.wskill, grads);
        *dskill += &dsk.dot(&cat.wskill.t());
        split_heads(&c.x.t().dot(&dqs), &ids.wq, grads);
        split_heads(&c.x.t().dot(&dk), &ids.wk, grads);
        split_heads(&c.x.t().dot(&dv), &ids.wv, grads);
        dr1 + &dqs.dot(&cat.wq.t()) + &dk.dot(&cat.wk.t()) + &dv.dot(&cat.wv.t())
    }

    fn backward(
        &self,
        t: &Trace,
        dpol: Array2<f64>,
        daux: Option<Array2<f64>>,
        dval: Array1<f64>,
        grads: &mut Grads,
    ) {
        let cfg = &self.config;
        let l = &self.layout;
        let n = t.batch;

        add_into(&mut grads.data[l.policy_w], t.feats.t().dot(&dpol).into_iter());
        add_into(&mut grads.data[l.policy_b], dpol.sum_axis(Axis(0)).into_iter());
        let mut dfeats = dpol.dot(&self.w.mat(l.policy_w).t());
        if let (Some((wa, ba)), Some(da)) = (l.aux, daux.as_ref()) {
            add_into(&mut grads.data[wa], t.feats.t().dot(da).into_iter());
            add_into(&mut grads.data[ba], da.sum_axis(Axis(0)).into_iter());
            dfeats += &da.dot(&self.w.mat(wa).t());
        }
        let wv = self.w.values(l.value_w);
        for b in 0..n {
            let g = dval[b];
            for (j, (gw, f)) in grads.data[l.value_w].iter_mut().zip(t.feats.row(b)).enumerate() {
                *gw += g * f;
                dfeats[[b, j]] += g * wv[j];
            }
        }
        grads.data[l.value_b][0] += dval.sum();

        let cp = cfg.patch_channels;
        let ds = cfg.skill_dim;
        let mut dskill = Array2::zeros((n, 2 * ds));
        let mut dpenc = Array2::zeros(t.penc.dim());
        if cfg.skill_attention {
            let d = cfg.attention_dim;
            let mut dtok = dfeats.into_shape_with_order((n * cp, d)).expect("contiguous");
            for ((cache, ids), cat) in t.attn.iter().zip(&l.attn).zip(&self.cat).rev() {
                dtok = self.attention_back(cache, ids, cat, &t.skill, &dtok, &mut dskill, grads);
            }
            let pflat = t.pflat.as_ref().expect("patch cache");
            let pw = l.patch_w.expect("patch");
            add_into(&mut grads.data[pw], pflat.t().dot(&dtok).into_iter());
            add_into(&mut grads.data[l.patch_b.expect("patch")], dtok.sum_axis(Axis(0)).into_iter());
            let dpflat = dtok.dot(&self.w.mat(pw).t());
            for b in 0..n {
                for c in 0..cp {
                    dpenc.slice_mut(s![c, b * 64..(b + 1) * 64]).assign(&dpflat.row(b * cp + c));
                }
            }
        } else {
            for b in 0..n {
                for c in 0..cp {
                    dpenc
                        .slice_mut(s![c, b * 64..(b + 1) * 64])
                        .assign(&dfeats.slice(s![b, c * 64..(c + 1) * 64]));
                }
                dskill.row_mut(b).assign(&dfeats.slice(s![b, cp * 64..]));
            }
        }

        let ge = &mut grads.data[l.skill];
        for (b, &(a, o)) in t.buckets.iter().enumerate() {
            for j in 0..ds {
                ge[a * ds + j] += dskill[[b, j]];
                ge[o * ds + j] += dskill[[b, ds + j]];
            }
        }

        add_into(&mut grads.data[l.exit_w], dpenc.dot(&t.h_final.t()).into_iter());
        add_into(&mut grads.data[l.exit_b], dpenc.sum_axis(Axis(1)).into_iter());
        let mut dh = self.w.mat(l.exit_w).t().dot(&dpenc);

        for (cache, ids) in t.blocks.iter().zip(&l.blocks).rev() {
            let dr = gelu_back(&dh, &cache.r);
            let du = self.conv_norm_back(&cache.c2, ids[1], &dr, grads, true).expect("input grad");
            let da = gelu_back(&du, &cache.a1);
            dh = self.conv_norm_back(&cache.c1, ids[0], &da, grads, true).expect("input grad") + &dr;
        }
        let da0 = gelu_back(&dh, &t.stem_a);
        self.conv_norm_back(&t.stem, l.stem, &da0, grads, false);
    }
}

fn samples_of(batch: &[EncodedExample]) -> Vec<Sample<'_>> {
    batch
        .iter()
        .map(|e| Sample {
            input: &e.input,
            active: e.active,
            opponent: e.opponent,
        })
        .collect()
}

fn two_mut(v: &mut [Vec<f64>], i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
    assert!(i < j);
    let (lo, hi) = v.split_at_mut(j);
    (&mut lo[i], &mut hi[0])
}
