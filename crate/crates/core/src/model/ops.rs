//! Elementwise and normalization kernels with their derivatives.

use ndarray::Array2;

use crate::chess::Square;

pub(crate) const NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation. Smooth everywhere, which keeps finite
/// differences honest.
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub(crate) fn gelu_map(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(gelu)
}

/// `d * gelu'(pre)`, elementwise.
pub(crate) fn gelu_back(d: &Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    let mut out = d.clone();
    out.zip_mut_with(pre, |g, &x| *g *= gelu_grad(x));
    out
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable binary cross-entropy on a logit.
pub(crate) fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Softmax in place; returns log-sum-exp of the input.
pub(crate) fn softmax_in_place(v: &mut [f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
    m + sum.ln()
}

/// Normalizes one segment; writes `xhat` and returns `1/sqrt(var + eps)`.
fn normalize(x: &[f64], xhat: &mut [f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + NORM_EPS).sqrt();
    for (h, v) in xhat.iter_mut().zip(x) {
        *h = (v - mean) * inv;
    }
    inv
}

/// Backward through `xhat = normalize(x)` given `dxhat`, written into `dx`.
fn normalize_back(dxhat: &[f64], xhat: &[f64], inv: f64, dx: &mut [f64]) {
    let n = dxhat.len() as f64;
    let s1: f64 = dxhat.iter().sum();
    let s2: f64 = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum();
    for i in 0..dxhat.len() {
        dx[i] = inv / n * (n * dxhat[i] - s1 - xhat[i] * s2);
    }
}

pub(crate) struct NormCache {
    pub xhat: Array2<f64>,
    pub inv: Vec<f64>,
}

/// Per-channel, per-example normalization over the 64 squares.
/// `x` is `[channels, batch*64]`.
pub(crate) fn instance_norm(x: &Array2<f64>, gamma: &[f64], beta: &[f64]) -> (Array2<f64>, NormCache) {
    let (c, cols) = x.dim();
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let mut xhat = vec![0.0; c * cols];
    let mut inv = Vec::with_capacity(c * cols / 64);
    for (seg, out) in xs.chunks(64).zip(xhat.chunks_mut(64)) {
        inv.push(normalize(seg, out));
    }
    let xhat = Array2::from_shape_vec((c, cols), xhat).expect("shape");
    let mut y = xhat.clone();
    for (ch, mut row) in y.rows_mut().into_iter().enumerate() {
        row.mapv_inplace(|h| gamma[ch] * h + beta[ch]);
    }
    (y, NormCache { xhat, inv })
}

pub(crate) fn instance_norm_back(
    dy: &Array2<f64>,
    cache: &NormCache,
    gamma: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Array2<f64> {
    let (c, cols) = dy.dim();
    let dy = dy.as_standard_layout();
    let dys = dy.as_slice().expect("standard layout");
    let xh = cache.xhat.as_slice().expect("standard layout");
    let mut dx = vec![0.0; c * cols];
    let mut dxhat = [0.0; 64];
    let per_row = cols / 64;
    for (s, ((dseg, hseg), out)) in dys.chunks(64).zip(xh.chunks(64)).zip(dx.chunks_mut(64)).enumerate() {
        let ch = s / per_row;
        for i in 0..64 {
            dgamma[ch] += dseg[i] * hseg[i];
            dbeta[ch] += dseg[i];
            dxhat[i] = dseg[i] * gamma[ch];
        }
        normalize_back(&dxhat, hseg, cache.inv[s], out);
    }
    Array2::from_shape_vec((c, cols), dx).expect("shape")
}

/// Per-row normalization with per-column affine. `x` is `[rows, d]`.
pub(crate) fn layer_norm(x: &Array2<f64>, gamma: &[f64], beta: &[f64]) -> (Array2<f64>, NormCache) {
    let (r, d) = x.dim();
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let mut xhat = vec![0.0; r * d];
    let mut inv = Vec::with_capacity(r);
    for (seg, out) in xs.chunks(d).zip(xhat.chunks_mut(d)) {
        inv.push(normalize(seg, out));
    }
    let xhat = Array2::from_shape_vec((r, d), xhat).expect("shape");
    let mut y = xhat.clone();
    for mut row in y.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = gamma[j] * *v + beta[j];
        }
    }
    (y, NormCache { xhat, inv })
}

pub(crate) fn layer_norm_back(
    dy: &Array2<f64>,
    cache: &NormCache,
    gamma: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Array2<f64> {
    let (r, d) = dy.dim();
    let dy = dy.as_standard_layout();
    let dys = dy.as_slice().expect("standard layout");
    let xh = cache.xhat.as_slice().expect("standard layout");
    let mut dx = vec![0.0; r * d];
    let mut dxhat = vec![0.0; d];
    for (row, ((dseg, hseg), out)) in dys.chunks(d).zip(xh.chunks(d)).zip(dx.chunks_mut(d)).enumerate() {
        for j in 0..d {
            dgamma[j] += dseg[j] * hseg[j];
            dbeta[j] += dseg[j];
            dxhat[j] = dseg[j] * gamma[j];
        }
        normalize_back(&dxhat, hseg, cache.inv[row], out);
    }
    Array2::from_shape_vec((r, d), dx).expect("shape")
}

/// For each square, the 3x3 neighbourhood in kernel order
/// `(dr + 1) * 3 + (df + 1)`; `None` where the kernel hangs off the board.
pub(crate) fn neighbor_table() -> [[Option<u8>; 9]; 64] {
    let mut t = [[None; 9]; 64];
    for sq in Square::all() {
        for dr in -1..=1i8 {
            for df in -1..=1i8 {
                let k = ((dr + 1) * 3 + (df + 1)) as usize;
                t[sq.index()][k] = sq.offset(df, dr).map(|s| s.index() as u8);
            }
        }
    }
    t
}

/// Unfolds `[c, batch*64]` into `[c*9, batch*64]` for a 3x3 same-padded convolution.
pub(crate) fn im2col(x: &Array2<f64>, nbr: &[[Option<u8>; 9]; 64]) -> Array2<f64> {
    let (c, cols) = x.dim();
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let batch = cols / 64;
    let mut out = vec![0.0; c * 9 * cols];
    for ch in 0..c {
        let src = &xs[ch * cols..(ch + 1) * cols];
        for k in 0..9 {
            let dst = &mut out[(ch * 9 + k) * cols..(ch * 9 + k + 1) * cols];
            for b in 0..batch {
                for sq in 0..64 {
                    if let Some(n) = nbr[sq][k] {
                        dst[b * 64 + sq] = src[b * 64 + n as usize];
                    }
                }
            }
        }
    }
    Array2::from_shape_vec((c * 9, cols), out).expect("shape")
}

/// Adjoint of [`im2col`].
pub(crate) fn col2im(d: &Array2<f64>, nbr: &[[Option<u8>; 9]; 64]) -> Array2<f64> {
    let (rows, cols) = d.dim();
    let c = rows / 9;
    let d = d.as_standard_layout();
    let ds = d.as_slice().expect("standard layout");
    let batch = cols / 64;
    let mut out = vec![0.0; c * cols];
    for ch in 0..c {
        let dst = &mut out[ch * cols..(ch + 1) * cols];
        for k in 0..9 {
            let src = &ds[(ch * 9 + k) * cols..(ch * 9 + k + 1) * cols];
            for b in 0..batch {
                for sq in 0..64 {
                    if let Some(n) = nbr[sq][k] {
                        dst[b * 64 + n as usize] += src[b * 64 + sq];
                    }
                }
            }
        }
    }
    Array2::from_shape_vec((c, cols), out).expect("shape")
}
