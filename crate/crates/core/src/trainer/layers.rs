//! Layer primitives with explicit backward passes.
//!
//! Sequences are row-major `len x width` buffers. Backward functions
//! accumulate parameter gradients into a matching parameter struct and
//! return the gradient with respect to their input.

use rand::Rng;

use crate::vecmath::{axpy, dot};

const LN_EPS: f64 = 1e-5;

/// Row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Xavier-uniform initialization.
    pub fn xavier<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        Matrix { rows, cols, data: (0..rows * cols).map(|_| rng.random_range(-a..a)).collect() }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `Y = X Wᵀ` for `X` of shape `len x cols`.
    pub fn apply(&self, x: &[f64], len: usize) -> Vec<f64> {
        let mut y = vec![0.0; len * self.rows];
        for t in 0..len {
            let xt = &x[t * self.cols..(t + 1) * self.cols];
            for (o, yo) in y[t * self.rows..(t + 1) * self.rows].iter_mut().enumerate() {
                *yo = dot(self.row(o), xt);
            }
        }
        y
    }

    /// Given `dY`, accumulates `dW += dYᵀ X` into `grad` and returns `dX = dY W`.
    pub fn apply_backward(&self, x: &[f64], dy: &[f64], len: usize, grad: &mut Matrix) -> Vec<f64> {
        let mut dx = vec![0.0; len * self.cols];
        for t in 0..len {
            let xt = &x[t * self.cols..(t + 1) * self.cols];
            let dxt = &mut dx[t * self.cols..(t + 1) * self.cols];
            for o in 0..self.rows {
                let g = dy[t * self.rows + o];
                if g != 0.0 {
                    axpy(g, self.row(o), dxt);
                    axpy(g, xt, grad.row_mut(o));
                }
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

pub struct LayerNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        LayerNorm { gain: vec![1.0; width], bias: vec![0.0; width] }
    }

    pub fn zeros(width: usize) -> Self {
        LayerNorm { gain: vec![0.0; width], bias: vec![0.0; width] }
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, LayerNormCache) {
        let width = self.gain.len();
        let len = x.len() / width;
        let mut y = vec![0.0; x.len()];
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = Vec::with_capacity(len);
        for t in 0..len {
            let row = &x[t * width..(t + 1) * width];
            let mean = row.iter().sum::<f64>() / width as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / width as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(inv);
            for d in 0..width {
                let xh = (row[d] - mean) * inv;
                xhat[t * width + d] = xh;
                y[t * width + d] = xh * self.gain[d] + self.bias[d];
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, dy: &[f64], cache: &LayerNormCache, grad: &mut LayerNorm) -> Vec<f64> {
        let width = self.gain.len();
        let n = width as f64;
        let mut dx = vec![0.0; dy.len()];
        let mut dxhat = vec![0.0; width];
        for (t, &inv) in cache.inv_std.iter().enumerate() {
            let xh = &cache.xhat[t * width..(t + 1) * width];
            let g = &dy[t * width..(t + 1) * width];
            for d in 0..width {
                grad.gain[d] += g[d] * xh[d];
                grad.bias[d] += g[d];
                dxhat[d] = g[d] * self.gain[d];
            }
            let mean_dxhat = dxhat.iter().sum::<f64>() / n;
            let mean_dxhat_xhat = dot(&dxhat, xh) / n;
            for d in 0..width {
                dx[t * width + d] = inv * (dxhat[d] - mean_dxhat - xh[d] * mean_dxhat_xhat);
            }
        }
        dx
    }
}

fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    x.iter_mut().for_each(|v| *v /= total);
}

/// Single-head scaled dot-product attention with output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
}

pub struct AttentionCache {
    q_in: Vec<f64>,
    kv_in: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    mixed: Vec<f64>,
    q_len: usize,
    kv_len: usize,
}

impl Attention {
    pub fn new<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Attention {
            wq: Matrix::xavier(dim, dim, rng),
            wk: Matrix::xavier(dim, dim, rng),
            wv: Matrix::xavier(dim, dim, rng),
            wo: Matrix::xavier(dim, dim, rng),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Attention {
            wq: Matrix::zeros(dim, dim),
            wk: Matrix::zeros(dim, dim),
            wv: Matrix::zeros(dim, dim),
            wo: Matrix::zeros(dim, dim),
        }
    }

    /// Queries from `q_in` (`q_len` rows) attend over `kv_in` (`kv_len` rows).
    /// With `causal`, query `t` only sees keys `0..=t`.
    pub fn forward(
        &self,
        q_in: &[f64],
        kv_in: &[f64],
        q_len: usize,
        kv_len: usize,
        causal: bool,
    ) -> (Vec<f64>, AttentionCache) {
        let dim = self.wq.rows;
        let scale = 1.0 / (dim as f64).sqrt();
        let q = self.wq.apply(q_in, q_len);
        let k = self.wk.apply(kv_in, kv_len);
        let v = self.wv.apply(kv_in, kv_len);
        let mut probs = vec![0.0; q_len * kv_len];
        let mut mixed = vec![0.0; q_len * dim];
        for t in 0..q_len {
            let qt = &q[t * dim..(t + 1) * dim];
            let visible = if causal { (t + 1).min(kv_len) } else { kv_len };
            let p = &mut probs[t * kv_len..t * kv_len + visible];
            for (s, ps) in p.iter_mut().enumerate() {
                *ps = scale * dot(qt, &k[s * dim..(s + 1) * dim]);
            }
            softmax_in_place(p);
            let mt = &mut mixed[t * dim..(t + 1) * dim];
            for (s, &ps) in p.iter().enumerate() {
                axpy(ps, &v[s * dim..(s + 1) * dim], mt);
            }
        }
        let out = self.wo.apply(&mixed, q_len);
        let cache = AttentionCache {
            q_in: q_in.to_vec(),
            kv_in: kv_in.to_vec(),
            q,
            k,
            v,
            probs,
            mixed,
            q_len,
            kv_len,
        };
        (out, cache)
    }

    /// Returns `(d q_in, d kv_in)`.
    pub fn backward(
        &self,
        d_out: &[f64],
        c: &AttentionCache,
        grad: &mut Attention,
    ) -> (Vec<f64>, Vec<f64>) {
        let dim = self.wq.rows;
        let scale = 1.0 / (dim as f64).sqrt();
        let (q_len, kv_len) = (c.q_len, c.kv_len);
        let d_mixed = self.wo.apply_backward(&c.mixed, d_out, q_len, &mut grad.wo);

        let mut dq = vec![0.0; q_len * dim];
        let mut dk = vec![0.0; kv_len * dim];
        let mut dv = vec![0.0; kv_len * dim];
        let mut dp = vec![0.0; kv_len];
        for t in 0..q_len {
            let dmt = &d_mixed[t * dim..(t + 1) * dim];
            let p = &c.probs[t * kv_len..(t + 1) * kv_len];
            for s in 0..kv_len {
                dp[s] = dot(dmt, &c.v[s * dim..(s + 1) * dim]);
                if p[s] != 0.0 {
                    axpy(p[s], dmt, &mut dv[s * dim..(s + 1) * dim]);
                }
            }
            let weighted = dot(&dp, p);
            let qt = &c.q[t * dim..(t + 1) * dim];
            for s in 0..kv_len {
                let ds = p[s] * (dp[s] - weighted) * scale;
                if ds != 0.0 {
                    axpy(ds, &c.k[s * dim..(s + 1) * dim], &mut dq[t * dim..(t + 1) * dim]);
                    axpy(ds, qt, &mut dk[s * dim..(s + 1) * dim]);
                }
            }
        }
        let dq_in = self.wq.apply_backward(&c.q_in, &dq, q_len, &mut grad.wq);
        let mut dkv_in = self.wk.apply_backward(&c.kv_in, &dk, kv_len, &mut grad.wk);
        let dkv_v = self.wv.apply_backward(&c.kv_in, &dv, kv_len, &mut grad.wv);
        dkv_in.iter_mut().zip(&dkv_v).for_each(|(a, b)| *a += b);
        (dq_in, dkv_in)
    }
}

/// `W2 gelu(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

pub struct FeedForwardCache {
    x: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    len: usize,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let th = u.tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

impl FeedForward {
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        FeedForward {
            w1: Matrix::xavier(hidden, dim, rng),
            b1: vec![0.0; hidden],
            w2: Matrix::xavier(dim, hidden, rng),
            b2: vec![0.0; dim],
        }
    }

    pub fn zeros(dim: usize, hidden: usize) -> Self {
        FeedForward {
            w1: Matrix::zeros(hidden, dim),
            b1: vec![0.0; hidden],
            w2: Matrix::zeros(dim, hidden),
            b2: vec![0.0; dim],
        }
    }

    pub fn forward(&self, x: &[f64], len: usize) -> (Vec<f64>, FeedForwardCache) {
        let hidden = self.w1.rows;
        let mut pre = self.w1.apply(x, len);
        for row in pre.chunks_exact_mut(hidden) {
            row.iter_mut().zip(&self.b1).for_each(|(p, b)| *p += b);
        }
        let act: Vec<f64> = pre.iter().map(|&p| gelu(p)).collect();
        let mut y = self.w2.apply(&act, len);
        for row in y.chunks_exact_mut(self.w2.rows) {
            row.iter_mut().zip(&self.b2).for_each(|(p, b)| *p += b);
        }
        (y, FeedForwardCache { x: x.to_vec(), pre, act, len })
    }

    pub fn backward(&self, dy: &[f64], c: &FeedForwardCache, grad: &mut FeedForward) -> Vec<f64> {
        for row in dy.chunks_exact(self.w2.rows) {
            grad.b2.iter_mut().zip(row).for_each(|(g, d)| *g += d);
        }
        let mut d_act = self.w2.apply_backward(&c.act, dy, c.len, &mut grad.w2);
        d_act.iter_mut().zip(&c.pre).for_each(|(d, &p)| *d *= gelu_grad(p));
        for row in d_act.chunks_exact(self.w1.rows) {
            grad.b1.iter_mut().zip(row).for_each(|(g, d)| *g += d);
        }
        self.w1.apply_backward(&c.x, &d_act, c.len, &mut grad.w1)
    }
}

/// Fixed sinusoidal position encodings for positions `0..len`.
pub fn sinusoidal_positions(len: usize, dim: usize) -> Vec<f64> {
    let mut pe = vec![0.0; len * dim];
    for pos in 0..len {
        for i in 0..dim {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / dim as f64);
            pe[pos * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}
