//! A small pre-LN encoder-decoder transformer whose input lookups and output
//! head share one embedding matrix.
//!
//! Token lookups are scaled by `sqrt(D)` before fixed sinusoidal positions
//! are added. Under [`HeadKind::L2NormInput`] the lookups use unit-normalized
//! columns; every other kind uses the raw columns. There is no trainable
//! output bias: the head kind alone determines the output layer.

use serde::{Deserialize, Serialize};

use super::layers::{
    sinusoidal_positions, Attention, AttentionCache, FeedForward, FeedForwardCache, LayerNorm,
    LayerNormCache,
};
use super::loss;
use super::tasks::{TaskBatch, BOS};
use crate::embedding::{init_random, EmbeddingMatrix, InitScheme, NORM_EPS};
use crate::error::{Error, Result};
use crate::heads::{argmax_token, score_backward, score_into, HeadKind, ScoreVector};
use crate::rng;
use crate::vecmath::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub dim: usize,
    pub vocab_size: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub ffn_dim: usize,
}

impl ModelShape {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.ffn_dim == 0 {
            return Err(Error::Config("dim and ffn_dim must be positive".into()));
        }
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return Err(Error::Config("need at least one encoder and one decoder layer".into()));
        }
        if self.vocab_size < 3 {
            return Err(Error::Config(format!(
                "vocabulary size must be at least 3, got {}",
                self.vocab_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub ln_attn: LayerNorm,
    pub attn: Attention,
    pub ln_ffn: LayerNorm,
    pub ffn: FeedForward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderBlock {
    pub ln_self: LayerNorm,
    pub self_attn: Attention,
    pub ln_cross: LayerNorm,
    pub cross_attn: Attention,
    pub ln_ffn: LayerNorm,
    pub ffn: FeedForward,
}

/// Every trainable tensor. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// The tied matrix: encoder lookup, decoder lookup and output head.
    pub embedding: EmbeddingMatrix,
    pub encoder: Vec<EncoderBlock>,
    pub enc_norm: LayerNorm,
    pub decoder: Vec<DecoderBlock>,
    pub dec_norm: LayerNorm,
}

type Visitor<'a> = dyn FnMut(&str, usize, usize, &[f64]) + 'a;
type VisitorMut<'a> = dyn FnMut(&str, usize, usize, &mut [f64]) + 'a;

fn visit_ln(p: &str, ln: &LayerNorm, f: &mut Visitor) {
    f(&format!("{p}.gain"), 1, ln.gain.len(), &ln.gain);
    f(&format!("{p}.bias"), 1, ln.bias.len(), &ln.bias);
}

fn visit_ln_mut(p: &str, ln: &mut LayerNorm, f: &mut VisitorMut) {
    f(&format!("{p}.gain"), 1, ln.gain.len(), &mut ln.gain);
    f(&format!("{p}.bias"), 1, ln.bias.len(), &mut ln.bias);
}

fn visit_attn(p: &str, a: &Attention, f: &mut Visitor) {
    for (n, m) in [("wq", &a.wq), ("wk", &a.wk), ("wv", &a.wv), ("wo", &a.wo)] {
        f(&format!("{p}.{n}"), m.rows, m.cols, &m.data);
    }
}

fn visit_attn_mut(p: &str, a: &mut Attention, f: &mut VisitorMut) {
    for (n, m) in [("wq", &mut a.wq), ("wk", &mut a.wk), ("wv", &mut a.wv), ("wo", &mut a.wo)] {
        f(&format!("{p}.{n}"), m.rows, m.cols, &mut m.data);
    }
}

fn visit_ffn(p: &str, x: &FeedForward, f: &mut Visitor) {
    f(&format!("{p}.w1"), x.w1.rows, x.w1.cols, &x.w1.data);
    f(&format!("{p}.b1"), 1, x.b1.len(), &x.b1);
    f(&format!("{p}.w2"), x.w2.rows, x.w2.cols, &x.w2.data);
    f(&format!("{p}.b2"), 1, x.b2.len(), &x.b2);
}

fn visit_ffn_mut(p: &str, x: &mut FeedForward, f: &mut VisitorMut) {
    f(&format!("{p}.w1"), x.w1.rows, x.w1.cols, &mut x.w1.data);
    f(&format!("{p}.b1"), 1, x.b1.len(), &mut x.b1);
    f(&format!("{p}.w2"), x.w2.rows, x.w2.cols, &mut x.w2.data);
    f(&format!("{p}.b2"), 1, x.b2.len(), &mut x.b2);
}

impl Params {
    pub fn init(shape: &ModelShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let d = shape.dim;
        let embedding = init_random(
            d,
            shape.vocab_size,
            InitScheme::Gaussian,
            rng::derive_seed(seed, "embedding", 0),
        )?;
        let mut r = rng::stream(seed, "init", 0);
        let encoder = (0..shape.enc_layers)
            .map(|_| EncoderBlock {
                ln_attn: LayerNorm::new(d),
                attn: Attention::new(d, &mut r),
                ln_ffn: LayerNorm::new(d),
                ffn: FeedForward::new(d, shape.ffn_dim, &mut r),
            })
            .collect();
        let decoder = (0..shape.dec_layers)
            .map(|_| DecoderBlock {
                ln_self: LayerNorm::new(d),
                self_attn: Attention::new(d, &mut r),
                ln_cross: LayerNorm::new(d),
                cross_attn: Attention::new(d, &mut r),
                ln_ffn: LayerNorm::new(d),
                ffn: FeedForward::new(d, shape.ffn_dim, &mut r),
            })
            .collect();
        Ok(Params {
            embedding,
            encoder,
            enc_norm: LayerNorm::new(d),
            decoder,
            dec_norm: LayerNorm::new(d),
        })
    }

    /// Same shapes, every value zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |_, _, _, v| v.iter_mut().for_each(|x| *x = 0.0));
        z
    }

    /// Visits every tensor as `(name, rows, cols, row-major values)` in a fixed order.
    /// The embedding is reported as `V x D` (one row per token).
    pub fn visit(&self, f: &mut Visitor) {
        let w = &self.embedding;
        f("embedding", w.vocab_size(), w.dim(), w.as_slice());
        for (i, b) in self.encoder.iter().enumerate() {
            visit_ln(&format!("encoder.{i}.ln_attn"), &b.ln_attn, f);
            visit_attn(&format!("encoder.{i}.attn"), &b.attn, f);
            visit_ln(&format!("encoder.{i}.ln_ffn"), &b.ln_ffn, f);
            visit_ffn(&format!("encoder.{i}.ffn"), &b.ffn, f);
        }
        visit_ln("enc_norm", &self.enc_norm, f);
        for (i, b) in self.decoder.iter().enumerate() {
            visit_ln(&format!("decoder.{i}.ln_self"), &b.ln_self, f);
            visit_attn(&format!("decoder.{i}.self_attn"), &b.self_attn, f);
            visit_ln(&format!("decoder.{i}.ln_cross"), &b.ln_cross, f);
            visit_attn(&format!("decoder.{i}.cross_attn"), &b.cross_attn, f);
            visit_ln(&format!("decoder.{i}.ln_ffn"), &b.ln_ffn, f);
            visit_ffn(&format!("decoder.{i}.ffn"), &b.ffn, f);
        }
        visit_ln("dec_norm", &self.dec_norm, f);
    }

    pub fn visit_mut(&mut self, f: &mut VisitorMut) {
        let (v, d) = (self.embedding.vocab_size(), self.embedding.dim());
        f("embedding", v, d, self.embedding.as_mut_slice());
        for (i, b) in self.encoder.iter_mut().enumerate() {
            visit_ln_mut(&format!("encoder.{i}.ln_attn"), &mut b.ln_attn, f);
            visit_attn_mut(&format!("encoder.{i}.attn"), &mut b.attn, f);
            visit_ln_mut(&format!("encoder.{i}.ln_ffn"), &mut b.ln_ffn, f);
            visit_ffn_mut(&format!("encoder.{i}.ffn"), &mut b.ffn, f);
        }
        visit_ln_mut("enc_norm", &mut self.enc_norm, f);
        for (i, b) in self.decoder.iter_mut().enumerate() {
            visit_ln_mut(&format!("decoder.{i}.ln_self"), &mut b.ln_self, f);
            visit_attn_mut(&format!("decoder.{i}.self_attn"), &mut b.self_attn, f);
            visit_ln_mut(&format!("decoder.{i}.ln_cross"), &mut b.ln_cross, f);
            visit_attn_mut(&format!("decoder.{i}.cross_attn"), &mut b.cross_attn, f);
            visit_ln_mut(&format!("decoder.{i}.ln_ffn"), &mut b.ln_ffn, f);
            visit_ffn_mut(&format!("decoder.{i}.ffn"), &mut b.ffn, f);
        }
        visit_ln_mut("dec_norm", &mut self.dec_norm, f);
    }

    pub fn num_values(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, _, v| n += v.len());
        n
    }

    /// All values concatenated in visiting order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_values());
        self.visit(&mut |_, _, _, v| out.extend_from_slice(v));
        out
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, _, _, v| ok &= v.iter().all(|x| x.is_finite()));
        ok
    }
}

/// Scores for a whole batch, `batch x seq_len x vocab`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub batch: usize,
    pub seq_len: usize,
    pub vocab: usize,
    pub data: Vec<f64>,
}

impl Logits {
    pub fn at(&self, b: usize, t: usize) -> &[f64] {
        let start = (b * self.seq_len + t) * self.vocab;
        &self.data[start..start + self.vocab]
    }

    /// Greedy token at every position, row-major `batch x seq_len`.
    pub fn argmax(&self) -> Vec<usize> {
        self.data.chunks_exact(self.vocab).map(argmax_token).collect()
    }
}

struct EncoderBlockCache {
    ln_attn: LayerNormCache,
    attn: AttentionCache,
    ln_ffn: LayerNormCache,
    ffn: FeedForwardCache,
}

struct DecoderBlockCache {
    ln_self: LayerNormCache,
    self_attn: AttentionCache,
    ln_cross: LayerNormCache,
    cross_attn: AttentionCache,
    ln_ffn: LayerNormCache,
    ffn: FeedForwardCache,
}

struct ExampleCache {
    src: Vec<usize>,
    dec_in: Vec<usize>,
    encoder: Vec<EncoderBlockCache>,
    enc_norm: LayerNormCache,
    decoder: Vec<DecoderBlockCache>,
    dec_norm: LayerNormCache,
    /// Decoder outputs `h_t`, `seq_len x D`.
    hidden: Vec<f64>,
}

/// Activations saved by [`ToyModel::forward`] for the matching backward pass.
pub struct ForwardCache {
    version: u64,
    examples: Vec<ExampleCache>,
}

impl ForwardCache {
    /// Decoder output vectors of example `b`, `seq_len x D`.
    pub fn hidden(&self, b: usize) -> &[f64] {
        &self.examples[b].hidden
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    shape: ModelShape,
    head_kind: HeadKind,
    params: Params,
    version: u64,
}

impl ToyModel {
    pub fn new(shape: ModelShape, head_kind: HeadKind, seed: u64) -> Result<Self> {
        let params = Params::init(&shape, seed)?;
        Ok(ToyModel { shape, head_kind, params, version: 0 })
    }

    pub fn from_params(shape: ModelShape, head_kind: HeadKind, params: Params) -> Result<Self> {
        shape.validate()?;
        let template = Params::init(&shape, 0)?;
        let mut layout = Vec::new();
        template.visit(&mut |n, r, c, _| layout.push((n.to_string(), r, c)));
        let mut actual = Vec::new();
        params.visit(&mut |n, r, c, _| actual.push((n.to_string(), r, c)));
        if layout != actual {
            return Err(Error::Config("parameter layout does not match model shape".into()));
        }
        Ok(ToyModel { shape, head_kind, params, version: 0 })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn head_kind(&self) -> HeadKind {
        self.head_kind
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Mutable parameters. Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut Params {
        self.version += 1;
        &mut self.params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// The tied matrix shared by both lookups and the head.
    pub fn embedding(&self) -> &EmbeddingMatrix {
        &self.params.embedding
    }

    /// Applies the output head to an arbitrary decoder vector `h`.
    pub fn head_scores(&self, h: &[f64]) -> Result<ScoreVector> {
        if h.len() != self.shape.dim {
            return Err(Error::DimensionMismatch { expected: self.shape.dim, actual: h.len() });
        }
        let mut out = vec![0.0; self.shape.vocab_size];
        score_into(&self.params.embedding, h, self.head_kind, &mut out);
        ScoreVector::new(out)
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        match tokens.iter().find(|&&t| t >= self.shape.vocab_size) {
            Some(&id) => Err(Error::TokenOutOfRange { id, vocab_size: self.shape.vocab_size }),
            None => Ok(()),
        }
    }

    fn lookup(&self, tokens: &[usize], pe: &[f64]) -> Vec<f64> {
        let d = self.shape.dim;
        let scale = (d as f64).sqrt();
        let w = &self.params.embedding;
        let normalized = self.head_kind.normalizes_lookup();
        let mut x = pe[..tokens.len() * d].to_vec();
        for (t, &tok) in tokens.iter().enumerate() {
            let col = w.col(tok);
            let s = if normalized { scale / norm(col).max(NORM_EPS) } else { scale };
            for (xi, ci) in x[t * d..(t + 1) * d].iter_mut().zip(col) {
                *xi += s * ci;
            }
        }
        x
    }

    fn lookup_backward(&self, tokens: &[usize], dx: &[f64], grad: &mut EmbeddingMatrix) {
        let d = self.shape.dim;
        let scale = (d as f64).sqrt();
        let w = &self.params.embedding;
        let normalized = self.head_kind.normalizes_lookup();
        for (t, &tok) in tokens.iter().enumerate() {
            let g = &dx[t * d..(t + 1) * d];
            let col = w.col(tok);
            let gw = grad.col_mut(tok);
            if !normalized {
                gw.iter_mut().zip(g).for_each(|(a, b)| *a += scale * b);
                continue;
            }
            let n = norm(col);
            if n > NORM_EPS {
                let ug = dot(col, g) / n;
                for k in 0..d {
                    gw[k] += scale * (g[k] - col[k] / n * ug) / n;
                }
            } else {
                gw.iter_mut().zip(g).for_each(|(a, b)| *a += scale * b / NORM_EPS);
            }
        }
    }

    fn encode(&self, src: &[usize], pe: &[f64]) -> (Vec<f64>, Vec<EncoderBlockCache>, LayerNormCache) {
        let len = src.len();
        let mut x = self.lookup(src, pe);
        let mut caches = Vec::with_capacity(self.params.encoder.len());
        for block in &self.params.encoder {
            let (a, ln_attn) = block.ln_attn.forward(&x);
            let (o, attn) = block.attn.forward(&a, &a, len, len, false);
            x.iter_mut().zip(&o).for_each(|(xi, oi)| *xi += oi);
            let (b, ln_ffn) = block.ln_ffn.forward(&x);
            let (f, ffn) = block.ffn.forward(&b, len);
            x.iter_mut().zip(&f).for_each(|(xi, fi)| *xi += fi);
            caches.push(EncoderBlockCache { ln_attn, attn, ln_ffn, ffn });
        }
        let (out, norm_cache) = self.params.enc_norm.forward(&x);
        (out, caches, norm_cache)
    }

    fn decode(
        &self,
        dec_in: &[usize],
        memory: &[f64],
        pe: &[f64],
    ) -> (Vec<f64>, Vec<DecoderBlockCache>, LayerNormCache) {
        let len = dec_in.len();
        let mem_len = memory.len() / self.shape.dim;
        let mut y = self.lookup(dec_in, pe);
        let mut caches = Vec::with_capacity(self.params.decoder.len());
        for block in &self.params.decoder {
            let (a, ln_self) = block.ln_self.forward(&y);
            let (o, self_attn) = block.self_attn.forward(&a, &a, len, len, true);
            y.iter_mut().zip(&o).for_each(|(yi, oi)| *yi += oi);
            let (c, ln_cross) = block.ln_cross.forward(&y);
            let (o, cross_attn) = block.cross_attn.forward(&c, memory, len, mem_len, false);
            y.iter_mut().zip(&o).for_each(|(yi, oi)| *yi += oi);
            let (b, ln_ffn) = block.ln_ffn.forward(&y);
            let (f, ffn) = block.ffn.forward(&b, len);
            y.iter_mut().zip(&f).for_each(|(yi, fi)| *yi += fi);
            caches.push(DecoderBlockCache { ln_self, self_attn, ln_cross, cross_attn, ln_ffn, ffn });
        }
        let (h, norm_cache) = self.params.dec_norm.forward(&y);
        (h, caches, norm_cache)
    }

    /// Teacher-forced forward pass over a batch.
    pub fn forward(&self, batch: &TaskBatch) -> Result<(Logits, ForwardCache)> {
        self.check_tokens(&batch.source)?;
        self.check_tokens(&batch.target)?;
        let (d, v, len) = (self.shape.dim, self.shape.vocab_size, batch.seq_len);
        let pe = sinusoidal_positions(len, d);
        let mut data = vec![0.0; batch.batch * len * v];
        let mut examples = Vec::with_capacity(batch.batch);
        for b in 0..batch.batch {
            let src = batch.source_row(b).to_vec();
            let dec_in = batch.decoder_input(b);
            let (memory, encoder, enc_norm) = self.encode(&src, &pe);
            let (hidden, decoder, dec_norm) = self.decode(&dec_in, &memory, &pe);
            let rows = &mut data[b * len * v..(b + 1) * len * v];
            for (h, out) in hidden.chunks_exact(d).zip(rows.chunks_exact_mut(v)) {
                score_into(&self.params.embedding, h, self.head_kind, out);
            }
            examples.push(ExampleCache { src, dec_in, encoder, enc_norm, decoder, dec_norm, hidden });
        }
        let logits = Logits { batch: batch.batch, seq_len: len, vocab: v, data };
        Ok((logits, ForwardCache { version: self.version, examples }))
    }

    /// Gradients of all parameters given `d_logits` (same layout as the logits).
    /// The embedding gradient sums its head, decoder-lookup and encoder-lookup uses.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &[f64]) -> Result<Params> {
        if cache.version != self.version {
            return Err(Error::StaleCache { model: self.version, cache: cache.version });
        }
        let (d, v) = (self.shape.dim, self.shape.vocab_size);
        let mut grad = self.params.zeros_like();
        let len = cache.examples.first().map_or(0, |e| e.dec_in.len());
        if d_logits.len() != cache.examples.len() * len * v {
            return Err(Error::DimensionMismatch {
                expected: cache.examples.len() * len * v,
                actual: d_logits.len(),
            });
        }
        for (b, ex) in cache.examples.iter().enumerate() {
            let dl = &d_logits[b * len * v..(b + 1) * len * v];
            let mut dh = vec![0.0; len * d];
            for ((h, g), dht) in ex.hidden.chunks_exact(d).zip(dl.chunks_exact(v)).zip(dh.chunks_exact_mut(d)) {
                score_backward(
                    &self.params.embedding,
                    h,
                    self.head_kind,
                    g,
                    dht,
                    grad.embedding.as_mut_slice(),
                );
            }

            // decoder
            let mut dy = self.params.dec_norm.backward(&dh, &ex.dec_norm, &mut grad.dec_norm);
            let mut d_memory = vec![0.0; ex.src.len() * d];
            for ((block, c), g) in self
                .params
                .decoder
                .iter()
                .zip(&ex.decoder)
                .zip(grad.decoder.iter_mut())
                .rev()
            {
                let db = block.ffn.backward(&dy, &c.ffn, &mut g.ffn);
                let dy2 = block.ln_ffn.backward(&db, &c.ln_ffn, &mut g.ln_ffn);
                dy.iter_mut().zip(&dy2).for_each(|(a, b)| *a += b);

                let (dc, dmem) = block.cross_attn.backward(&dy, &c.cross_attn, &mut g.cross_attn);
                d_memory.iter_mut().zip(&dmem).for_each(|(a, b)| *a += b);
                let dy1 = block.ln_cross.backward(&dc, &c.ln_cross, &mut g.ln_cross);
                dy.iter_mut().zip(&dy1).for_each(|(a, b)| *a += b);

                let (dq, dkv) = block.self_attn.backward(&dy, &c.self_attn, &mut g.self_attn);
                let da: Vec<f64> = dq.iter().zip(&dkv).map(|(a, b)| a + b).collect();
                let dy0 = block.ln_self.backward(&da, &c.ln_self, &mut g.ln_self);
                dy.iter_mut().zip(&dy0).for_each(|(a, b)| *a += b);
            }
            self.lookup_backward(&ex.dec_in, &dy, &mut grad.embedding);

            // encoder
            let mut dx = self.params.enc_norm.backward(&d_memory, &ex.enc_norm, &mut grad.enc_norm);
            for ((block, c), g) in self
                .params
                .encoder
                .iter()
                .zip(&ex.encoder)
                .zip(grad.encoder.iter_mut())
                .rev()
            {
                let db = block.ffn.backward(&dx, &c.ffn, &mut g.ffn);
                let dx1 = block.ln_ffn.backward(&db, &c.ln_ffn, &mut g.ln_ffn);
                dx.iter_mut().zip(&dx1).for_each(|(a, b)| *a += b);

                let (dq, dkv) = block.attn.backward(&dx, &c.attn, &mut g.attn);
                let da: Vec<f64> = dq.iter().zip(&dkv).map(|(a, b)| a + b).collect();
                let dx0 = block.ln_attn.backward(&da, &c.ln_attn, &mut g.ln_attn);
                dx.iter_mut().zip(&dx0).for_each(|(a, b)| *a += b);
            }
            self.lookup_backward(&ex.src, &dx, &mut grad.embedding);
        }
        Ok(grad)
    }

    /// Mean smoothed cross-entropy of the teacher-forced batch.
    pub fn batch_loss(&self, batch: &TaskBatch, label_smoothing: f64) -> Result<f64> {
        let (logits, _) = self.forward(batch)?;
        Ok(loss::mean_loss(&logits.data, &batch.target, logits.vocab, label_smoothing))
    }

    pub fn loss_and_gradients(&self, batch: &TaskBatch, label_smoothing: f64) -> Result<(f64, Params)> {
        let (logits, cache) = self.forward(batch)?;
        let (loss, d_logits) =
            loss::mean_loss_and_grad(&logits.data, &batch.target, logits.vocab, label_smoothing);
        Ok((loss, self.backward(&cache, &d_logits)?))
    }

    /// Autoregressive greedy decoding of `source`, emitting `source.len()` tokens.
    pub fn greedy_decode(&self, source: &[usize]) -> Result<Vec<usize>> {
        self.check_tokens(source)?;
        let (d, v, len) = (self.shape.dim, self.shape.vocab_size, source.len());
        let pe = sinusoidal_positions(len, d);
        let (memory, _, _) = self.encode(source, &pe);
        let mut dec_in = vec![BOS];
        let mut out = Vec::with_capacity(len);
        let mut scores = vec![0.0; v];
        for t in 0..len {
            let (h, _, _) = self.decode(&dec_in, &memory, &pe);
            score_into(&self.params.embedding, &h[t * d..(t + 1) * d], self.head_kind, &mut scores);
            let next = argmax_token(&scores);
            out.push(next);
            dec_in.push(next);
        }
        Ok(out)
    }
}
