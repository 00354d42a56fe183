//! Vocabulary and the shared `D x V` embedding matrix.
//!
//! The matrix is stored column-major: column `i` is the embedding `w_i` of
//! token `i` and occupies one contiguous slice. Normalization is always
//! computed on the fly from the raw stored values; nothing in this crate
//! rewrites the matrix in normalized form.

pub(crate) mod format;

pub use format::{read_emb1, read_emb1_prefix, write_emb1, Emb1Prefix};

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;
use crate::vecmath;

/// Floor applied to every norm (and squared norm) used as a denominator.
pub const NORM_EPS: f64 = 1e-12;

/// Bijection between token strings and dense ids `0..V`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 {
            return Err(Error::InvalidVocab(format!(
                "need at least 2 tokens, got {}",
                tokens.len()
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::InvalidVocab(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    /// `<bos>`, `<pad>`, then `t2 .. t{V-1}`.
    pub fn synthetic(vocab_size: usize) -> Result<Self> {
        let tokens = (0..vocab_size)
            .map(|i| match i {
                0 => "<bos>".to_string(),
                1 => "<pad>".to_string(),
                _ => format!("t{i}"),
            })
            .collect();
        Vocab::new(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// A length-`D` real vector (an input embedding `e` or a decoder output `h`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbVector(Vec<f64>);

impl EmbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding vector"));
        }
        Ok(EmbVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        EmbVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, c: f64) -> EmbVector {
        EmbVector(self.0.iter().map(|v| v * c).collect())
    }

    pub fn norm(&self) -> f64 {
        vecmath::norm(&self.0)
    }
}

impl From<EmbVector> for Vec<f64> {
    fn from(v: EmbVector) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// i.i.d. entries from `N(0, 1/D)`.
    Gaussian,
    /// Each column uniform on the unit sphere (Gaussian draw, then normalized).
    Sphere,
}

/// The shared `D x V` matrix `W`, column `i` being the embedding of token `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Vec<f64>,
    dim: usize,
    vocab_size: usize,
}

fn check_shape(dim: usize, vocab_size: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidDimensions("embedding dimension D must be >= 1".into()));
    }
    if vocab_size < 2 {
        return Err(Error::InvalidDimensions(format!(
            "vocabulary size V must be >= 2, got {vocab_size}"
        )));
    }
    Ok(())
}

impl EmbeddingMatrix {
    /// Builds a matrix from column-major storage (`data[i * dim + d]` is entry `d` of `w_i`).
    pub fn from_column_major(dim: usize, vocab_size: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(dim, vocab_size)?;
        if data.len() != dim * vocab_size {
            return Err(Error::DimensionMismatch {
                expected: dim * vocab_size,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding matrix"));
        }
        Ok(EmbeddingMatrix { data, dim, vocab_size })
    }

    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let dim = columns.first().map_or(0, |c| c.as_ref().len());
        let mut data = Vec::with_capacity(dim * columns.len());
        for c in columns {
            let c = c.as_ref();
            if c.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: c.len() });
            }
            data.extend_from_slice(c);
        }
        Self::from_column_major(dim, columns.len(), data)
    }

    /// The `n x n` identity (`n >= 2`).
    pub fn identity(n: usize) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::from_column_major(n, n, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable raw storage. Callers must keep every entry finite.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn check_id(&self, id: usize) -> Result<()> {
        if id >= self.vocab_size {
            return Err(Error::TokenOutOfRange { id, vocab_size: self.vocab_size });
        }
        Ok(())
    }

    /// Borrowed view of column `i`. Panics if `i >= V`.
    #[inline]
    pub fn col(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn col_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Copy of column `i`.
    pub fn column(&self, i: usize) -> Result<EmbVector> {
        self.check_id(i)?;
        Ok(EmbVector(self.col(i).to_vec()))
    }

    /// Input embedding lookup `e = W x` for the one-hot `x` of token `i`,
    /// optionally divided by `max(||w_i||, NORM_EPS)`.
    pub fn embed(&self, i: usize, normalized: bool) -> Result<EmbVector> {
        self.check_id(i)?;
        let w = self.col(i);
        if !normalized {
            return Ok(EmbVector(w.to_vec()));
        }
        let inv = 1.0 / vecmath::norm(w).max(NORM_EPS);
        Ok(EmbVector(w.iter().map(|v| v * inv).collect()))
    }

    /// `||w_i||_2` for every column, in one pass over the storage.
    pub fn column_norms(&self) -> Vec<f64> {
        self.columns().map(vecmath::norm).collect()
    }

    /// Multiplies column `i` by `c`.
    pub fn scale_column(&mut self, i: usize, c: f64) {
        self.col_mut(i).iter_mut().for_each(|v| *v *= c);
    }

    /// Multiplies every entry by `c`.
    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }
}

/// Random initialization, deterministic in `(dim, vocab_size, scheme, seed)`.
pub fn init_random(
    dim: usize,
    vocab_size: usize,
    scheme: InitScheme,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    check_shape(dim, vocab_size)?;
    let mut rng = rng::stream(seed, "embedding-init", 0);
    let mut data = Vec::with_capacity(dim * vocab_size);
    match scheme {
        InitScheme::Gaussian => {
            let sd = 1.0 / (dim as f64).sqrt();
            data.extend((0..dim * vocab_size).map(|_| sd * rng.sample::<f64, _>(StandardNormal)));
        }
        InitScheme::Sphere => {
            for _ in 0..vocab_size {
                data.extend(sample_unit_sphere(&mut rng, dim));
            }
        }
    }
    EmbeddingMatrix::from_column_major(dim, vocab_size, data)
}

/// Uniform sample on the unit sphere in `R^dim`.
pub fn sample_unit_sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = vecmath::norm(&v);
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}
