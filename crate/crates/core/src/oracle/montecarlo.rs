//! Monte Carlo estimate of `E[score_k]` under sphere-uniform embedding columns.

use rand::Rng;
use serde::Serialize;

use super::AlphaDistribution;
use crate::embedding::{sample_unit_sphere, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::heads::{score_into, HeadKind};
use crate::rng;

pub const MC_MIN_TRIALS: usize = 1000;

/// How column norms are drawn in each trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormRegime {
    /// Every column has norm 1.
    Unit,
    /// Each column's norm is `exp(U(ln lo, ln hi))`, drawn independently per trial.
    LogUniform { lo: f64, hi: f64 },
}

impl NormRegime {
    pub const DEFAULT_SPREAD: NormRegime = NormRegime::LogUniform { lo: 0.5, hi: 2.0 };

    /// Unit columns for the normalized heads, log-uniform `[0.5, 2]` norms otherwise.
    pub fn for_kind(kind: HeadKind) -> Self {
        match kind {
            HeadKind::L2NormInput | HeadKind::Cosine => NormRegime::Unit,
            HeadKind::Baseline | HeadKind::SqNormOutput | HeadKind::Distance => {
                NormRegime::DEFAULT_SPREAD
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResult {
    pub kind: HeadKind,
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(rename = "V")]
    pub vocab_size: usize,
    pub trials: usize,
    pub seed: u64,
    pub mean: f64,
    pub stderr: f64,
    pub target_alpha: f64,
}

impl McResult {
    /// `|mean - α_k|` in units of the standard error.
    pub fn z_score(&self) -> f64 {
        (self.mean - self.target_alpha).abs() / self.stderr
    }
}

/// Runs [`mc_unbiasedness_with_regime`] with the kind's default norm regime.
pub fn mc_unbiasedness(
    dim: usize,
    vocab_size: usize,
    alpha: &AlphaDistribution,
    kind: HeadKind,
    trials: usize,
    seed: u64,
) -> Result<McResult> {
    mc_unbiasedness_with_regime(dim, vocab_size, alpha, kind, trials, seed, NormRegime::for_kind(kind))
}

/// Each trial draws fresh sphere-uniform columns (rescaled per `regime`),
/// forms `h = W α` from them and records `score_k(W, h)` for the heaviest
/// token `k` of `alpha`. Trial `t` uses the stream `(seed, "mc", t)`, and the
/// draws do not depend on `kind`, so runs with equal seeds are paired.
pub fn mc_unbiasedness_with_regime(
    dim: usize,
    vocab_size: usize,
    alpha: &AlphaDistribution,
    kind: HeadKind,
    trials: usize,
    seed: u64,
    regime: NormRegime,
) -> Result<McResult> {
    if trials < MC_MIN_TRIALS {
        return Err(Error::Config(format!("need at least {MC_MIN_TRIALS} trials, got {trials}")));
    }
    if dim == 0 || vocab_size < 2 {
        return Err(Error::InvalidDimensions(format!("D={dim} V={vocab_size}")));
    }
    if let NormRegime::LogUniform { lo, hi } = regime {
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config(format!("bad norm range [{lo}, {hi}]")));
        }
    }
    alpha.check_ids(vocab_size)?;
    let (k, target_alpha) = alpha.target();

    let mut w = EmbeddingMatrix::from_column_major(dim, vocab_size, vec![0.0; dim * vocab_size])?;
    let mut h = vec![0.0; dim];
    let mut scores = vec![0.0; vocab_size];
    let mut samples = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = rng::stream(seed, "mc", t as u64);
        for i in 0..vocab_size {
            let col = sample_unit_sphere(&mut rng, dim);
            w.col_mut(i).copy_from_slice(&col);
        }
        if let NormRegime::LogUniform { lo, hi } = regime {
            let (a, b) = (lo.ln(), hi.ln());
            for i in 0..vocab_size {
                let r = if a == b { lo } else { rng.random_range(a..b).exp() };
                w.scale_column(i, r);
            }
        }
        h.iter_mut().for_each(|v| *v = 0.0);
        for (i, a) in alpha.iter() {
            crate::vecmath::axpy(a, w.col(i), &mut h);
        }
        score_into(&w, &h, kind, &mut scores);
        samples.push(scores[k]);
    }

    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McResult {
        kind,
        dim,
        vocab_size,
        trials,
        seed,
        mean,
        stderr: (var / n).sqrt(),
        target_alpha,
    })
}
