//! Ground-truth machinery: sparse mixtures, brute-force recovery, Monte Carlo
//! unbiasedness runs, bias measurement and norm histograms.

mod montecarlo;
mod recovery;

pub use montecarlo::{mc_unbiasedness, mc_unbiasedness_with_regime, McResult, NormRegime};
pub use recovery::{solve_l0_bruteforce, RecoveryResult, RECOVERY_MAX_SUPPORT, RECOVERY_MAX_VOCAB};

use std::collections::BTreeMap;

use serde::Serialize;

use crate::embedding::{EmbVector, EmbeddingMatrix, NORM_EPS};
use crate::error::{Error, Result};
use crate::heads::{score, HeadKind};
use crate::vecmath::{axpy, norm};

/// Tolerance on `sum(weights) == 1`.
pub const ALPHA_SUM_TOL: f64 = 1e-12;

/// A sparse, strictly positive, ℓ1-normalized weight vector over token ids.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaDistribution {
    entries: BTreeMap<usize, f64>,
}

impl AlphaDistribution {
    pub fn new(entries: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (id, weight) in entries {
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "weight for id {id} must be positive and finite, got {weight}"
                )));
            }
            if map.insert(id, weight).is_some() {
                return Err(Error::InvalidDistribution(format!("duplicate id {id}")));
            }
        }
        if map.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        let total: f64 = map.values().sum();
        if (total - 1.0).abs() > ALPHA_SUM_TOL {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}, not 1")));
        }
        Ok(AlphaDistribution { entries: map })
    }

    /// Rescales positive weights to sum to one before validating.
    pub fn normalized(entries: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let raw: Vec<(usize, f64)> = entries.into_iter().collect();
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidDistribution(format!("cannot normalize total {total}")));
        }
        Self::new(raw.into_iter().map(|(i, w)| (i, w / total)))
    }

    /// `δ_k`.
    pub fn point(k: usize) -> Self {
        AlphaDistribution { entries: BTreeMap::from([(k, 1.0)]) }
    }

    /// Mass `peak` on `k`, the rest spread uniformly over the other `vocab_size - 1` ids.
    pub fn peaked(vocab_size: usize, k: usize, peak: f64) -> Result<Self> {
        if vocab_size < 2 || k >= vocab_size || !(peak > 0.0 && peak < 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "peaked(V={vocab_size}, k={k}, peak={peak})"
            )));
        }
        let rest = (1.0 - peak) / (vocab_size - 1) as f64;
        Self::new((0..vocab_size).map(|i| (i, if i == k { peak } else { rest })))
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn support(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    pub fn get(&self, id: usize) -> f64 {
        self.entries.get(&id).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().map(|(&i, &w)| (i, w))
    }

    /// Heaviest id (lowest id on ties).
    pub fn target(&self) -> (usize, f64) {
        self.iter()
            .fold(None, |best: Option<(usize, f64)>, (i, w)| match best {
                Some((_, bw)) if bw >= w => best,
                _ => Some((i, w)),
            })
            .expect("distribution is never empty")
    }

    pub fn max_id(&self) -> usize {
        *self.entries.keys().next_back().expect("distribution is never empty")
    }

    /// `max_i |α_i - β_i|` over the union of supports.
    pub fn max_abs_diff(&self, other: &AlphaDistribution) -> f64 {
        self.entries
            .keys()
            .chain(other.entries.keys())
            .map(|&i| (self.get(i) - other.get(i)).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_ids(&self, vocab_size: usize) -> Result<()> {
        let max = self.max_id();
        if max >= vocab_size {
            return Err(Error::TokenOutOfRange { id: max, vocab_size });
        }
        Ok(())
    }
}

/// `h = Σ α_i w_i`, using unit columns `w_i / ‖w_i‖` when `normalized_columns` is set.
pub fn synthesize_h(
    w: &EmbeddingMatrix,
    alpha: &AlphaDistribution,
    normalized_columns: bool,
) -> Result<EmbVector> {
    alpha.check_ids(w.vocab_size())?;
    let mut h = vec![0.0; w.dim()];
    for (i, a) in alpha.iter() {
        let col = w.col(i);
        let scale = if normalized_columns { a / norm(col).max(NORM_EPS) } else { a };
        axpy(scale, col, &mut h);
    }
    EmbVector::new(h)
}

/// Score of token `k` when `h = w_k`, i.e. the head's estimate of `α_k = 1`.
pub fn measure_bias(w: &EmbeddingMatrix, k: usize, kind: HeadKind) -> Result<f64> {
    let h = w.column(k)?;
    Ok(score(w, &h, kind)?.values()[k])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_lower: f64,
    pub bin_upper: f64,
    pub count: usize,
}

/// Relative spread below which all values are treated as one point.
const DEGENERATE_SPREAD: f64 = 1e-9;

/// Equal-width histogram over `[min, max]` of `values`; the last bin is right-closed.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if values.is_empty() {
        return Err(Error::Config("histogram of no values".into()));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = max - min <= DEGENERATE_SPREAD * max.abs().max(1.0);
    let width = (max - min) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|j| HistogramBin {
            bin_lower: min + j as f64 * width,
            bin_upper: if j + 1 == bins { max } else { min + (j + 1) as f64 * width },
            count: 0,
        })
        .collect();
    for &v in values {
        let idx = if degenerate {
            0
        } else {
            (((v - min) / width) as usize).min(bins - 1)
        };
        out[idx].count += 1;
    }
    Ok(out)
}

/// Histogram of the column norms of `W`.
pub fn norm_histogram(w: &EmbeddingMatrix, bins: usize) -> Result<Vec<HistogramBin>> {
    histogram(&w.column_norms(), bins)
}

/// `bin_lower,bin_upper,count` with a header row.
pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("bin_lower,bin_upper,count\n");
    for b in bins {
        out.push_str(&format!("{:e},{:e},{}\n", b.bin_lower, b.bin_upper, b.count));
    }
    out
}
