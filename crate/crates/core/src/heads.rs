//! The five tied output scoring rules.
//!
//! Each rule maps a decoder output `h` (length `D`) to `V` scores using only
//! the shared matrix `W`:
//!
//! | kind            | `score_i`                          |
//! |-----------------|------------------------------------|
//! | `Baseline`      | `w_i . h`                          |
//! | `L2NormInput`   | `w_i . h / max(‖w_i‖, ε)`          |
//! | `SqNormOutput`  | `w_i . h / max(‖w_i‖², ε)`         |
//! | `Distance`      | `w_i . h - ½‖w_i‖²`                |
//! | `Cosine`        | `w_i . h / max(‖w_i‖, ε)`          |
//!
//! `L2NormInput` and `Cosine` agree at scoring time. They differ only in the
//! trainer, where `L2NormInput` also normalizes the input-side lookups.
//! Every rule is a single pass over `W`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbVector, EmbeddingMatrix, NORM_EPS};
use crate::error::{Error, Result};
use crate::vecmath::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    Baseline,
    #[serde(rename = "l2norm-input")]
    L2NormInput,
    #[serde(rename = "sqnorm-output")]
    SqNormOutput,
    Distance,
    Cosine,
}

impl HeadKind {
    pub const ALL: [HeadKind; 5] = [
        HeadKind::Baseline,
        HeadKind::L2NormInput,
        HeadKind::SqNormOutput,
        HeadKind::Distance,
        HeadKind::Cosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Baseline => "baseline",
            HeadKind::L2NormInput => "l2norm-input",
            HeadKind::SqNormOutput => "sqnorm-output",
            HeadKind::Distance => "distance",
            HeadKind::Cosine => "cosine",
        }
    }

    /// Whether input-side embedding lookups are ℓ2-normalized under this head.
    pub fn normalizes_lookup(self) -> bool {
        matches!(self, HeadKind::L2NormInput)
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeadKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown head kind {s:?}")))
    }
}

/// Unnormalized scores, one per vocabulary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimensions("empty score vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("score vector"));
        }
        Ok(ScoreVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax_token(&self.0)
    }
}

/// A probability vector produced by [`softmax`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn argmax(&self) -> usize {
        argmax_token(&self.0)
    }
}

#[inline]
fn norm_floor(sq: f64) -> f64 {
    sq.sqrt().max(NORM_EPS)
}

/// Writes the scores of `h` under `kind` into `out` (length `V`).
///
/// Shape checks are the caller's job; this is the kernel behind [`score`]
/// and the trainer's output layer.
pub fn score_into(w: &EmbeddingMatrix, h: &[f64], kind: HeadKind, out: &mut [f64]) {
    debug_assert_eq!(h.len(), w.dim());
    debug_assert_eq!(out.len(), w.vocab_size());
    let cols = w.columns().zip(out.iter_mut());
    match kind {
        HeadKind::Baseline => cols.for_each(|(c, o)| *o = dot(c, h)),
        HeadKind::L2NormInput | HeadKind::Cosine => cols.for_each(|(c, o)| {
            let (d, sq) = dot_and_sq(c, h);
            *o = d / norm_floor(sq);
        }),
        HeadKind::SqNormOutput => cols.for_each(|(c, o)| {
            let (d, sq) = dot_and_sq(c, h);
            *o = d / sq.max(NORM_EPS);
        }),
        HeadKind::Distance => cols.for_each(|(c, o)| {
            let (d, sq) = dot_and_sq(c, h);
            *o = d - 0.5 * sq;
        }),
    }
}

#[inline]
fn dot_and_sq(c: &[f64], h: &[f64]) -> (f64, f64) {
    c.iter()
        .zip(h)
        .fold((0.0, 0.0), |(d, s), (a, b)| (d + a * b, s + a * a))
}

/// Backpropagates `d_scores` through [`score_into`], accumulating into `d_h`
/// (length `D`) and `d_w` (column-major, same layout as `W`).
pub fn score_backward(
    w: &EmbeddingMatrix,
    h: &[f64],
    kind: HeadKind,
    d_scores: &[f64],
    d_h: &mut [f64],
    d_w: &mut [f64],
) {
    let dim = w.dim();
    for (i, (c, &g)) in w.columns().zip(d_scores).enumerate() {
        if g == 0.0 {
            continue;
        }
        let dw = &mut d_w[i * dim..(i + 1) * dim];
        match kind {
            HeadKind::Baseline => {
                for d in 0..dim {
                    d_h[d] += g * c[d];
                    dw[d] += g * h[d];
                }
            }
            HeadKind::L2NormInput | HeadKind::Cosine => {
                // s = u.h with u = w / n; ds/dw = (h - u (u.h)) / n above the floor.
                let (dt, sq) = dot_and_sq(c, h);
                let n = sq.sqrt();
                if n > NORM_EPS {
                    let s = dt / n;
                    for d in 0..dim {
                        let u = c[d] / n;
                        d_h[d] += g * u;
                        dw[d] += g * (h[d] - u * s) / n;
                    }
                } else {
                    for d in 0..dim {
                        d_h[d] += g * c[d] / NORM_EPS;
                        dw[d] += g * h[d] / NORM_EPS;
                    }
                }
            }
            HeadKind::SqNormOutput => {
                let (dt, sq) = dot_and_sq(c, h);
                if sq > NORM_EPS {
                    let coef = 2.0 * dt / (sq * sq);
                    for d in 0..dim {
                        d_h[d] += g * c[d] / sq;
                        dw[d] += g * (h[d] / sq - coef * c[d]);
                    }
                } else {
                    for d in 0..dim {
                        d_h[d] += g * c[d] / NORM_EPS;
                        dw[d] += g * h[d] / NORM_EPS;
                    }
                }
            }
            HeadKind::Distance => {
                for d in 0..dim {
                    d_h[d] += g * c[d];
                    dw[d] += g * (h[d] - c[d]);
                }
            }
        }
    }
}

fn checked(w: &EmbeddingMatrix, h: &EmbVector, kind: HeadKind) -> Result<ScoreVector> {
    if h.dim() != w.dim() {
        return Err(Error::DimensionMismatch { expected: w.dim(), actual: h.dim() });
    }
    let mut out = vec![0.0; w.vocab_size()];
    score_into(w, h.values(), kind, &mut out);
    Ok(ScoreVector(out))
}

/// Scores `h` against every column of `W` under `kind`.
pub fn score(w: &EmbeddingMatrix, h: &EmbVector, kind: HeadKind) -> Result<ScoreVector> {
    checked(w, h, kind)
}

/// `score_i = w_i . h` (`U = W`, `b = 0`).
pub fn score_baseline(w: &EmbeddingMatrix, h: &EmbVector) -> Result<ScoreVector> {
    checked(w, h, HeadKind::Baseline)
}

/// `score_i = w_i . h / ‖w_i‖`.
pub fn score_l2norm_input(w: &EmbeddingMatrix, h: &EmbVector) -> Result<ScoreVector> {
    checked(w, h, HeadKind::L2NormInput)
}

/// `score_i = w_i . h / ‖w_i‖²`.
pub fn score_sqnorm_output(w: &EmbeddingMatrix, h: &EmbVector) -> Result<ScoreVector> {
    checked(w, h, HeadKind::SqNormOutput)
}

/// `score_i = w_i . h - ½‖w_i‖²`, i.e. `-½‖h - w_i‖²` up to a constant in `i`.
pub fn score_distance(w: &EmbeddingMatrix, h: &EmbVector) -> Result<ScoreVector> {
    checked(w, h, HeadKind::Distance)
}

/// `score_i = w_i . h / ‖w_i‖`, proportional to `cos(w_i, h)`.
pub fn score_cosine(w: &EmbeddingMatrix, h: &EmbVector) -> Result<ScoreVector> {
    checked(w, h, HeadKind::Cosine)
}

/// Max-shifted softmax, written into `out`.
pub fn softmax_into(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

pub fn softmax(scores: &ScoreVector) -> ProbVector {
    let mut out = vec![0.0; scores.len()];
    softmax_into(scores.values(), &mut out);
    ProbVector(out)
}

/// Index of the largest value; ties go to the lowest index. Panics on empty input.
pub fn argmax_token(values: &[f64]) -> usize {
    assert!(!values.is_empty(), "argmax of an empty vector");
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// The `k` highest `(token id, score)` pairs, descending, ties by lower id.
/// `k` is clamped to the vocabulary size.
pub fn top_k(scores: &ScoreVector, k: usize) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = scores.values().iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k.min(scores.len()));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{init_random, InitScheme};
    use crate::vecmath;
    use proptest::prelude::*;

    fn h(v: &[f64]) -> EmbVector {
        EmbVector::new(v.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    fn cols(c: &[[f64; 2]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_columns(c).unwrap()
    }

    #[test]
    fn dispatcher_examples() {
        let id = EmbeddingMatrix::identity(4).unwrap();
        let e0 = h(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(score(&id, &e0, HeadKind::Baseline).unwrap().values(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(score(&id, &e0, HeadKind::Cosine).unwrap().values(), &[1.0, 0.0, 0.0, 0.0]);
        for kind in HeadKind::ALL {
            assert_eq!(score(&id, &e0, kind).unwrap().len(), 4);
        }
        assert!(matches!(
            score(&id, &h(&[1.0, 0.0]), HeadKind::Distance),
            Err(Error::DimensionMismatch { expected: 4, actual: 2 })
        ));
    }

    #[test]
    fn dispatcher_matches_direct_rules_bitwise() {
        let w = init_random(6, 9, InitScheme::Gaussian, 5).unwrap();
        let hv = h(&[0.3, -0.2, 1.1, 0.0, 0.7, -0.5]);
        let direct = [
            score_baseline(&w, &hv),
            score_l2norm_input(&w, &hv),
            score_sqnorm_output(&w, &hv),
            score_distance(&w, &hv),
            score_cosine(&w, &hv),
        ];
        for (kind, d) in HeadKind::ALL.into_iter().zip(direct) {
            let a = score(&w, &hv, kind).unwrap();
            let d = d.unwrap();
            assert!(a.values().iter().zip(d.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn baseline_examples() {
        let w = cols(&[[1.0, 0.0], [0.0, 2.0]]);
        assert_eq!(score_baseline(&w, &h(&[0.0, 2.0])).unwrap().values(), &[0.0, 4.0]);
        let id = EmbeddingMatrix::identity(2).unwrap();
        assert_eq!(score_baseline(&id, &h(&[0.3, 0.7])).unwrap().values(), &[0.3, 0.7]);
    }

    #[test]
    fn baseline_argmax_moves_to_scaled_neighbour() {
        // w_j = 1.5 * (0.9 w_k + 0.5 u), u ⊥ w_k: raw dot 1.35 beats ‖w_k‖² = 1.
        let mut w = init_random(32, 64, InitScheme::Sphere, 3).unwrap();
        let (k, j) = (5, 17);
        let wk = w.col(k).to_vec();
        let mut u = w.col(40).to_vec();
        let proj = vecmath::dot(&u, &wk);
        vecmath::axpy(-proj, &wk, &mut u);
        let un = vecmath::norm(&u);
        u.iter_mut().for_each(|x| *x /= un);
        let mut wj: Vec<f64> = wk.iter().zip(&u).map(|(a, b)| 0.9 * a + 0.5 * b).collect();
        let hk = h(&wk);

        w.col_mut(j).copy_from_slice(&wj);
        let s = score_baseline(&w, &hk).unwrap();
        assert!((s.values()[k] - 1.0).abs() < 1e-12);
        assert!((s.values()[j] - 0.9).abs() < 1e-12);

        wj.iter_mut().for_each(|x| *x *= 1.5);
        w.col_mut(j).copy_from_slice(&wj);
        let s = score_baseline(&w, &hk).unwrap();
        assert_eq!(s.argmax(), j);
        for kind in [HeadKind::L2NormInput, HeadKind::SqNormOutput, HeadKind::Distance, HeadKind::Cosine] {
            assert_eq!(score(&w, &hk, kind).unwrap().argmax(), k, "{kind}");
        }
    }

    #[test]
    fn l2norm_examples() {
        let w = cols(&[[3.0, 4.0], [0.0, 1.0]]);
        close(score_l2norm_input(&w, &h(&[0.6, 0.8])).unwrap().values(), &[1.0, 0.8], 1e-15);
    }

    #[test]
    fn sqnorm_examples() {
        let w = cols(&[[1.0, 0.0], [0.0, 2.0]]);
        assert_eq!(score_sqnorm_output(&w, &h(&[0.0, 2.0])).unwrap().values(), &[0.0, 1.0]);

        let id = EmbeddingMatrix::identity(3).unwrap();
        let hv = h(&[0.2, -1.0, 0.4]);
        assert_eq!(
            score_sqnorm_output(&id, &hv).unwrap().values(),
            score_baseline(&id, &hv).unwrap().values()
        );

        // Tiny column: ‖w_j‖ = 0.01, w_j . w_k = 0.001 → score_j = 0.001 / 1e-4 = 10.
        let w = cols(&[[1.0, 0.0], [0.001, (1e-4f64 - 1e-6).sqrt()]]);
        let s = score_sqnorm_output(&w, &h(&[1.0, 0.0])).unwrap();
        close(s.values(), &[1.0, 10.0], 1e-9);
        assert_eq!(s.argmax(), 1);
    }

    #[test]
    fn distance_examples() {
        let id = EmbeddingMatrix::identity(2).unwrap();
        close(score_distance(&id, &h(&[0.9, 0.1])).unwrap().values(), &[0.4, -0.4], 1e-15);

        let w = cols(&[[1.0, 0.0], [0.0, 2.0]]);
        let hv = h(&[0.8, 0.9]);
        let s = score_distance(&w, &hv).unwrap();
        close(s.values(), &[0.3, -0.2], 1e-15);
        assert_eq!(s.argmax(), 0);
        assert_eq!(score_baseline(&w, &hv).unwrap().argmax(), 1);
    }

    #[test]
    fn distance_identity_on_random_columns() {
        let w = init_random(5, 30, InitScheme::Gaussian, 9).unwrap();
        for k in 0..w.vocab_size() {
            let s = score_distance(&w, &w.column(k).unwrap()).unwrap();
            assert_eq!(s.argmax(), k);
        }
    }

    #[test]
    fn cosine_examples() {
        let w = cols(&[[2.0, 0.0], [0.0, 0.5]]);
        let s = score_cosine(&w, &h(&[0.3, 0.4])).unwrap();
        close(s.values(), &[0.3, 0.4], 1e-15);
        assert_eq!(s.argmax(), 1);
    }

    #[test]
    fn cosine_argmax_is_best_nonnegative_rank_one_fit() {
        use rand::Rng;
        let w = init_random(8, 16, InitScheme::Sphere, 21).unwrap();
        let mut rng = crate::rng::stream(21, "test-h", 0);
        for _ in 0..100 {
            let hv: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let residual = |c: &[f64]| {
                let a = (vecmath::dot(c, &hv) / vecmath::sq_norm(c)).max(0.0);
                hv.iter().zip(c).map(|(x, y)| (x - a * y).powi(2)).sum::<f64>()
            };
            let oracle = (0..16)
                .min_by(|&a, &b| residual(w.col(a)).total_cmp(&residual(w.col(b))))
                .unwrap();
            assert_eq!(score_cosine(&w, &h(&hv)).unwrap().argmax(), oracle);
        }
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&ScoreVector::new(vec![0.0, 0.0]).unwrap());
        assert_eq!(p.values(), &[0.5, 0.5]);
        let p = softmax(&ScoreVector::new(vec![1000.0, 1001.0]).unwrap());
        close(p.values(), &[0.2689414213699951, 0.7310585786300049], 1e-12);
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_token(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(argmax_token(&[0.5, 0.5]), 0);
    }

    #[test]
    fn top_k_orders_and_clamps() {
        let s = ScoreVector::new(vec![0.2, 0.9, 0.9, -1.0]).unwrap();
        assert_eq!(top_k(&s, 2), vec![(1, 0.9), (2, 0.9)]);
        assert_eq!(top_k(&s, 10).len(), 4);
    }

    #[test]
    fn head_names_round_trip() {
        for k in HeadKind::ALL {
            assert_eq!(k.name().parse::<HeadKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!("softmax".parse::<HeadKind>().is_err());
    }

    #[test]
    fn scale_contracts() {
        let w = init_random(6, 12, InitScheme::Gaussian, 4).unwrap();
        let hv = h(&[0.5, -0.1, 0.3, 0.9, -0.7, 0.2]);
        let h2 = hv.scaled(3.0);
        for kind in [HeadKind::Baseline, HeadKind::Distance] {
            assert_ne!(score(&w, &hv, kind).unwrap(), score(&w, &h2, kind).unwrap());
        }
        assert_eq!(
            score_cosine(&w, &hv).unwrap().argmax(),
            score_cosine(&w, &h2).unwrap().argmax()
        );
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution_and_preserves_argmax(
            s in proptest::collection::vec(-50.0f64..50.0, 2..40)
        ) {
            let sv = ScoreVector::new(s.clone()).unwrap();
            let p = softmax(&sv);
            let total: f64 = p.values().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(p.values().iter().all(|&x| x >= 0.0));
            prop_assert_eq!(p.argmax(), argmax_token(&s));
            for i in 0..s.len() {
                for j in 0..s.len() {
                    if s[i] < s[j] {
                        prop_assert!(p.values()[i] <= p.values()[j]);
                    }
                }
            }
        }

        #[test]
        fn cosine_argmax_is_scale_invariant(c in 0.01f64..100.0, seed in 0u64..50) {
            let w = init_random(5, 10, InitScheme::Gaussian, seed).unwrap();
            let hv = w.column((seed % 10) as usize).unwrap();
            let hv = EmbVector::new(hv.values().iter().map(|x| x + 0.1).collect()).unwrap();
            prop_assert_eq!(
                score_cosine(&w, &hv).unwrap().argmax(),
                score_cosine(&w, &hv.scaled(c)).unwrap().argmax()
            );
        }
    }
}
