//! Exhaustive minimum-support recovery of `h = W α` over the probability simplex.
//!
//! Supports are enumerated by increasing size. On each support the
//! simplex-constrained least-squares problem is solved exactly by visiting
//! every face of the support (vertices, edges, the interior of the triangle),
//! solving the affine-constrained normal equations in closed form, and keeping
//! the best strictly-feasible face.

use super::AlphaDistribution;
use crate::embedding::{EmbVector, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::vecmath::{axpy, dot, norm};

pub const RECOVERY_MAX_VOCAB: usize = 24;
pub const RECOVERY_MAX_SUPPORT: usize = 3;

/// Residual below which a support is accepted as an exact representation.
pub const EXACT_RESIDUAL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub alpha_hat: AlphaDistribution,
    /// `‖W α̂ - h‖₂`
    pub residual: f64,
    /// Sorted ids carrying nonzero weight in `alpha_hat`.
    pub support: Vec<usize>,
}

pub fn solve_l0_bruteforce(
    w: &EmbeddingMatrix,
    h: &EmbVector,
    max_support: usize,
) -> Result<RecoveryResult> {
    let vocab = w.vocab_size();
    if vocab > RECOVERY_MAX_VOCAB {
        return Err(Error::RecoveryGuard(format!(
            "vocabulary size {vocab} exceeds {RECOVERY_MAX_VOCAB}"
        )));
    }
    if !(1..=RECOVERY_MAX_SUPPORT).contains(&max_support) {
        return Err(Error::RecoveryGuard(format!(
            "max_support must be in 1..={RECOVERY_MAX_SUPPORT}, got {max_support}"
        )));
    }
    if h.dim() != w.dim() {
        return Err(Error::DimensionMismatch { expected: w.dim(), actual: h.dim() });
    }
    let h = h.values();

    let mut global: Option<(Vec<(usize, f64)>, f64)> = None;
    for size in 1..=max_support.min(vocab) {
        let mut best: Option<(Vec<(usize, f64)>, f64)> = None;
        for support in Combinations::new(vocab, size) {
            let candidate = simplex_least_squares(w, h, &support);
            if best.as_ref().is_none_or(|(_, r)| candidate.1 < *r) {
                best = Some(candidate);
            }
        }
        let best = best.expect("at least one support per size");
        let exact = best.1 < EXACT_RESIDUAL;
        if global.as_ref().is_none_or(|(_, r)| best.1 < *r) {
            global = Some(best);
        }
        if exact {
            break;
        }
    }
    let (weights, residual) = global.expect("size-1 supports always exist");
    let alpha_hat = AlphaDistribution::new(weights)?;
    Ok(RecoveryResult { support: alpha_hat.support(), alpha_hat, residual })
}

/// Best point of the simplex spanned by `support`, as (positive weights, residual).
fn simplex_least_squares(w: &EmbeddingMatrix, h: &[f64], support: &[usize]) -> (Vec<(usize, f64)>, f64) {
    let n = support.len();
    let mut best: Option<(Vec<(usize, f64)>, f64)> = None;
    for mask in 1u32..(1 << n) {
        let face: Vec<usize> = (0..n).filter(|b| mask & (1 << b) != 0).map(|b| support[b]).collect();
        let Some(weights) = affine_least_squares(w, h, &face) else {
            continue;
        };
        if weights.iter().any(|&a| a <= 0.0) {
            continue;
        }
        let total: f64 = weights.iter().sum();
        let weights: Vec<(usize, f64)> = face.iter().copied().zip(weights.iter().map(|a| a / total)).collect();
        let residual = residual(w, h, &weights);
        if best.as_ref().is_none_or(|(_, r)| residual < *r) {
            best = Some((weights, residual));
        }
    }
    best.expect("vertices are always feasible")
}

fn residual(w: &EmbeddingMatrix, h: &[f64], weights: &[(usize, f64)]) -> f64 {
    let mut r: Vec<f64> = h.iter().map(|v| -v).collect();
    for &(i, a) in weights {
        axpy(a, w.col(i), &mut r);
    }
    norm(&r)
}

/// Minimizes `‖W_F a - h‖` subject to `Σ a = 1` via the KKT system
/// `[G 1; 1ᵀ 0] [a; μ] = [W_Fᵀ h; 1]`. `None` when the system is singular.
fn affine_least_squares(w: &EmbeddingMatrix, h: &[f64], face: &[usize]) -> Option<Vec<f64>> {
    let n = face.len();
    if n == 1 {
        return Some(vec![1.0]);
    }
    let m = n + 1;
    let mut a = vec![0.0; m * m];
    let mut b = vec![0.0; m];
    for r in 0..n {
        for c in 0..n {
            a[r * m + c] = dot(w.col(face[r]), w.col(face[c]));
        }
        a[r * m + n] = 1.0;
        a[n * m + r] = 1.0;
        b[r] = dot(w.col(face[r]), h);
    }
    b[n] = 1.0;
    let sol = solve_dense(&mut a, &mut b, m)?;
    Some(sol[..n].to_vec())
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(a: &mut [f64], b: &mut [f64], m: usize) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    for col in 0..m {
        let pivot = (col..m).max_by(|&x, &y| a[x * m + col].abs().total_cmp(&a[y * m + col].abs()))?;
        if a[pivot * m + col].abs() <= 1e-12 * scale {
            return None;
        }
        if pivot != col {
            for c in 0..m {
                a.swap(pivot * m + c, col * m + c);
            }
            b.swap(pivot, col);
        }
        for r in col + 1..m {
            let f = a[r * m + col] / a[col * m + col];
            if f != 0.0 {
                for c in col..m {
                    a[r * m + c] -= f * a[col * m + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|c| a[r * m + c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r * m + r];
    }
    Some(x)
}

/// Lexicographic `k`-subsets of `0..n`.
struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations { n, current: (k <= n).then(|| (0..k).collect()) }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{init_random, InitScheme};
    use crate::oracle::synthesize_h;

    #[test]
    fn combinations_enumerate_all_subsets() {
        assert_eq!(Combinations::new(4, 2).count(), 6);
        assert_eq!(Combinations::new(24, 3).count(), 2024);
        assert_eq!(Combinations::new(3, 3).collect::<Vec<_>>(), vec![vec![0, 1, 2]]);
        assert_eq!(Combinations::new(2, 3).count(), 0);
    }

    #[test]
    fn recovers_exact_column() {
        let w = init_random(4, 8, InitScheme::Sphere, 3).unwrap();
        let r = solve_l0_bruteforce(&w, &w.column(5).unwrap(), 3).unwrap();
        assert_eq!(r.support, vec![5]);
        assert_eq!(r.alpha_hat, AlphaDistribution::point(5));
        assert!(r.residual < EXACT_RESIDUAL);
    }

    #[test]
    fn recovers_two_sparse_mixtures() {
        let truth = AlphaDistribution::new([(2, 0.6), (6, 0.4)]).unwrap();
        for seed in 0..20 {
            let w = init_random(4, 8, InitScheme::Sphere, seed).unwrap();
            let h = synthesize_h(&w, &truth, false).unwrap();
            let r = solve_l0_bruteforce(&w, &h, 3).unwrap();
            assert_eq!(r.support, vec![2, 6], "seed {seed}");
            assert!(r.alpha_hat.max_abs_diff(&truth) < 1e-6);
            assert!(r.residual < EXACT_RESIDUAL);
        }
    }

    #[test]
    fn recovers_three_sparse_mixture() {
        let truth = AlphaDistribution::new([(1, 0.5), (4, 0.3), (7, 0.2)]).unwrap();
        let w = init_random(5, 10, InitScheme::Sphere, 8).unwrap();
        let r = solve_l0_bruteforce(&w, &synthesize_h(&w, &truth, false).unwrap(), 3).unwrap();
        assert_eq!(r.support, vec![1, 4, 7]);
        assert!(r.alpha_hat.max_abs_diff(&truth) < 1e-6);
    }

    #[test]
    fn single_support_returns_nearest_vertex() {
        let w = init_random(4, 8, InitScheme::Sphere, 4).unwrap();
        let mix = AlphaDistribution::new([(1, 0.45), (3, 0.55)]).unwrap();
        let h = synthesize_h(&w, &mix, false).unwrap();
        let r = solve_l0_bruteforce(&w, &h, 1).unwrap();
        let dist = |i: usize| {
            w.col(i).iter().zip(h.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let nearest = (0..8).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap();
        assert_eq!(r.support, vec![nearest]);
        assert!((r.residual - dist(nearest)).abs() < 1e-12);
    }

    #[test]
    fn projects_points_outside_the_hull() {
        // h beyond the segment [e0, e1]: optimum on the edge at its foot point.
        let w = EmbeddingMatrix::from_columns(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let h = EmbVector::new(vec![1.0, 1.0]).unwrap();
        let r = solve_l0_bruteforce(&w, &h, 2).unwrap();
        assert_eq!(r.support, vec![0, 1]);
        assert!((r.alpha_hat.get(0) - 0.5).abs() < 1e-12);
        assert!((r.residual - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn guards() {
        let big = init_random(4, 25, InitScheme::Sphere, 1).unwrap();
        let h = big.column(0).unwrap();
        assert!(matches!(solve_l0_bruteforce(&big, &h, 1), Err(Error::RecoveryGuard(_))));
        let w = init_random(4, 8, InitScheme::Sphere, 1).unwrap();
        assert!(solve_l0_bruteforce(&w, &h, 0).is_err());
        assert!(solve_l0_bruteforce(&w, &h, 4).is_err());
        let short = EmbVector::new(vec![1.0]).unwrap();
        assert!(solve_l0_bruteforce(&w, &short, 2).is_err());
    }
}
