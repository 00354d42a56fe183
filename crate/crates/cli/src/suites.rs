//! Invariant suites behind `tiedheads verify`.

use serde::Serialize;

use tiedheads::oracle::{measure_bias, mc_unbiasedness, synthesize_h, McResult};
use tiedheads::rng::{derive_seed, stream};
use tiedheads::trainer::{generate_batch, gradient_check, GradCheckConfig, ModelShape, Task, ToyModel};
use tiedheads::{init_random, score, AlphaDistribution, EmbeddingMatrix, HeadKind, InitScheme, Result};

use rand::Rng;

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub suite: &'static str,
    pub check: &'static str,
    pub head: HeadKind,
    pub passed: bool,
    pub detail: String,
}

const IDENTITY_MATRICES: u64 = 1000;
const NORMALITY_TRIALS: u64 = 1000;
/// Rounding slack on the `|score| <= 1` bound.
const NORMALITY_SLACK: f64 = 1e-12;

/// `W` (D=32, V=64 sphere) with column 17 replaced by `1.5 (0.9 w_5 + 0.5 u)`,
/// `u ⊥ w_5`. Raw dot products then rank 17 above 5 when `h = w_5`.
pub fn baseline_counterexample(seed: u64) -> (EmbeddingMatrix, usize, usize) {
    let (k, j) = (5, 17);
    let mut w = init_random(32, 64, InitScheme::Sphere, derive_seed(seed, "counterexample", 0))
        .expect("valid shape");
    let wk = w.col(k).to_vec();
    let mut u = w.col(40).to_vec();
    let proj: f64 = u.iter().zip(&wk).map(|(a, b)| a * b).sum();
    u.iter_mut().zip(&wk).for_each(|(a, b)| *a -= proj * b);
    let un = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    for (d, x) in w.col_mut(j).iter_mut().enumerate() {
        *x = 1.5 * (0.9 * wk[d] + 0.5 * u[d] / un);
    }
    (w, k, j)
}

fn random_alpha<R: Rng>(rng: &mut R, vocab: usize) -> AlphaDistribution {
    let support = rng.random_range(1..=6usize);
    let mut ids: Vec<usize> = Vec::with_capacity(support);
    while ids.len() < support {
        let id = rng.random_range(0..vocab);
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    AlphaDistribution::normalized(ids.into_iter().map(|i| (i, rng.random_range(0.05..1.0))))
        .expect("positive weights")
}

pub fn properties(seed: u64) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for head in HeadKind::ALL {
        let mut hits = 0;
        for m in 0..IDENTITY_MATRICES {
            let w = init_random(16, 64, InitScheme::Sphere, derive_seed(seed, "identity", m))?;
            let k = (m % 64) as usize;
            hits += usize::from(score(&w, &w.column(k)?, head)?.argmax() == k);
        }
        rows.push(CheckRow {
            suite: "properties",
            check: "identity/sphere",
            head,
            passed: hits as u64 == IDENTITY_MATRICES,
            detail: format!("{hits}/{IDENTITY_MATRICES} argmax == k"),
        });
    }

    let (w, k, j) = baseline_counterexample(seed);
    for head in HeadKind::ALL {
        let top = score(&w, &w.column(k)?, head)?.argmax();
        let (passed, expect) = if head == HeadKind::Baseline {
            (top == j, "expected failure")
        } else {
            (top == k, "expected argmax = k")
        };
        rows.push(CheckRow {
            suite: "properties",
            check: "identity/counterexample",
            head,
            passed,
            detail: format!("argmax {top}, k = {k} ({expect})"),
        });
    }

    for head in [HeadKind::L2NormInput, HeadKind::Cosine] {
        let mut worst = 0.0f64;
        for t in 0..NORMALITY_TRIALS {
            let mut rng = stream(seed, "normality", t);
            let w = init_random(16, 64, InitScheme::Sphere, rng.random())?;
            let alpha = random_alpha(&mut rng, 64);
            let h = synthesize_h(&w, &alpha, true)?;
            let s = score(&w, &h, head)?;
            worst = s.values().iter().fold(worst, |m, v| m.max(v.abs()));
        }
        rows.push(CheckRow {
            suite: "properties",
            check: "normality",
            head,
            passed: worst <= 1.0 + NORMALITY_SLACK,
            detail: format!("max |score| = {worst:.15}"),
        });
    }

    let mut rng = stream(seed, "bias-law", 0);
    let (mut worst_base, mut worst_sq) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let mut w = init_random(16, 8, InitScheme::Sphere, rng.random())?;
        let k = rng.random_range(0..8);
        let n = rng.random_range(0.25..4.0);
        w.scale_column(k, n);
        let sq = w.column(k)?.norm().powi(2);
        worst_base = worst_base.max((measure_bias(&w, k, HeadKind::Baseline)? / sq - 1.0).abs());
        worst_sq = worst_sq.max((measure_bias(&w, k, HeadKind::SqNormOutput)? - 1.0).abs());
    }
    rows.push(CheckRow {
        suite: "properties",
        check: "bias-law",
        head: HeadKind::Baseline,
        passed: worst_base <= 1e-9,
        detail: format!("max |bias/‖w‖² - 1| = {worst_base:.2e}"),
    });
    rows.push(CheckRow {
        suite: "properties",
        check: "bias-law",
        head: HeadKind::SqNormOutput,
        passed: worst_sq <= 1e-9,
        detail: format!("max |bias - 1| = {worst_sq:.2e}"),
    });
    Ok(rows)
}

pub fn monte_carlo(seed: u64, trials: usize) -> Result<(Vec<CheckRow>, Vec<McResult>)> {
    let alpha = AlphaDistribution::peaked(128, 0, 0.8)?;
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for head in HeadKind::ALL {
        let r = mc_unbiasedness(64, 128, &alpha, head, trials, seed)?;
        let z = r.z_score();
        let (passed, expect) = match head {
            HeadKind::L2NormInput | HeadKind::Cosine | HeadKind::SqNormOutput => (z < 3.0, "unbiased: z < 3"),
            HeadKind::Baseline | HeadKind::Distance => (z > 10.0, "biased: z > 10"),
        };
        rows.push(CheckRow {
            suite: "mc",
            check: "unbiasedness",
            head,
            passed,
            detail: format!("mean {:.6} stderr {:.2e} z {:.2} ({expect})", r.mean, r.stderr, z),
        });
        results.push(r);
    }
    Ok((rows, results))
}

pub fn gradcheck(seed: u64) -> Result<Vec<CheckRow>> {
    let shape = ModelShape { dim: 16, vocab_size: 12, enc_layers: 1, dec_layers: 1, ffn_dim: 32 };
    let batch = generate_batch(Task::Reverse, 12, 5, 2, seed, 0)?;
    let config = GradCheckConfig { seed, ..GradCheckConfig::default() };
    HeadKind::ALL
        .into_iter()
        .map(|head| {
            let model = ToyModel::new(shape, head, seed)?;
            let report = gradient_check(&model, &batch, 0.1, &config)?;
            Ok(CheckRow {
                suite: "gradcheck",
                check: "finite-difference",
                head,
                passed: report.passed() && report.checked >= 200,
                detail: format!(
                    "{} coords, max rel err {:.2e}, {} failures",
                    report.checked, report.max_rel_error, report.failures
                ),
            })
        })
        .collect()
}

pub fn render_table(rows: &[CheckRow]) -> String {
    let mut out = format!("{:<10} {:<24} {:<14} {:<5} DETAIL\n", "SUITE", "CHECK", "HEAD", "RESULT");
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:<24} {:<14} {:<5} {}\n",
            r.suite,
            r.check,
            r.head.name(),
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        ));
    }
    out
}
