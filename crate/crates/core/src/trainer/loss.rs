//! Label-smoothed cross-entropy over score rows.

/// Loss of one score row and its gradient, written into `d_scores`:
/// `(1 - ls)(-log p_target) + ls * mean_i(-log p_i)` with `p = softmax(scores)`.
pub fn smoothed_cross_entropy(scores: &[f64], target: usize, ls: f64, d_scores: &mut [f64]) -> f64 {
    let v = scores.len() as f64;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    let log_z = max + sum_exp.ln();
    let mean_score = scores.iter().sum::<f64>() / v;
    let loss = (1.0 - ls) * (log_z - scores[target]) + ls * (log_z - mean_score);
    for (d, &s) in d_scores.iter_mut().zip(scores) {
        *d = (s - log_z).exp() - ls / v;
    }
    d_scores[target] -= 1.0 - ls;
    loss
}

/// Mean smoothed cross-entropy over `rows` of `logits` (each of width `vocab`).
pub fn mean_loss(logits: &[f64], targets: &[usize], vocab: usize, ls: f64) -> f64 {
    let mut scratch = vec![0.0; vocab];
    let total: f64 = logits
        .chunks_exact(vocab)
        .zip(targets)
        .map(|(row, &t)| smoothed_cross_entropy(row, t, ls, &mut scratch))
        .sum();
    total / targets.len() as f64
}

/// Mean loss and its gradient with respect to every logit.
pub fn mean_loss_and_grad(logits: &[f64], targets: &[usize], vocab: usize, ls: f64) -> (f64, Vec<f64>) {
    let n = targets.len() as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut total = 0.0;
    for ((row, d), &t) in logits.chunks_exact(vocab).zip(grad.chunks_exact_mut(vocab)).zip(targets) {
        total += smoothed_cross_entropy(row, t, ls, d);
        d.iter_mut().for_each(|g| *g /= n);
    }
    (total / n, grad)
}
