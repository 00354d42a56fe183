//! Central finite-difference check of the model's analytic gradients.
//!
//! Only forward passes are used to form the numerical estimate, so the check
//! is independent of the backward implementation it verifies.

use rand::Rng;
use serde::Serialize;

use super::model::ToyModel;
use super::tasks::TaskBatch;
use crate::error::Result;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Coordinates sampled from every tensor before uniform sampling.
    pub per_tensor: usize,
    /// Additional coordinates drawn uniformly over all parameters.
    pub uniform: usize,
    /// Pass threshold on the relative error.
    pub tolerance: f64,
    /// Denominator floor of the relative error, for gradients near zero.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-4, per_tensor: 4, uniform: 100, tolerance: 1e-3, floor: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub failures: usize,
    pub max_rel_error: f64,
    pub worst: Option<CoordinateCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// `|a - n| / max(|a|, |n|, floor)`
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn gradient_check(
    model: &ToyModel,
    batch: &TaskBatch,
    label_smoothing: f64,
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let (_, grads) = model.loss_and_gradients(batch, label_smoothing)?;
    let analytic = grads.flatten();

    let mut tensors = Vec::new();
    let mut offset = 0;
    model.params().visit(&mut |name, _, _, v| {
        tensors.push((name.to_string(), offset, v.len()));
        offset += v.len();
    });
    let total = offset;

    let mut rng = rng::stream(config.seed, "gradcheck", 0);
    let mut coords: Vec<usize> = Vec::new();
    for (_, start, len) in &tensors {
        coords.extend((0..config.per_tensor).map(|_| start + rng.random_range(0..*len)));
    }
    coords.extend((0..config.uniform).map(|_| rng.random_range(0..total)));

    let mut probe = model.clone();
    let mut checks = Vec::with_capacity(coords.len());
    for &flat in &coords {
        let original = nudge(&mut probe, flat, None);
        nudge(&mut probe, flat, Some(original + config.step));
        let up = probe.batch_loss(batch, label_smoothing)?;
        nudge(&mut probe, flat, Some(original - config.step));
        let down = probe.batch_loss(batch, label_smoothing)?;
        nudge(&mut probe, flat, Some(original));

        let numeric = (up - down) / (2.0 * config.step);
        let (tensor, start, _) = tensors
            .iter()
            .rev()
            .find(|(_, start, _)| *start <= flat)
            .expect("flat index lies in some tensor");
        checks.push(CoordinateCheck {
            tensor: tensor.clone(),
            index: flat - start,
            analytic: analytic[flat],
            numeric,
            rel_error: relative_error(analytic[flat], numeric, config.floor),
        });
    }

    let failures = checks.iter().filter(|c| !(c.rel_error < config.tolerance)).count();
    let worst = checks.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error)).cloned();
    Ok(GradCheckReport {
        checked: checks.len(),
        failures,
        max_rel_error: worst.as_ref().map_or(0.0, |w| w.rel_error),
        worst,
    })
}

/// Reads the flat coordinate, optionally overwriting it; returns the previous value.
fn nudge(model: &mut ToyModel, flat: usize, value: Option<f64>) -> f64 {
    let mut offset = 0;
    let mut previous = 0.0;
    model.params_mut().visit_mut(&mut |_, _, _, v| {
        if (offset..offset + v.len()).contains(&flat) {
            previous = v[flat - offset];
            if let Some(x) = value {
                v[flat - offset] = x;
            }
        }
        offset += v.len();
    });
    previous
}
