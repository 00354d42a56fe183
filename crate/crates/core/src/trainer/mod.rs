//! End-to-end training of the toy encoder-decoder on synthetic tasks.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod tasks;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport};
pub use model::{Logits, ModelShape, Params, ToyModel};
pub use tasks::{generate_batch, Task, TaskBatch};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::heads::HeadKind;
use optim::{learning_rate, Adam, AdamConfig};

/// Held-out batches use step indices from here up, disjoint from training steps.
pub const EVAL_STEP_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub dim: usize,
    /// Encoder and decoder depth.
    pub layers: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub label_smoothing: f64,
    pub seed: u64,
    pub head_kind: HeadKind,
    pub task: Task,
    pub eval_every: usize,
    pub eval_batches: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 32,
            layers: 1,
            ffn_dim: 64,
            vocab_size: 50,
            seq_len: 8,
            batch_size: 32,
            steps: 2000,
            peak_lr: 1e-3,
            warmup_steps: 200,
            label_smoothing: 0.1,
            seed: 1,
            head_kind: HeadKind::Baseline,
            task: Task::Copy,
            eval_every: 250,
            eval_batches: 4,
        }
    }
}

impl TrainConfig {
    pub fn shape(&self) -> ModelShape {
        ModelShape {
            dim: self.dim,
            vocab_size: self.vocab_size,
            enc_layers: self.layers,
            dec_layers: self.layers,
            ffn_dim: self.ffn_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape().validate()?;
        if self.seq_len == 0 || self.batch_size == 0 {
            return Err(Error::Config("seq_len and batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config(format!(
                "label_smoothing must lie in [0, 1), got {}",
                self.label_smoothing
            )));
        }
        if !(self.peak_lr.is_finite() && self.peak_lr >= 0.0) {
            return Err(Error::Config(format!("bad learning rate {}", self.peak_lr)));
        }
        if self.eval_every == 0 || self.eval_batches == 0 {
            return Err(Error::Config("eval_every and eval_batches must be positive".into()));
        }
        Ok(())
    }
}

/// One evaluation point, serialized as a metrics JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRecord {
    pub step: usize,
    /// Mean teacher-forced loss on the held-out batches.
    pub loss: f64,
    /// Greedy-decoding token accuracy on the held-out batches.
    pub accuracy: f64,
    pub head_kind: HeadKind,
    pub task: Task,
    pub seed: u64,
}

pub struct TrainReport {
    pub model: ToyModel,
    pub records: Vec<MetricRecord>,
    /// Training loss of every optimizer step.
    pub step_losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_accuracy(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.accuracy)
    }

    pub fn metrics_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("metric records serialize") + "\n")
            .collect()
    }
}

/// Held-out teacher-forced loss and greedy token accuracy.
pub fn evaluate(model: &ToyModel, config: &TrainConfig) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let (mut correct, mut total) = (0usize, 0usize);
    for j in 0..config.eval_batches {
        let batch = generate_batch(
            config.task,
            config.vocab_size,
            config.seq_len,
            config.batch_size,
            config.seed,
            EVAL_STEP_BASE + j as u64,
        )?;
        loss += model.batch_loss(&batch, config.label_smoothing)?;
        for b in 0..batch.batch {
            let decoded = model.greedy_decode(batch.source_row(b))?;
            correct += decoded.iter().zip(batch.target_row(b)).filter(|(a, b)| a == b).count();
            total += batch.seq_len;
        }
    }
    Ok((loss / config.eval_batches as f64, correct as f64 / total as f64))
}

/// Trains from scratch. Deterministic in `config`; aborts with
/// [`Error::Diverged`] as soon as a loss or parameter becomes non-finite.
pub fn train(config: &TrainConfig) -> Result<TrainReport> {
    train_with_progress(config, |_| {})
}

/// [`train`], calling `on_record` after every evaluation.
pub fn train_with_progress(
    config: &TrainConfig,
    mut on_record: impl FnMut(&MetricRecord),
) -> Result<TrainReport> {
    config.validate()?;
    let mut model = ToyModel::new(config.shape(), config.head_kind, config.seed)?;
    let mut adam = Adam::new(model.params(), AdamConfig::default());
    let mut records = Vec::new();
    let mut step_losses = Vec::with_capacity(config.steps);

    let mut record = |model: &ToyModel, step: usize, records: &mut Vec<MetricRecord>| -> Result<()> {
        let (loss, accuracy) = evaluate(model, config)?;
        let r = MetricRecord {
            step,
            loss,
            accuracy,
            head_kind: config.head_kind,
            task: config.task,
            seed: config.seed,
        };
        on_record(&r);
        records.push(r);
        Ok(())
    };

    record(&model, 0, &mut records)?;
    for step in 1..=config.steps {
        let batch = generate_batch(
            config.task,
            config.vocab_size,
            config.seq_len,
            config.batch_size,
            config.seed,
            step as u64,
        )?;
        let (loss, grads) = model.loss_and_gradients(&batch, config.label_smoothing)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        step_losses.push(loss);
        let lr = learning_rate(config.peak_lr, config.warmup_steps, step);
        adam.step(model.params_mut(), &grads, lr);
        if !model.params().all_finite() {
            return Err(Error::Diverged { step, loss: f64::NAN });
        }
        if step % config.eval_every == 0 || step == config.steps {
            record(&model, step, &mut records)?;
        }
    }
    Ok(TrainReport { model, records, step_losses })
}

/// Final accuracy of `config` under each head kind and seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub head_kind: HeadKind,
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

/// Trains `config` once per `(head, seed)` pair and reports mean held-out accuracy per head.
pub fn compare_heads(config: &TrainConfig, heads: &[HeadKind], seeds: &[u64]) -> Result<Vec<ComparisonRow>> {
    heads
        .iter()
        .map(|&head_kind| {
            let accuracies = seeds
                .iter()
                .map(|&seed| {
                    let c = TrainConfig { head_kind, seed, ..config.clone() };
                    Ok(train(&c)?.final_accuracy())
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean_accuracy = accuracies.iter().sum::<f64>() / accuracies.len().max(1) as f64;
            Ok(ComparisonRow { head_kind, accuracies, mean_accuracy })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainConfig {
        TrainConfig {
            dim: 8,
            ffn_dim: 16,
            vocab_size: 10,
            seq_len: 4,
            batch_size: 4,
            steps: 6,
            eval_every: 3,
            eval_batches: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn validation() {
        assert!(TrainConfig { vocab_size: 2, ..tiny() }.validate().is_err());
        assert!(TrainConfig { label_smoothing: 1.0, ..tiny() }.validate().is_err());
        assert!(TrainConfig { dim: 0, ..tiny() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
        assert_eq!(TrainConfig::default().label_smoothing, 0.1);
    }

    #[test]
    fn training_is_deterministic_and_logs_monotone_steps() {
        let a = train(&tiny()).unwrap();
        let b = train(&tiny()).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.step_losses, b.step_losses);
        assert_eq!(a.records.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 3, 6]);
        assert_eq!(a.step_losses.len(), 6);
        assert!(a.model.params().all_finite());
    }

    #[test]
    fn zero_steps_returns_initial_model() {
        let c = TrainConfig { steps: 0, ..tiny() };
        let r = train(&c).unwrap();
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.model, ToyModel::new(c.shape(), c.head_kind, c.seed).unwrap());
    }

    #[test]
    fn zero_learning_rate_leaves_loss_unchanged() {
        let c = TrainConfig { peak_lr: 0.0, ..tiny() };
        let batch = generate_batch(c.task, c.vocab_size, c.seq_len, c.batch_size, c.seed, 1).unwrap();
        let initial = ToyModel::new(c.shape(), c.head_kind, c.seed).unwrap();
        let trained = train(&c).unwrap().model;
        assert_eq!(
            initial.batch_loss(&batch, 0.1).unwrap(),
            trained.batch_loss(&batch, 0.1).unwrap()
        );
    }

    #[test]
    fn metrics_lines_have_expected_keys() {
        let r = train(&TrainConfig { steps: 1, ..tiny() }).unwrap();
        for line in r.metrics_jsonl().lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            for key in ["step", "loss", "accuracy", "head_kind", "task", "seed"] {
                assert!(v.get(key).is_some());
            }
        }
    }

    #[test]
    fn divergence_is_reported() {
        let c = TrainConfig { peak_lr: 1e300, warmup_steps: 1, ..tiny() };
        assert!(matches!(train(&c), Err(Error::Diverged { .. })));
    }

    #[test]
    fn comparison_has_one_row_per_head() {
        let rows = compare_heads(
            &TrainConfig { steps: 2, eval_every: 2, task: Task::Cipher, ..tiny() },
            &[HeadKind::Baseline, HeadKind::SqNormOutput],
            &[1, 2],
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.accuracies.len() == 2));
    }
}
