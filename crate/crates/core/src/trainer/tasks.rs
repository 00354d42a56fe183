//! Synthetic transduction tasks.
//!
//! Ids `0` (begin-of-sequence) and `1` (pad) are reserved; source tokens are
//! uniform over `2..V`. Every batch is a pure function of
//! `(task, V, seq_len, batch, seed, step)`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const BOS: usize = 0;
pub const PAD: usize = 1;
pub const FIRST_CONTENT_TOKEN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// `target = source`
    Copy,
    /// `target = reverse(source)`
    Reverse,
    /// `target_t = π(source_t)` for a seed-determined permutation `π` of the content ids.
    Cipher,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Copy, Task::Reverse, Task::Cipher];

    pub fn name(self) -> &'static str {
        match self {
            Task::Copy => "copy",
            Task::Reverse => "reverse",
            Task::Cipher => "cipher",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task {s:?}")))
    }
}

/// Source and target token matrices, each `batch x seq_len`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskBatch {
    pub batch: usize,
    pub seq_len: usize,
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

impl TaskBatch {
    pub fn source_row(&self, b: usize) -> &[usize] {
        &self.source[b * self.seq_len..(b + 1) * self.seq_len]
    }

    pub fn target_row(&self, b: usize) -> &[usize] {
        &self.target[b * self.seq_len..(b + 1) * self.seq_len]
    }

    /// Teacher-forced decoder input for example `b`: `BOS` then the target shifted right.
    pub fn decoder_input(&self, b: usize) -> Vec<usize> {
        std::iter::once(BOS)
            .chain(self.target_row(b)[..self.seq_len - 1].iter().copied())
            .collect()
    }
}

/// The cipher permutation over all `V` ids; it fixes `BOS` and `PAD`.
pub fn cipher_permutation(vocab_size: usize, seed: u64) -> Vec<usize> {
    let mut content: Vec<usize> = (FIRST_CONTENT_TOKEN..vocab_size).collect();
    content.shuffle(&mut rng::stream(seed, "cipher", 0));
    (0..FIRST_CONTENT_TOKEN).chain(content).collect()
}

pub fn generate_batch(
    task: Task,
    vocab_size: usize,
    seq_len: usize,
    batch: usize,
    seed: u64,
    step: u64,
) -> Result<TaskBatch> {
    if vocab_size <= FIRST_CONTENT_TOKEN {
        return Err(Error::Config(format!(
            "vocabulary size must exceed {FIRST_CONTENT_TOKEN} (ids 0 and 1 are reserved), got {vocab_size}"
        )));
    }
    if seq_len == 0 || batch == 0 {
        return Err(Error::Config("seq_len and batch must be positive".into()));
    }
    let mut rng = rng::stream(seed, "data", step);
    let source: Vec<usize> = (0..batch * seq_len)
        .map(|_| rng.random_range(FIRST_CONTENT_TOKEN..vocab_size))
        .collect();
    let target = match task {
        Task::Copy => source.clone(),
        Task::Reverse => source
            .chunks_exact(seq_len)
            .flat_map(|row| row.iter().rev().copied())
            .collect(),
        Task::Cipher => {
            let perm = cipher_permutation(vocab_size, seed);
            source.iter().map(|&t| perm[t]).collect()
        }
    };
    Ok(TaskBatch { batch, seq_len, source, target })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_and_reverse() {
        let b = generate_batch(Task::Copy, 20, 6, 4, 1, 0).unwrap();
        assert_eq!(b.source, b.target);
        assert!(b.source.iter().all(|&t| (2..20).contains(&t)));

        let r = generate_batch(Task::Reverse, 20, 6, 4, 1, 0).unwrap();
        assert_eq!(r.source, b.source);
        for i in 0..4 {
            let mut rev = r.source_row(i).to_vec();
            rev.reverse();
            assert_eq!(r.target_row(i), rev.as_slice());
        }
    }

    #[test]
    fn cipher_applies_fixed_permutation() {
        let perm = cipher_permutation(30, 5);
        assert_eq!(perm, cipher_permutation(30, 5));
        assert_eq!(&perm[..2], &[0, 1]);
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..30).collect::<Vec<_>>());

        let b = generate_batch(Task::Cipher, 30, 5, 3, 5, 7).unwrap();
        for (s, t) in b.source.iter().zip(&b.target) {
            assert_eq!(perm[*s], *t);
        }
    }

    #[test]
    fn deterministic_in_all_arguments() {
        let a = generate_batch(Task::Copy, 20, 6, 4, 1, 3).unwrap();
        assert_eq!(a, generate_batch(Task::Copy, 20, 6, 4, 1, 3).unwrap());
        assert_ne!(a, generate_batch(Task::Copy, 20, 6, 4, 1, 4).unwrap());
        assert_ne!(a, generate_batch(Task::Copy, 20, 6, 4, 2, 3).unwrap());
    }

    #[test]
    fn decoder_input_is_shifted_target() {
        let b = generate_batch(Task::Reverse, 20, 4, 1, 1, 0).unwrap();
        let d = b.decoder_input(0);
        assert_eq!(d[0], BOS);
        assert_eq!(&d[1..], &b.target_row(0)[..3]);
    }

    #[test]
    fn rejects_tiny_vocab() {
        assert!(generate_batch(Task::Copy, 2, 4, 1, 1, 0).is_err());
        assert!(generate_batch(Task::Copy, 3, 0, 1, 1, 0).is_err());
    }
}
