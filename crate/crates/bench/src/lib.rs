//! Shared fixtures for the criterion benchmarks.

use tiedheads::{init_random, EmbVector, EmbeddingMatrix, InitScheme};

/// Gaussian-initialized `dim x vocab` matrix and a probe vector, fixed seeds.
pub fn fixture(dim: usize, vocab: usize) -> (EmbeddingMatrix, EmbVector) {
    let w = init_random(dim, vocab, InitScheme::Gaussian, 17).expect("valid shape");
    let h = w.column(vocab / 2).expect("in range");
    (w, h)
}
