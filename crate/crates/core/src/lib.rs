//! Tied input/output embedding scoring heads.
//!
//! A text-generation model with tied embeddings uses one `D x V` matrix `W`
//! both to embed input tokens and to score its output vector `h` against the
//! vocabulary. This crate provides five scoring rules over that shared
//! matrix ([`heads`]), brute-force and Monte Carlo oracles that check their
//! statistical behaviour ([`oracle`]), and a small encoder-decoder
//! transformer that trains end to end with any of them ([`trainer`]).

pub mod embedding;
pub mod error;
pub mod heads;
pub mod oracle;
pub mod rng;
pub mod trainer;
mod vecmath;

pub use embedding::{init_random, EmbVector, EmbeddingMatrix, InitScheme, Vocab, NORM_EPS};
pub use error::{Error, Result};
pub use heads::{argmax_token, score, softmax, HeadKind, ProbVector, ScoreVector};
pub use oracle::{AlphaDistribution, RecoveryResult};

/// Version string recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
