//! Closed-loop generation of spatial-relation training samples.
//!
//! A soft actor-critic agent moves objects around small geometric indoor
//! scenes. Every valid placement becomes a captioned sample; a trainable
//! judge scores each episode's samples, and its weakness is paid back to the
//! agent as an end-of-episode bonus. Batches of samples then fine-tune the
//! judge, and the cycle repeats until validation stops improving.

// `!(x > 0.0)` is used on purpose so NaN is rejected along with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod datasets;
mod error;
pub mod judges;
pub mod numerics;
pub mod orchestrator;
pub mod prompt;
pub mod scene;
pub mod seeding;

pub use error::{Error, Result};

/// Real type used by the simulator, agent and judges.
pub type Real = f64;

/// SHA-256 of `bytes`, hex encoded.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

pub type Mlp64 = numerics::Mlp<f64>;
pub type Mlp32 = numerics::Mlp<f32>;
pub type Gradients64 = numerics::Gradients<f64>;
pub type OptimizerState64 = numerics::OptimizerState<f64>;
