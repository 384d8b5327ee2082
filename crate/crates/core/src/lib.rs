//! Long behavior sequence modeling for click-through-rate prediction.
//!
//! Behaviors are hashed with sign-of-random-projection LSH, stably sorted
//! so similar items sit next to each other, cut into fixed-size chunks and
//! passed through transformer blocks whose self-attention is restricted to
//! a chunk and to rows sharing a hash bucket. Every second block shifts the
//! chunk grid by half a chunk so neighboring chunks exchange information.
//! Chunks are then mean-pooled into interest vectors, scored against the
//! target item, summed, and fed with the target and user features to a
//! small MLP head.
//!
//! Modules, bottom up:
//!
//! - [`diff`]: dense matrices and a reverse-mode autodiff graph
//! - [`lsh`]: hash codes, bucket ids, stable sort permutations
//! - [`chunk`]: chunk layout, bucket masks, (shifted) chunk attention blocks
//! - [`interest`]: chunk pooling and target attention
//! - [`model`]: full forward pass, BCE / AUC, optimizers, checkpoints
//! - [`data`]: synthetic clustered dataset and the binary embedding cache
//! - [`experiment`]: training runs and matched-seed ablations
//! - [`bench`]: instrumented attention kernels and complexity sweeps
//! - [`cli`]: the `tbin` command line

pub mod bench;
pub mod chunk;
pub mod cli;
pub mod data;
pub mod diff;
pub mod experiment;
mod error;
pub mod interest;
pub mod lsh;
pub mod model;
pub mod nn;

pub use error::{Error, Result};
