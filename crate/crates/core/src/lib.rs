//! Exemplar-free class-incremental learning engine.
//!
//! Pipeline: a small backbone is pretrained on the base classes by a
//! supervised stream and a contrastive stream, the contrastive backbone is
//! distilled from the supervised one and frozen, and a random buffer layer
//! feeds a ridge classifier that absorbs later phases by recursive
//! least squares.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod backbone;
pub mod error;
pub mod io;
pub mod mlp;
pub mod numkit;
pub mod protocol;
pub mod red;
pub mod rng;
pub mod sscl;
pub mod synth;

#[cfg(test)]
mod fd;

pub use analytic::{AnalyticClassifier, BufferLayer};
pub use backbone::{LinearHead, MlpBackbone, TrainConfig};
pub use error::{Error, Result};
pub use numkit::DenseMatrix;
pub use rng::RngSeed;
