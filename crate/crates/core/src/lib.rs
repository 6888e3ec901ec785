//! Detection of anomalous investor trading profiles around a price-sensitive
//! event, using reconstruction errors from PCA and autoencoders.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod checks;
pub mod detect;
pub mod enrich;
pub mod error;
pub mod ingest;
pub mod ae;
pub mod linalg;
pub mod par;
pub mod pca;
pub mod pipeline;
pub mod recon;
pub mod select;
pub mod synth;

pub use error::{Error, Result};
