//! Learning-guided selection of pre-trained time-series forecasters.
//!
//! A dual encoder embeds a target dataset (patch self-attention over sampled
//! windows) and each candidate model (meta-information, architecture graph,
//! functional probes). Patchwise cross-attention and a horizon-routed
//! mixture of experts turn the pair into one compatibility score per model.
//! The scorer is trained on historical dataset/model performance with
//! first-order cross-task meta-learning.

mod error;

pub mod data_encoder;
pub mod diagnostics;
pub mod meta_dataset;
pub mod metrics;
pub mod model_encoder;
pub mod numerics;
pub mod rng;
pub mod scorer;
pub mod selector;
pub mod trainer;

pub use error::{Error, Result};
