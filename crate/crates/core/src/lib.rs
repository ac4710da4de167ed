//! Skeleton-based fight detection: keypoint normalization, SVM and MLP
//! classifiers, per-person tracking and stream inference.

pub mod classifier;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod keypoint;
pub mod metrics;
pub mod mlp;
pub mod pipeline;
pub mod stream;
pub mod svm;
pub mod synthgen;
pub mod tracking;

pub use error::{Error, Result};
