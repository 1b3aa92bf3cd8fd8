//! RGB-thermal salient object detection.
//!
//! - [`encoder`]: weight-shared five-level backbone with per-level 1×1 reduction.
//! - [`fusion`]: channel-gated fusion of RGB and thermal pyramid levels.
//! - [`decoder`]: top-down progressive decoder plus auxiliary 1×1 heads.
//! - [`losses`]: self-supervised alignment, IoU + BCE supervision and their combination.
//! - [`model`]: the assembled network.
//! - [`trainer`]: joint and two-stage sequential training, checkpoints, loss logs.
//! - [`data`]: dataset I/O, synthetic RGB-T generator, thermal misalignment.
//! - [`experiments`]: ablation and α-sweep harnesses.
//! - [`inference`]: prediction and evaluation of a trained model.

pub mod data;
pub mod decoder;
pub mod encoder;
pub mod experiments;
pub mod fusion;
pub mod inference;
pub mod losses;
pub mod model;
pub mod trainer;

pub use rgbt_tensor as tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Metric(#[from] rgbt_metrics::MetricError),
    #[error("image error at {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
