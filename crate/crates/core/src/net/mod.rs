//! Depth reconstruction network: a compact encoder-decoder with skip
//! connections that maps an RGB sensor image to a half-resolution map of
//! depression codes.
//!
//! Everything runs on the CPU in plain `ndarray` buffers, generic over
//! `f32` (training and inference) and `f64` (finite-difference gradient
//! checks). Layout is NHWC throughout.

mod checkpoint;
mod layers;
mod loss;
mod model;
mod optim;
mod tensor;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use layers::Conv2d;
pub use loss::{composite_loss, ssim_mean, LossSpec, LossTerms};
pub use model::{Gradients, NetConfig, ReconNet, Trace};
pub use optim::Adam;
pub use tensor::{rescale_inverse, rescale_target, resize_bilinear, resize_bilinear_adjoint};
pub use train::{
    load_split_tensors, metrics_csv, predict, train, EpochMetrics, Prediction, TrainConfig,
    TrainOutcome,
};

use thiserror::Error;

/// Errors from network construction, training, and inference.
#[derive(Debug, Error)]
pub enum NetError {
    #[error("resize target {out_h}x{out_w} must be at least 1x1")]
    BadResize { out_h: usize, out_w: usize },

    #[error("input of {got_h}x{got_w} is not divisible by {multiple} in both spatial dims")]
    Indivisible {
        got_h: usize,
        got_w: usize,
        multiple: usize,
    },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid loss spec: {reason}")]
    LossSpec { reason: String },

    #[error("invalid training config: {reason}")]
    TrainConfig { reason: String },

    #[error(
        "non-finite {what} (parameter norm {param_norm:.6e}, gradient norm {grad_norm:.6e})"
    )]
    NonFinite {
        what: String,
        param_norm: f64,
        grad_norm: f64,
    },

    #[error("checkpoint: {reason}")]
    Checkpoint { reason: String },

    #[error(transparent)]
    Dataset(#[from] crate::sim::SimError),

    #[error(transparent)]
    Sensor(#[from] crate::sensor::SensorError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
