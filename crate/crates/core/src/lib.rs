//! Paired-exposure Retinex low-light enhancement.
//!
//! The crate is layered bottom-up:
//!
//! - [`tensor`] and [`autodiff`]: dense tensors and a reverse-mode tape with
//!   exactly the operators the networks and losses need.
//! - [`nets`]: projection, decomposition, reflectance/illumination refinement
//!   and exposure correction blocks plus the inference pipeline.
//! - [`loss`]: projection, consistency, Retinex and perceptual losses.
//! - [`metrics`]: PSNR, SSIM and directory evaluation.
//! - [`train`]: pair ingestion, synthetic pairs, Adam with cosine annealing,
//!   checkpoints and the training loop.

pub mod autodiff;
pub mod error;
pub mod imageio;
pub mod loss;
pub mod metrics;
pub mod nets;
pub mod tensor;
pub mod train;

pub use autodiff::{Graph, Var};
pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};

/// Lower bound applied to illumination before it is used as a divisor or
/// power base.
pub const CLAMP_FLOOR: f64 = 0.01;
