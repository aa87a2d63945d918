//! Uncertainty-aware edge detection.
//!
//! Edge labels from several annotators are modelled as a per-pixel Gaussian
//! over logits: one decoder predicts the mean, a second one the variance, and
//! predictions are drawn with the reparameterization trick. Training uses a
//! class-balanced variance regression plus a BCE whose per-pixel weight grows
//! with the predicted uncertainty as training progresses. Evaluation follows
//! the usual boundary benchmark (NMS, tolerance matching, ODS/OIS/AP).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below pin the common instantiations.

// `!(x >= 0)` is how validation rejects NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annotations;
pub mod error;
pub mod eval;
pub mod grid;
pub mod imageio;
pub mod losses;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use grid::{BinaryMap, Grid};
pub use model::Uaed;
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Map32 = Grid<f32>;
pub type Map64 = Grid<f64>;
pub type Model32 = Uaed<f32>;
pub type Model64 = Uaed<f64>;
