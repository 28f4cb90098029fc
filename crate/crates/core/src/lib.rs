//! Two-stream classifier for fixed-length multichannel behavioral signals.
//!
//! One stream applies temporal and spatial convolutions followed by
//! multi-head self-attention; the other transforms each signal into a
//! wavelet scalogram and runs a compact CNN over it. Per-stream class scores
//! are fused at the decision level with learnable weights and trained with a
//! cross-entropy + L2 objective.
//!
//! The numeric core is generic over the scalar type ([`Scalar`]); `f32` is
//! the production configuration (with f64 accumulation inside reductions)
//! and `f64` backs the gradient-check suites.

pub mod augment;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod wavelet;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{backward, GradStore, Tensor};

/// Production element type.
pub type F = f32;
/// Tensor in the production (f32) configuration.
pub type Tensor32 = Tensor<f32>;
/// Double-precision tensor, used by the verification suites.
pub type Tensor64 = Tensor<f64>;

/// Number of engagement classes.
pub const NUM_CLASSES: usize = 4;
/// Fixed signal length every sample is normalized to.
pub const SIGNAL_LEN: usize = 280;
