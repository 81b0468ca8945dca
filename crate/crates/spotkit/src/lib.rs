//! Voiced-aware style extraction for expressive speech synthesis, end to end
//! on a synthetic corpus: a small reverse-mode autodiff engine, an STFT/mel
//! and pitch frontend, residual vector quantization with a rotation-based
//! gradient estimator, an unvoiced-filler style encoder with biased
//! self-attention, style-direction losses, a deterministic trainer, and an
//! objective prosody metric suite.
//!
//! All numeric code is generic over [`scalar::Scalar`] (`f32` for training,
//! `f64` for gradient checking); concrete aliases are exported below.

pub mod autodiff;
pub mod error;
pub mod signal;
pub mod scalar;

pub use autodiff::{ParamStore, Tape, Tensor};
pub use error::{Error, Result};
pub use scalar::{Dtype, Scalar};

/// 32-bit aliases (training builds).
pub type Tensor32 = Tensor<f32>;
pub type Tape32 = Tape<f32>;
pub type ParamStore32 = ParamStore<f32>;

/// 64-bit aliases (gradient-check builds).
pub type Tensor64 = Tensor<f64>;
pub type Tape64 = Tape<f64>;
pub type ParamStore64 = ParamStore<f64>;
