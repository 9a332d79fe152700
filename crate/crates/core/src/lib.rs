//! Desk-scale end-to-end singing voice synthesis.
//!
//! A CVAE+GAN pipeline (posterior encoder, score-conditioned prior encoder,
//! shared decoder, multi-resolution/period/scale discriminators) trained with
//! differentiable feature-space augmentation inside the adversarial loop and
//! a frame-to-sample uncertainty predictor supervised by reconstruction
//! error, plus a deterministic synthetic singing corpus and the usual
//! objective metrics (log-F0 RMSE, MCD, semitone accuracy, VUV error).
//!
//! All numeric code is generic over the scalar type (`f32`/`f64`) through
//! [`scalar::Scalar`]; the aliases below fix the precision used by training
//! and by test oracles respectively.

pub mod augment;
pub mod autograd;
pub mod cli;
pub mod corpus;
pub mod dsp;
pub mod eval;
pub mod model;
pub mod scalar;
pub mod train;
pub mod uncertainty;

pub use scalar::Scalar;

/// Precision used for training and inference.
pub type Real = f32;
/// Precision used by gradient checks and numeric oracles.
pub type Oracle = f64;

/// Tape over the training precision.
pub type TapeReal = autograd::Tape<Real>;
/// Tape over the oracle precision.
pub type TapeOracle = autograd::Tape<Oracle>;
