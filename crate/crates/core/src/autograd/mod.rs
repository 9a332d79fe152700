//! Minimal reverse-mode automatic differentiation on dynamic-dimension
//! `ndarray` values.
//!
//! A [`Tape`] is built per forward pass; every operation appends a node that
//! knows how to push gradients to its parents. Parameters enter the graph as
//! named leaves so that, after [`Tape::backward`], gradients can be collected
//! per parameter name regardless of how many times a parameter was bound.
//!
//! The op set is exactly what the synthesis networks need: elementwise math,
//! matrix products, 1-D/2-D convolutions (plus the transposed variant used by
//! the decoder upsampler), gathers for embeddings and length regulation,
//! softmax and layer norm for the attention blocks, and weight normalization.

mod conv;
pub mod numeric;
mod tape;

pub use tape::{Gradients, Tape, Var};
