//! Scalar abstraction over the floating-point element type.
//!
//! All numeric kernels in this crate (DSP, autograd, model, metrics) are
//! generic over [`Scalar`] so the same code runs in `f32` for training speed
//! and `f64` for gradient checks and oracles. Concrete aliases live at the
//! crate root.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point element type: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Type tag written into checkpoint indexes.
    const DTYPE: &'static str;
    /// Bytes per element in serialized form.
    const BYTE_WIDTH: usize;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(src: &[u8]) -> Self;
    /// IEEE bit pattern widened to 64 bits (for hashing and bit equality).
    fn to_bits_u64(self) -> u64;

    /// Lossless conversion from an `f64` literal (hyperparameters, constants).
    fn from_config(v: f64) -> Self {
        Self::from_f64(v).expect("finite config value")
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const BYTE_WIDTH: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(src: &[u8]) -> Self {
        f32::from_le_bytes(src[..4].try_into().expect("4 bytes"))
    }

    fn to_bits_u64(self) -> u64 {
        self.to_bits() as u64
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const BYTE_WIDTH: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(src: &[u8]) -> Self {
        f64::from_le_bytes(src[..8].try_into().expect("8 bytes"))
    }

    fn to_bits_u64(self) -> u64 {
        self.to_bits()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_bytes() {
        let mut buf = Vec::new();
        1.5f32.write_le(&mut buf);
        assert_eq!(f32::read_le(&buf), 1.5);
        buf.clear();
        (-0.125f64).write_le(&mut buf);
        assert_eq!(f64::read_le(&buf), -0.125);
    }
}
