//! Posterior-uncertainty machinery: the fixed interval grid that frame
//! latents are resampled onto, the pooled squared-error target, and the
//! prediction loss. The predictor network itself (two 1-D conv layers plus a
//! per-step scalar projection) lives with the other networks in
//! [`crate::model`] and consumes [`interp_matrix`] for its input resampling.

use ndarray::Array2;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("waveform with {len} samples is shorter than the {grid} interval grid")]
    TooShort { len: usize, grid: usize },
    #[error("predicted and target tracks differ in length: {u} vs {d}")]
    LengthMismatch { u: usize, d: usize },
}

/// Predicted uncertainty and its supervision target on the interval grid.
#[derive(Debug, Clone)]
pub struct UncertaintyTrack<T: Scalar> {
    /// Predicted per-interval uncertainty, length L.
    pub u: Vec<T>,
    /// Pooled squared reconstruction error per interval, length L.
    pub d: Vec<T>,
    /// Samples per interval before the tail fold.
    pub samples_per_interval: usize,
}

impl<T: Scalar> UncertaintyTrack<T> {
    pub fn new(u: Vec<T>, d: Vec<T>, samples_per_interval: usize) -> Result<Self, UncertaintyError> {
        if u.len() != d.len() {
            return Err(UncertaintyError::LengthMismatch { u: u.len(), d: d.len() });
        }
        Ok(UncertaintyTrack { u, d, samples_per_interval })
    }

    pub fn loss(&self) -> T {
        uncertainty_loss(&self.u, &self.d)
    }
}

/// Linear-interpolation matrix `L x frames`: row `t` holds the weights that
/// resample a frame sequence onto grid step `t`. Rows sum to 1, so constant
/// sequences stay constant.
pub fn interp_matrix<T: Scalar>(frames: usize, grid: usize) -> Array2<T> {
    assert!(frames >= 1 && grid >= 1);
    let mut m = Array2::<T>::zeros((grid, frames));
    for t in 0..grid {
        let pos = if grid == 1 {
            (frames - 1) as f64 / 2.0
        } else {
            t as f64 * (frames - 1) as f64 / (grid - 1) as f64
        };
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(frames - 1);
        let frac = pos - lo as f64;
        m[(t, lo)] = m[(t, lo)] + T::from_config(1.0 - frac);
        if hi != lo {
            m[(t, hi)] = m[(t, hi)] + T::from_config(frac);
        }
    }
    m
}

/// Pooled squared error between two waveforms on an L-step interval grid:
/// the samples are split into L contiguous runs of `floor(T / L)` samples
/// (remainder folded into the last run) and each run contributes its mean
/// squared difference.
pub fn target_distance<T: Scalar>(
    x: &[T],
    z_hat: &[T],
    grid: usize,
) -> Result<(Vec<T>, usize), UncertaintyError> {
    let len = x.len().min(z_hat.len());
    if len < grid {
        return Err(UncertaintyError::TooShort { len, grid });
    }
    let n = len / grid;
    let mut d = Vec::with_capacity(grid);
    for t in 0..grid {
        let start = t * n;
        let end = if t + 1 == grid { len } else { start + n };
        let mut acc = T::zero();
        for i in start..end {
            let e = x[i] - z_hat[i];
            acc += e * e;
        }
        d.push(acc / T::from_config((end - start) as f64));
    }
    Ok((d, n))
}

/// Mean squared gap between target distance and predicted uncertainty over
/// the L grid steps.
pub fn uncertainty_loss<T: Scalar>(u: &[T], d: &[T]) -> T {
    assert_eq!(u.len(), d.len(), "tracks must share the grid");
    let mut acc = T::zero();
    for (ut, dt) in u.iter().zip(d) {
        let gap = *dt - *ut;
        acc += gap * gap;
    }
    acc / T::from_config(u.len() as f64)
}
