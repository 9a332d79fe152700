use ndarray::Array2;

use super::{DspError, McepSequence, MelSpectrogram};
use crate::scalar::Scalar;

/// Per-frame type-II DCT of the log-mel vector, truncated to coefficients
/// `0..=order`.
pub fn extract_mcep<T: Scalar>(
    mel: &MelSpectrogram<T>,
    order: usize,
) -> Result<McepSequence<T>, DspError> {
    let m = mel.n_mels;
    if order >= m {
        return Err(DspError::OrderTooHigh { order, n_mels: m });
    }

    // cos(pi * k * (2j + 1) / (2M)) table, (order+1) x M.
    let mut table = Array2::<T>::zeros((order + 1, m));
    for k in 0..=order {
        for j in 0..m {
            let angle = std::f64::consts::PI * k as f64 * (2 * j + 1) as f64 / (2 * m) as f64;
            table[(k, j)] = T::from_config(angle.cos());
        }
    }

    let coefficients = mel.values.dot(&table.t());
    Ok(McepSequence { coefficients, order })
}
