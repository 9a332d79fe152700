use ndarray::Array2;

use super::{DspError, MelSpectrogram, Spectrogram};
use crate::scalar::Scalar;

/// Floor added before the log so silence maps to `ln(MEL_LOG_EPS)`.
pub const MEL_LOG_EPS: f64 = 1e-5;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank, `n_mels x (n_fft/2 + 1)`, peak height 1.
pub fn mel_filterbank<T: Scalar>(
    n_mels: usize,
    n_fft: usize,
    sample_rate: u32,
    fmin: f64,
    fmax: f64,
) -> Array2<T> {
    let bins = n_fft / 2 + 1;
    let mel_lo = hz_to_mel(fmin);
    let mel_hi = hz_to_mel(fmax);
    let centers: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut fb = Array2::<T>::zeros((n_mels, bins));
    for m in 0..n_mels {
        let (lo, mid, hi) = (centers[m], centers[m + 1], centers[m + 2]);
        for k in 0..bins {
            let f = k as f64 * sample_rate as f64 / n_fft as f64;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= mid {
                (f - lo) / (mid - lo)
            } else {
                (hi - f) / (hi - mid)
            };
            if w > 0.0 {
                fb[(m, k)] = T::from_config(w);
            }
        }
    }
    fb
}

/// Apply a triangular mel filterbank to STFT magnitudes and take
/// `ln(x + MEL_LOG_EPS)`.
pub fn mel_spectrogram<T: Scalar>(
    spec: &Spectrogram<T>,
    n_mels: usize,
    fmin: f64,
    fmax: f64,
) -> Result<MelSpectrogram<T>, DspError> {
    let bins = spec.bins();
    if n_mels > bins {
        return Err(DspError::TooManyMels { n_mels, bins });
    }
    let nyquist = spec.sample_rate as f64 / 2.0;
    if !(fmin < fmax && fmax <= nyquist) {
        return Err(DspError::InvalidFrequencyRange { fmin, fmax, nyquist });
    }

    let fb = mel_filterbank::<T>(n_mels, spec.n_fft, spec.sample_rate, fmin, fmax);
    let eps = T::from_config(MEL_LOG_EPS);
    let mut values = spec.magnitudes.dot(&fb.t());
    values.mapv_inplace(|v| (v + eps).ln());

    Ok(MelSpectrogram {
        values,
        n_mels,
        fmin,
        fmax,
        hop_length: spec.hop_length,
        sample_rate: spec.sample_rate,
    })
}
