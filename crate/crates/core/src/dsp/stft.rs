use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{FftNum, FftPlanner};

use super::{DspError, Spectrogram};
use crate::scalar::Scalar;

/// Periodic Hann window of length `n`.
pub(crate) fn hann_window<T: Scalar>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| {
            let x = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            T::from_config(0.5 * (1.0 - x.cos()))
        })
        .collect()
}

/// Center-padded magnitude STFT. Frame `t` is centered on sample
/// `t * hop_length`; the frame count is `1 + floor(len / hop_length)`.
pub fn stft<T: Scalar + FftNum>(
    waveform: &[T],
    sample_rate: u32,
    n_fft: usize,
    hop_length: usize,
    win_length: usize,
) -> Result<Spectrogram<T>, DspError> {
    assert!(win_length <= n_fft, "win_length must not exceed n_fft");
    if waveform.len() < win_length {
        return Err(DspError::WaveformTooShort { len: waveform.len(), win: win_length });
    }

    let frames = 1 + waveform.len() / hop_length;
    let bins = n_fft / 2 + 1;
    let window = hann_window::<T>(win_length);
    // The window sits centered inside the n_fft frame.
    let win_offset = (n_fft - win_length) / 2;

    let mut planner = FftPlanner::<T>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n_fft];

    let mut magnitudes = Array2::<T>::zeros((frames, bins));
    let half = (n_fft / 2) as isize;
    for t in 0..frames {
        for slot in buf.iter_mut() {
            *slot = Complex::new(T::zero(), T::zero());
        }
        let center = (t * hop_length) as isize;
        for (j, &w) in window.iter().enumerate() {
            let src = center - half + (win_offset + j) as isize;
            if src >= 0 && (src as usize) < waveform.len() {
                buf[win_offset + j] = Complex::new(waveform[src as usize] * w, T::zero());
            }
        }
        fft.process(&mut buf);
        for (k, slot) in buf.iter().take(bins).enumerate() {
            magnitudes[(t, k)] = (slot.re * slot.re + slot.im * slot.im).sqrt();
        }
    }

    Ok(Spectrogram { magnitudes, n_fft, hop_length, win_length, sample_rate })
}
