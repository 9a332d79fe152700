//! Deterministic signal-processing primitives shared by the model, the
//! corpus generator, and the metric suite: STFT magnitudes, log-mel
//! spectrograms, autocorrelation F0 with a voicing decision, and mel-cepstra.
//!
//! Everything here is a pure function; no global state, safe to call
//! concurrently.

mod mcep;
mod mel;
mod pitch;
mod stft;

pub use mcep::extract_mcep;
pub use mel::{mel_filterbank, mel_spectrogram, MEL_LOG_EPS};
pub use pitch::{extract_f0, F0Config};
pub use stft::stft;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("waveform length {len} is shorter than the analysis window {win}")]
    WaveformTooShort { len: usize, win: usize },
    #[error("requested {n_mels} mel bands but the spectrogram has only {bins} bins")]
    TooManyMels { n_mels: usize, bins: usize },
    #[error("invalid frequency range: fmin {fmin} must be < fmax {fmax} <= Nyquist {nyquist}")]
    InvalidFrequencyRange { fmin: f64, fmax: f64, nyquist: f64 },
    #[error("mel-cepstrum order {order} must be smaller than n_mels {n_mels}")]
    OrderTooHigh { order: usize, n_mels: usize },
}

/// STFT magnitude spectrogram, `frames x (n_fft/2 + 1)` bins.
#[derive(Debug, Clone)]
pub struct Spectrogram<T: Scalar> {
    pub magnitudes: Array2<T>,
    pub n_fft: usize,
    pub hop_length: usize,
    pub win_length: usize,
    pub sample_rate: u32,
}

impl<T: Scalar> Spectrogram<T> {
    pub fn frames(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn bins(&self) -> usize {
        self.magnitudes.ncols()
    }
}

/// Log-magnitude mel spectrogram, `frames x n_mels`.
#[derive(Debug, Clone)]
pub struct MelSpectrogram<T: Scalar> {
    pub values: Array2<T>,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub hop_length: usize,
    pub sample_rate: u32,
}

impl<T: Scalar> MelSpectrogram<T> {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }
}

/// Per-frame F0 in Hz (0 when unvoiced) plus the voicing decision.
#[derive(Debug, Clone)]
pub struct PitchTrack<T: Scalar> {
    pub f0: Vec<T>,
    pub voiced: Vec<bool>,
    pub hop_length: usize,
    pub sample_rate: u32,
}

impl<T: Scalar> PitchTrack<T> {
    pub fn frames(&self) -> usize {
        self.f0.len()
    }
}

/// Truncated DCT-II mel-cepstra, `frames x (order + 1)`.
#[derive(Debug, Clone)]
pub struct McepSequence<T: Scalar> {
    pub coefficients: Array2<T>,
    pub order: usize,
}

impl<T: Scalar> McepSequence<T> {
    pub fn frames(&self) -> usize {
        self.coefficients.nrows()
    }
}

/// Analysis settings shared across the pipeline. `fmax = None` means the
/// Nyquist frequency of whatever signal is being analyzed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeatureConfig {
    pub n_fft: usize,
    pub hop_length: usize,
    pub win_length: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: Option<f64>,
    pub mcep_order: usize,
    pub f0: F0Config,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            n_fft: 1024,
            hop_length: 256,
            win_length: 1024,
            n_mels: 80,
            fmin: 0.0,
            fmax: None,
            mcep_order: 13,
            f0: F0Config::default(),
        }
    }
}

impl FeatureConfig {
    pub fn fmax_for(&self, sample_rate: u32) -> f64 {
        self.fmax.unwrap_or(sample_rate as f64 / 2.0)
    }

    /// Full waveform -> log-mel pipeline with this config.
    pub fn log_mel<T: Scalar + rustfft::FftNum>(
        &self,
        waveform: &[T],
        sample_rate: u32,
    ) -> Result<MelSpectrogram<T>, DspError> {
        let spec = stft(waveform, sample_rate, self.n_fft, self.hop_length, self.win_length)?;
        mel_spectrogram(&spec, self.n_mels, self.fmin, self.fmax_for(sample_rate))
    }
}
