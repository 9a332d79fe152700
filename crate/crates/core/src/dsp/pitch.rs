use serde::{Deserialize, Serialize};

use super::PitchTrack;
use crate::scalar::Scalar;

/// Settings for the normalized-autocorrelation pitch estimator.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct F0Config {
    pub fmin: f64,
    pub fmax: f64,
    /// Frame is voiced only if the peak normalized autocorrelation reaches this.
    pub periodicity_threshold: f64,
    /// Frame is voiced only if its RMS reaches this.
    pub rms_threshold: f64,
}

impl Default for F0Config {
    fn default() -> Self {
        F0Config { fmin: 50.0, fmax: 1000.0, periodicity_threshold: 0.45, rms_threshold: 1e-3 }
    }
}

/// Per-frame F0 by normalized autocorrelation. Frames are centered on
/// `t * hop_length`, matching the STFT convention, so pitch frames align
/// with mel frames. Each candidate lag is correlated over two of its own
/// periods, which keeps the analysis local to the frame center. Degenerate
/// audio comes back all-unvoiced.
pub fn extract_f0<T: Scalar>(
    waveform: &[T],
    sample_rate: u32,
    hop_length: usize,
    cfg: &F0Config,
) -> PitchTrack<T> {
    assert!(cfg.fmin < cfg.fmax, "fmin must be below fmax");
    let sr = sample_rate as f64;
    let tau_min = (sr / cfg.fmax).floor().max(2.0) as usize;
    let tau_max = (sr / cfg.fmin).ceil() as usize;
    // Widest analysis span: a 2*tau window plus the tau shift, at tau_max.
    let span = 3 * tau_max;
    let frames = 1 + waveform.len() / hop_length;

    let mut f0 = vec![T::zero(); frames];
    let mut voiced = vec![false; frames];
    let mut segment = vec![0.0f64; span + 2];

    for t in 0..frames {
        let center = (t * hop_length) as isize;
        let start = center - (segment.len() / 2) as isize;
        for (j, slot) in segment.iter_mut().enumerate() {
            let src = start + j as isize;
            *slot = if src >= 0 && (src as usize) < waveform.len() {
                waveform[src as usize].to_f64().unwrap()
            } else {
                0.0
            };
        }
        let mid = segment.len() / 2;

        // Silence gate on the central 10 ms.
        let gate = ((0.01 * sr) as usize).max(16).min(mid);
        let gate_energy: f64 =
            segment[mid - gate / 2..mid + gate / 2].iter().map(|v| v * v).sum();
        if (gate_energy / gate as f64).sqrt() < cfg.rms_threshold {
            continue;
        }

        // Normalized cross-correlation, each lag over two of its own periods
        // centered on the frame.
        let mut corr = vec![0.0f64; tau_max + 1];
        for tau in tau_min..=tau_max {
            let w = 2 * tau;
            let base = mid - (w + tau) / 2;
            let mut dot = 0.0f64;
            let mut e0 = 0.0f64;
            let mut e1 = 0.0f64;
            for i in 0..w {
                let a = segment[base + i];
                let b = segment[base + i + tau];
                dot += a * b;
                e0 += a * a;
                e1 += b * b;
            }
            let denom = (e0 * e1).sqrt();
            corr[tau] = if denom > 0.0 { dot / denom } else { 0.0 };
        }

        // Local maxima with parabolic refinement of both position and height;
        // refined heights are free of the integer-lag sampling penalty, so
        // candidates at different lags compare fairly.
        let mut candidates: Vec<(f64, f64)> = Vec::new(); // (tau_hat, r_hat)
        for tau in tau_min..=tau_max {
            let left = if tau > tau_min { corr[tau - 1] } else { f64::NEG_INFINITY };
            let right = if tau < tau_max { corr[tau + 1] } else { f64::NEG_INFINITY };
            if corr[tau] < left || corr[tau] < right {
                continue;
            }
            let (mut tau_hat, mut r_hat) = (tau as f64, corr[tau]);
            if tau > tau_min && tau < tau_max {
                let (a, b, c) = (corr[tau - 1], corr[tau], corr[tau + 1]);
                let denom = a - 2.0 * b + c;
                if denom.abs() > 1e-12 {
                    let delta = (0.5 * (a - c) / denom).clamp(-1.0, 1.0);
                    tau_hat += delta;
                    r_hat = b - 0.25 * (a - c) * delta;
                }
            }
            candidates.push((tau_hat, r_hat));
        }

        let peak = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        if peak < cfg.periodicity_threshold {
            continue;
        }

        // Shortest lag within 3% of the refined peak; a multiple of the true
        // period correlates equally well, so prefer the period itself, but do
        // not let strong harmonics at shorter lags steal the pick.
        let (tau_hat, _) = candidates
            .iter()
            .copied()
            .find(|c| c.1 >= 0.97 * peak)
            .expect("peak candidate exists");

        let hz = (sr / tau_hat).clamp(cfg.fmin, cfg.fmax);
        f0[t] = T::from_config(hz);
        voiced[t] = true;
    }

    PitchTrack { f0, voiced, hop_length, sample_rate }
}
