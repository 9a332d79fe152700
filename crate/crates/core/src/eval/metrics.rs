//! Frame-level objective metrics. Tracks are aligned by index after trimming
//! to the shorter frame count; no time warping.

use crate::dsp::{McepSequence, PitchTrack};
use crate::scalar::Scalar;

/// RMSE of natural-log F0 over frames voiced in both tracks; `None` when no
/// frame is mutually voiced.
pub fn log_f0_rmse<T: Scalar>(reference: &PitchTrack<T>, hypothesis: &PitchTrack<T>) -> Option<f64> {
    let frames = reference.frames().min(hypothesis.frames());
    let mut acc = 0.0f64;
    let mut n = 0usize;
    for t in 0..frames {
        if reference.voiced[t] && hypothesis.voiced[t] {
            let d = reference.f0[t].to_f64().unwrap().ln() - hypothesis.f0[t].to_f64().unwrap().ln();
            acc += d * d;
            n += 1;
        }
    }
    if n == 0 {
        None
    } else {
        Some((acc / n as f64).sqrt())
    }
}

/// Mel-cepstral distortion: `(10 * sqrt(2) / ln 10) * sqrt(sum_k (c_k - c'_k)^2)`
/// per frame over coefficients `1..=order` (coefficient 0 excluded), averaged
/// over frames. Errors with the two orders on mismatch.
pub fn mcd<T: Scalar>(
    reference: &McepSequence<T>,
    hypothesis: &McepSequence<T>,
) -> Result<f64, (usize, usize)> {
    if reference.order != hypothesis.order {
        return Err((reference.order, hypothesis.order));
    }
    let frames = reference.frames().min(hypothesis.frames());
    if frames == 0 {
        return Ok(0.0);
    }
    let scale = 10.0 * 2.0f64.sqrt() / 10.0f64.ln();
    let mut acc = 0.0f64;
    for t in 0..frames {
        let mut sq = 0.0f64;
        for k in 1..=reference.order {
            let d = reference.coefficients[(t, k)].to_f64().unwrap()
                - hypothesis.coefficients[(t, k)].to_f64().unwrap();
            sq += d * d;
        }
        acc += scale * sq.sqrt();
    }
    Ok(acc / frames as f64)
}

fn nearest_semitone(hz: f64) -> i64 {
    (69.0 + 12.0 * (hz / 440.0).log2()).round() as i64
}

/// Percentage of mutually voiced frames whose nearest equal-temperament
/// semitone matches; `None` when no frame is mutually voiced.
pub fn semitone_accuracy<T: Scalar>(
    reference: &PitchTrack<T>,
    hypothesis: &PitchTrack<T>,
) -> Option<f64> {
    let frames = reference.frames().min(hypothesis.frames());
    let mut hits = 0usize;
    let mut n = 0usize;
    for t in 0..frames {
        if reference.voiced[t] && hypothesis.voiced[t] {
            n += 1;
            if nearest_semitone(reference.f0[t].to_f64().unwrap())
                == nearest_semitone(hypothesis.f0[t].to_f64().unwrap())
            {
                hits += 1;
            }
        }
    }
    if n == 0 {
        None
    } else {
        Some(100.0 * hits as f64 / n as f64)
    }
}

/// Percentage of frames whose voicing flags differ.
pub fn vuv_error<T: Scalar>(reference: &PitchTrack<T>, hypothesis: &PitchTrack<T>) -> f64 {
    let frames = reference.frames().min(hypothesis.frames());
    if frames == 0 {
        return 0.0;
    }
    let mismatches = (0..frames)
        .filter(|&t| reference.voiced[t] != hypothesis.voiced[t])
        .count();
    100.0 * mismatches as f64 / frames as f64
}
