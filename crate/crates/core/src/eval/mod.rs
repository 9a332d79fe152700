//! Objective metric suite: log-F0 RMSE, mel-cepstral distortion, semitone
//! accuracy and voiced/unvoiced error, plus corpus-level evaluation over
//! paired reference/hypothesis directories, table-style reports and stacked
//! spectrogram comparison plots.

mod metrics;
mod plot;
mod report;

pub use metrics::{log_f0_rmse, mcd, semitone_accuracy, vuv_error};
pub use plot::{plot_mel_comparison, render_mel_image};
pub use report::{render_report, ReportFiles};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{wav, CorpusError};
use crate::dsp::{extract_f0, extract_mcep, mel_spectrogram, stft, DspError, FeatureConfig};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no overlapping utterance ids between reference and hypothesis directories")]
    EmptyIntersection,
    #[error("mel-cepstral order mismatch: {0} vs {1}")]
    OrderMismatch(usize, usize),
    #[error("sample rate mismatch for '{id}': ref {ref_rate} vs hyp {hyp_rate}")]
    SampleRateMismatch { id: String, ref_rate: u32, hyp_rate: u32 },
    #[error("png encoding failed: {0}")]
    Png(String),
}

/// Metrics for one utterance pair. A metric is `None` when it is undefined
/// for the pair (no mutually voiced frame).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct UtteranceMetrics {
    pub id: String,
    pub log_f0_rmse: Option<f64>,
    pub mcd: f64,
    pub semitone_accuracy: Option<f64>,
    pub vuv_error: f64,
    pub frames: usize,
    pub mutually_voiced_frames: usize,
}

/// Corpus-level metric report: per-utterance values plus means over the
/// utterances where each metric is defined.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    pub system: String,
    pub per_utterance: Vec<UtteranceMetrics>,
    pub mean_log_f0_rmse: Option<f64>,
    pub mean_mcd: f64,
    pub mean_semitone_accuracy: Option<f64>,
    pub mean_vuv_error: f64,
    /// Utterances contributing to each metric mean.
    pub counts: MetricCounts,
    /// Hypothesis files without a reference (skipped with a warning).
    pub unmatched: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct MetricCounts {
    pub log_f0_rmse: usize,
    pub mcd: usize,
    pub semitone_accuracy: usize,
    pub vuv_error: usize,
}

fn wav_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>, EvalError> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir)
        .map_err(|e| EvalError::Io { path: dir.to_path_buf(), source: e })?;
    for entry in entries {
        let entry = entry.map_err(|e| EvalError::Io { path: dir.to_path_buf(), source: e })?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("wav") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

/// Evaluate every id present in both directories (`{id}.wav` naming), running
/// F0 extraction and mel-cepstra with the given analysis config. Unmatched
/// hypothesis files are listed and skipped with a warning on stderr.
pub fn evaluate_corpus<T: Scalar + rustfft::FftNum>(
    ref_dir: &Path,
    hyp_dir: &Path,
    features: &FeatureConfig,
    system: &str,
) -> Result<MetricReport, EvalError> {
    let refs = wav_stems(ref_dir)?;
    let hyps = wav_stems(hyp_dir)?;

    let mut unmatched: Vec<String> = Vec::new();
    for id in hyps.keys() {
        if !refs.contains_key(id) {
            eprintln!("warning: hypothesis '{id}' has no reference; skipped");
            unmatched.push(id.clone());
        }
    }

    let mut per_utterance = Vec::new();
    for (id, hyp_path) in &hyps {
        let Some(ref_path) = refs.get(id) else { continue };
        let (sr_ref, ref_wave) = wav::read_wav::<T>(ref_path)?;
        let (sr_hyp, hyp_wave) = wav::read_wav::<T>(hyp_path)?;
        if sr_ref != sr_hyp {
            return Err(EvalError::SampleRateMismatch {
                id: id.clone(),
                ref_rate: sr_ref,
                hyp_rate: sr_hyp,
            });
        }
        per_utterance.push(evaluate_pair(id, &ref_wave, &hyp_wave, sr_ref, features)?);
    }
    if per_utterance.is_empty() {
        return Err(EvalError::EmptyIntersection);
    }

    let mut report = MetricReport {
        system: system.to_string(),
        per_utterance,
        mean_log_f0_rmse: None,
        mean_mcd: 0.0,
        mean_semitone_accuracy: None,
        mean_vuv_error: 0.0,
        counts: MetricCounts::default(),
        unmatched,
    };
    aggregate(&mut report);
    Ok(report)
}

/// Metrics over one in-memory pair.
pub fn evaluate_pair<T: Scalar + rustfft::FftNum>(
    id: &str,
    ref_wave: &[T],
    hyp_wave: &[T],
    sample_rate: u32,
    features: &FeatureConfig,
) -> Result<UtteranceMetrics, EvalError> {
    let f0_ref = extract_f0(ref_wave, sample_rate, features.hop_length, &features.f0);
    let f0_hyp = extract_f0(hyp_wave, sample_rate, features.hop_length, &features.f0);

    let fmax = features.fmax_for(sample_rate);
    let mel_of = |wave: &[T]| -> Result<_, EvalError> {
        let spec =
            stft(wave, sample_rate, features.n_fft, features.hop_length, features.win_length)?;
        Ok(mel_spectrogram(&spec, features.n_mels, features.fmin, fmax)?)
    };
    let mcep_ref = extract_mcep(&mel_of(ref_wave)?, features.mcep_order)?;
    let mcep_hyp = extract_mcep(&mel_of(hyp_wave)?, features.mcep_order)?;

    let frames = f0_ref.frames().min(f0_hyp.frames());
    let mutually_voiced = (0..frames)
        .filter(|&t| f0_ref.voiced[t] && f0_hyp.voiced[t])
        .count();

    Ok(UtteranceMetrics {
        id: id.to_string(),
        log_f0_rmse: log_f0_rmse(&f0_ref, &f0_hyp),
        mcd: mcd(&mcep_ref, &mcep_hyp).map_err(|(a, b)| EvalError::OrderMismatch(a, b))?,
        semitone_accuracy: semitone_accuracy(&f0_ref, &f0_hyp),
        vuv_error: vuv_error(&f0_ref, &f0_hyp),
        frames,
        mutually_voiced_frames: mutually_voiced,
    })
}

fn aggregate(report: &mut MetricReport) {
    let mut f0_sum = 0.0;
    let mut st_sum = 0.0;
    let mut mcd_sum = 0.0;
    let mut vuv_sum = 0.0;
    for u in &report.per_utterance {
        if let Some(v) = u.log_f0_rmse {
            f0_sum += v;
            report.counts.log_f0_rmse += 1;
        }
        if let Some(v) = u.semitone_accuracy {
            st_sum += v;
            report.counts.semitone_accuracy += 1;
        }
        mcd_sum += u.mcd;
        report.counts.mcd += 1;
        vuv_sum += u.vuv_error;
        report.counts.vuv_error += 1;
    }
    if report.counts.log_f0_rmse > 0 {
        report.mean_log_f0_rmse = Some(f0_sum / report.counts.log_f0_rmse as f64);
    }
    if report.counts.semitone_accuracy > 0 {
        report.mean_semitone_accuracy = Some(st_sum / report.counts.semitone_accuracy as f64);
    }
    report.mean_mcd = mcd_sum / report.counts.mcd as f64;
    report.mean_vuv_error = vuv_sum / report.counts.vuv_error as f64;
}

#[cfg(test)]
mod tests;
