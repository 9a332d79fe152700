//! Loss assembly (KL, mel reconstruction, adversarial, uncertainty), the
//! optimizer schedule, and the staged training strategies with exact resume.

mod optimizer;
mod runner;
mod step;
mod strategy;

pub use optimizer::{AdamWState, OptimizerConfig};
pub use runner::{
    load_training_corpus, run_strategy, uncertainty_eval, uncertainty_eval_windowed,
    LoadedUtterance, RunOptions, RunSummary,
};
pub use step::{train_step, CropItem, StepInspection, TrainState};
pub use strategy::{Flags, ScheduleConfig, TrainingStrategy, STRATEGY_NAMES};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{AugmentConfig, AugmentError};
use crate::corpus::CorpusError;
use crate::dsp::DspError;
use crate::model::{CheckpointError, GaussianParams, ModelConfig, ModelError, SvsModel};
use crate::scalar::Scalar;
use crate::uncertainty::UncertaintyError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
    #[error("non-finite {term} loss at step {step}")]
    NonFiniteLoss { term: String, step: u64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown strategy '{0}': expected one of B, B+D, B&U, B&U&(U+D)")]
    UnknownStrategy(String),
    #[error("checkpoint was trained with strategy {checkpoint}, requested {requested}")]
    StrategyMismatch { checkpoint: String, requested: String },
    #[error("corpus split '{0}' is empty")]
    EmptySplit(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Loss term weights for the generator objective.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LossWeights {
    pub kl: f64,
    pub recon: f64,
    pub adv: f64,
    /// Off by default; retained for parity with the model family.
    pub feature_match: f64,
    pub uncertainty: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { kl: 1.0, recon: 45.0, adv: 1.0, feature_match: 0.0, uncertainty: 10.0 }
    }
}

/// Which tensor feeds the discriminator's real branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealBranch {
    /// The decoded posterior sample.
    PosteriorSample,
    /// The ground-truth waveform.
    GroundTruth,
}

/// Adversarial objective form: the written expectation terms as-is, or their
/// least-squares counterparts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialForm {
    Literal,
    LeastSquares,
}

/// Which prior-path tensor the uncertainty predictor reads. At desk scale
/// the sampled latent is dominated by the reparameterization noise (sigma is
/// comparable to the mean), which starves the predictor of signal; the prior
/// mean carries the same content without the per-draw noise and is the
/// default. The sampled variant remains selectable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorInput {
    /// The sampled latent fed to the decoder.
    SampledLatent,
    /// The prior mean (noise-free content summary).
    PriorMean,
}

/// The complete training configuration. Every field is serialized in the
/// shipped default config file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub weights: LossWeights,
    pub augment: AugmentConfig,
    pub optimizer: OptimizerConfig,
    pub schedule: ScheduleConfig,
    pub adversarial_form: AdversarialForm,
    pub real_branch: RealBranch,
    pub crop_seconds: f64,
    pub batch_size: usize,
    /// Let gradients flow into the generator through the uncertainty target.
    pub backprop_through_target: bool,
    pub predictor_input: PredictorInput,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            weights: LossWeights::default(),
            augment: AugmentConfig::default(),
            optimizer: OptimizerConfig::default(),
            schedule: ScheduleConfig::default(),
            adversarial_form: AdversarialForm::LeastSquares,
            real_branch: RealBranch::PosteriorSample,
            crop_seconds: 1.0,
            batch_size: 1,
            backprop_through_target: false,
            predictor_input: PredictorInput::PriorMean,
        }
    }
}

/// Per-term loss values for one step (or epoch means).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LossReport {
    pub kl: f64,
    pub recon: f64,
    pub adv_g: f64,
    pub adv_d: f64,
    pub uncertainty: f64,
    pub feature_match: f64,
    pub total_gen: f64,
    pub total_disc: f64,
}

/// One line of the structured training log.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub flags: Flags,
    pub losses: LossReport,
    pub lr: f64,
}

/// Closed-form Gaussian KL divergence `KL(posterior || prior)`, averaged over
/// frames and dimensions.
pub fn kl_loss<T: Scalar>(
    posterior: &GaussianParams<T>,
    prior: &GaussianParams<T>,
) -> Result<T, TrainError> {
    if posterior.mean.dim() != prior.mean.dim()
        || posterior.log_std.dim() != prior.log_std.dim()
        || posterior.mean.dim() != posterior.log_std.dim()
    {
        return Err(TrainError::ShapeMismatch(format!(
            "KL shapes differ: posterior {:?} vs prior {:?}",
            posterior.mean.dim(),
            prior.mean.dim()
        )));
    }
    let half = T::from_config(0.5);
    let two = T::from_config(2.0);
    let n = T::from_config(posterior.mean.len() as f64);
    let mut acc = T::zero();
    for i in 0..posterior.mean.nrows() {
        for j in 0..posterior.mean.ncols() {
            let (mq, lq) = (posterior.mean[(i, j)], posterior.log_std[(i, j)]);
            let (mp, lp) = (prior.mean[(i, j)], prior.log_std[(i, j)]);
            let dm = mq - mp;
            acc += lp - lq + half * ((two * (lq - lp)).exp() + dm * dm * (-two * lp).exp()) - half;
        }
    }
    Ok(acc / n)
}

/// Mean absolute difference of two log-mel matrices.
pub(crate) fn mel_l1<T: Scalar>(a: &ndarray::Array2<T>, b: &ndarray::Array2<T>) -> T {
    assert_eq!(a.dim(), b.dim(), "mel shapes must match");
    let n = T::from_config(a.len() as f64);
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        acc += (*x - *y).abs();
    }
    acc / n
}

/// L1 distance between the log-mel spectrograms of two waveforms, trimmed to
/// their common length.
pub fn reconstruction_loss<T: Scalar + rustfft::FftNum>(
    model: &SvsModel<T>,
    x: &[T],
    x_hat: &[T],
) -> Result<T, TrainError> {
    let len = x.len().min(x_hat.len());
    if len < model.cfg.features.n_fft {
        return Err(TrainError::ShapeMismatch(format!(
            "waveform overlap of {len} samples is shorter than one analysis window"
        )));
    }
    let mel_x = model.mel_const(&x[..len])?;
    let mel_y = model.mel_const(&x_hat[..len])?;
    Ok(mel_l1(&mel_x, &mel_y))
}

/// Discriminator and generator adversarial losses over per-component scores.
/// The literal form scores `mean(1 - D_real) + mean(D_fake)` against
/// `mean(-D_fake)`; the least-squares form squares the same terms.
pub fn adversarial_losses<T: Scalar>(
    real_scores: &[T],
    fake_scores: &[T],
    form: AdversarialForm,
) -> Result<(T, T), TrainError> {
    if real_scores.is_empty() || fake_scores.is_empty() {
        return Err(TrainError::ShapeMismatch(
            "adversarial losses need at least one score per side".to_string(),
        ));
    }
    let nr = T::from_config(real_scores.len() as f64);
    let nf = T::from_config(fake_scores.len() as f64);
    let one = T::one();
    match form {
        AdversarialForm::Literal => {
            let d_real: T = real_scores.iter().map(|&s| one - s).sum::<T>() / nr;
            let d_fake: T = fake_scores.iter().copied().sum::<T>() / nf;
            let g: T = fake_scores.iter().map(|&s| -s).sum::<T>() / nf;
            Ok((d_real + d_fake, g))
        }
        AdversarialForm::LeastSquares => {
            let d_real: T = real_scores.iter().map(|&s| (one - s) * (one - s)).sum::<T>() / nr;
            let d_fake: T = fake_scores.iter().map(|&s| s * s).sum::<T>() / nf;
            let g: T = fake_scores.iter().map(|&s| (one - s) * (one - s)).sum::<T>() / nf;
            Ok((d_real + d_fake, g))
        }
    }
}
