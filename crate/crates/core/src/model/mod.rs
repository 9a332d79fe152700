//! The CVAE+GAN networks: posterior encoder over log-mel, score-conditioned
//! prior encoder with relative self-attention, a shared upsampling decoder,
//! and three discriminator families (multi-resolution spectrogram,
//! multi-period, multi-scale), each split into a feature encoder and a
//! scoring head so augmentation can act on the features in between.

pub mod checkpoint;
mod disc;
pub mod layers;
mod nets;
pub mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use disc::{expected_feature_frames, DiscComponentOut};
pub use nets::ScoreFrames;

use ndarray::{Array2, ArrayD, IxDyn};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{AugmentConfig, AugmentDraws, DiscKind};
use crate::autograd::{Tape, Var};
use crate::corpus::{CorpusError, MusicScore, PhonemeInventory};
use crate::dsp::FeatureConfig;
use crate::scalar::Scalar;
use params::{ParamInit, ParamStore};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("score yields zero frames at frame rate {0} Hz")]
    EmptyFrames(f64),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("waveform too short: {len} samples, need at least {need}")]
    WaveformTooShort { len: usize, need: usize },
    #[error("model config mismatch: {0}")]
    ConfigMismatch(String),
}

/// Frame-level diagonal Gaussian.
#[derive(Debug, Clone)]
pub struct GaussianParams<T: Scalar> {
    /// `latent_dim x frames`
    pub mean: Array2<T>,
    pub log_std: Array2<T>,
}

impl<T: Scalar> GaussianParams<T> {
    pub fn frames(&self) -> usize {
        self.mean.ncols()
    }
}

/// Frame-level latent sequence, `latent_dim x frames`.
#[derive(Debug, Clone)]
pub struct LatentSequence<T: Scalar> {
    pub values: Array2<T>,
    pub frame_rate: f64,
}

impl<T: Scalar> LatentSequence<T> {
    pub fn frames(&self) -> usize {
        self.values.ncols()
    }
}

/// A discriminator feature map extracted to plain arrays.
#[derive(Debug, Clone)]
pub struct FeatureMap<T: Scalar> {
    pub values: ArrayD<T>,
    pub kind: DiscKind,
    pub time_axis: usize,
    pub freq_axis: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PosteriorConfig {
    pub hidden: usize,
    pub layers: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PriorConfig {
    pub blocks: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub ffn_kernel: usize,
    /// Relative-attention positions are clipped to `[-rel_window, rel_window]`.
    pub rel_window: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DecoderConfig {
    pub base_channels: usize,
    /// (upsample factor, transposed-conv kernel) per stage; factors multiply
    /// to the feature hop length.
    pub upsample: Vec<(usize, usize)>,
    pub post_kernel: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MrsdConfig {
    pub resolutions: Vec<usize>,
    /// STFT hop = resolution / hop_divisor.
    pub hop_divisor: usize,
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MpdConfig {
    pub periods: Vec<usize>,
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MsdConfig {
    pub scales: Vec<usize>,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub strides: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct UncertaintyPredictorConfig {
    /// Fixed interval-grid length L.
    pub fixed_length: usize,
    pub hidden: usize,
    pub kernel: usize,
}

impl Default for UncertaintyPredictorConfig {
    fn default() -> Self {
        // Wide kernels give each grid step note-scale context; the
        // pooled-error target is smooth at that scale.
        UncertaintyPredictorConfig { fixed_length: 100, hidden: 64, kernel: 9 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub sample_rate: u32,
    pub features: FeatureConfig,
    pub latent_dim: usize,
    /// Fixed standardization of the log-mel encoder input.
    pub mel_norm_mean: f64,
    pub mel_norm_scale: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
    pub posterior: PosteriorConfig,
    pub prior: PriorConfig,
    pub decoder: DecoderConfig,
    pub mrsd: MrsdConfig,
    pub mpd: MpdConfig,
    pub msd: MsdConfig,
    pub uncertainty: UncertaintyPredictorConfig,
    pub inventory: PhonemeInventory,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            sample_rate: 16000,
            features: FeatureConfig::default(),
            latent_dim: 64,
            mel_norm_mean: -5.0,
            mel_norm_scale: 3.0,
            log_std_min: -9.0,
            log_std_max: 4.0,
            posterior: PosteriorConfig { hidden: 96, layers: 4, kernel: 5 },
            prior: PriorConfig { blocks: 2, heads: 2, ffn_hidden: 128, ffn_kernel: 3, rel_window: 16 },
            decoder: DecoderConfig {
                base_channels: 64,
                upsample: vec![(8, 16), (8, 16), (4, 8)],
                post_kernel: 7,
            },
            mrsd: MrsdConfig { resolutions: vec![256, 512, 1024], hop_divisor: 1, channels: vec![8, 16, 32] },
            mpd: MpdConfig { periods: vec![2, 3, 5], channels: vec![16, 32, 64] },
            msd: MsdConfig { scales: vec![1, 2, 4], channels: vec![12, 24, 48], kernel: 11, strides: vec![2, 4, 4] },
            uncertainty: UncertaintyPredictorConfig::default(),
            inventory: PhonemeInventory::default(),
        }
    }
}

impl ModelConfig {
    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.features.hop_length as f64
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let product: usize = self.decoder.upsample.iter().map(|(f, _)| f).product();
        if product != self.features.hop_length {
            return Err(ModelError::ConfigMismatch(format!(
                "decoder upsample product {product} != hop length {}",
                self.features.hop_length
            )));
        }
        for (f, k) in &self.decoder.upsample {
            if k % 2 != 0 || f % 2 != 0 || k < f {
                return Err(ModelError::ConfigMismatch(format!(
                    "upsample stage factor {f} kernel {k}: need even kernel >= even factor"
                )));
            }
        }
        Ok(())
    }
}

/// The full parameter set plus the constant kernels (DFT bases, mel
/// filterbank) shared by every forward pass.
pub struct SvsModel<T: Scalar> {
    pub cfg: ModelConfig,
    pub params: ParamStore<T>,
    pub(crate) layout: nets::ModelLayout,
    pub(crate) consts: nets::ModelConsts<T>,
}

impl<T: Scalar> SvsModel<T> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let layout = nets::ModelLayout::build(&cfg);
        let mut params = ParamStore::new();
        let mut init = ParamInit::new(seed);
        layout.register(&mut params, &mut init);
        let consts = nets::ModelConsts::build(&cfg);
        Ok(SvsModel { cfg, params, layout, consts })
    }

    /// Rebuild a model around checkpointed parameters, verifying the layout.
    pub fn from_parts(cfg: ModelConfig, arrays: &ParamStore<T>) -> Result<Self, ModelError> {
        let mut model = SvsModel::new(cfg, 0)?;
        let expected: Vec<String> = model.params.iter().map(|(n, _)| n.clone()).collect();
        for name in &expected {
            if !arrays.contains(name) {
                return Err(ModelError::ConfigMismatch(format!(
                    "checkpoint is missing parameter {name}"
                )));
            }
            model.params.set(name, arrays.get(name).clone());
        }
        Ok(model)
    }

    /// Frame-level score conditioning via the duration length-regulator.
    pub fn score_frames(&self, score: &MusicScore) -> Result<ScoreFrames, ModelError> {
        nets::score_frames(&self.cfg, score)
    }

    /// Standardized log-mel of a waveform as a plain array (runs the exact
    /// in-graph feature path on a scratch tape).
    pub fn mel_const(&self, wave: &[T]) -> Result<Array2<T>, ModelError> {
        if wave.len() < self.cfg.features.n_fft {
            return Err(ModelError::WaveformTooShort {
                len: wave.len(),
                need: self.cfg.features.n_fft,
            });
        }
        let mut tape = Tape::new();
        let leaf = tape.constant(
            ArrayD::from_shape_vec(IxDyn(&[1, wave.len()]), wave.to_vec()).unwrap(),
        );
        let mel = nets::mel_graph(&mut tape, &self.consts, &self.cfg, leaf);
        let value = tape.value(mel).clone();
        Ok(value
            .into_dimensionality::<ndarray::Ix2>()
            .expect("mel is 2-d"))
    }

    /// In-graph log-mel, `n_mels x frames`.
    pub fn mel_graph(&self, tape: &mut Tape<T>, wave: Var) -> Var {
        nets::mel_graph(tape, &self.consts, &self.cfg, wave)
    }

    /// Posterior encoder: log-mel -> frame Gaussian + sample.
    /// `noise = None` returns the mean (the sigma -> 0 hook).
    pub fn encode_posterior_graph(
        &self,
        tape: &mut Tape<T>,
        mel: &Array2<T>,
        noise: Option<&Array2<T>>,
    ) -> nets::EncodedLatent {
        nets::posterior_forward(tape, &self.layout, &self.params, &self.cfg, mel, noise)
    }

    pub fn encode_prior_graph(
        &self,
        tape: &mut Tape<T>,
        frames: &ScoreFrames,
        noise: Option<&Array2<T>>,
    ) -> nets::EncodedLatent {
        nets::prior_forward(tape, &self.layout, &self.params, &self.cfg, frames, noise)
    }

    pub fn decode_graph(&self, tape: &mut Tape<T>, latent: Var) -> Var {
        nets::decoder_forward(tape, &self.layout, &self.params, latent)
    }

    /// Per-interval uncertainty prediction from a prior latent sequence.
    pub fn predict_uncertainty_graph(&self, tape: &mut Tape<T>, latent: Var) -> Var {
        nets::uncertainty_forward(tape, &self.layout, &self.params, &self.cfg, latent)
    }

    /// Run every discriminator component on a waveform node. When `augment`
    /// is given, features are perturbed in-graph before the scoring heads and
    /// the interval draws are returned for optional sharing.
    #[allow(clippy::type_complexity)]
    pub fn discriminate_graph(
        &self,
        tape: &mut Tape<T>,
        wave: Var,
        augment: Option<(&AugmentConfig, &mut ChaCha8Rng, Option<&AugmentDraws>)>,
    ) -> Result<(Vec<DiscComponentOut>, Option<AugmentDraws>), ModelError> {
        disc::discriminate(tape, &self.layout, &self.params, &self.consts, wave, augment)
    }

    // ------------------------------------------------------------------
    // Array-level convenience wrappers (inference and tests).
    // ------------------------------------------------------------------

    pub fn encode_posterior(
        &self,
        wave: &[T],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(LatentSequence<T>, GaussianParams<T>), ModelError> {
        let mel = self.mel_const(wave)?;
        let mut tape = Tape::new();
        let noise = rng.map(|r| draw_noise::<T>(self.cfg.latent_dim, mel.ncols(), r));
        let out = self.encode_posterior_graph(&mut tape, &mel, noise.as_ref());
        Ok(extract_latent(&tape, &out, self.cfg.frame_rate()))
    }

    pub fn encode_prior(
        &self,
        score: &MusicScore,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(LatentSequence<T>, GaussianParams<T>), ModelError> {
        let frames = self.score_frames(score)?;
        let mut tape = Tape::new();
        let noise = rng.map(|r| draw_noise::<T>(self.cfg.latent_dim, frames.len(), r));
        let out = self.encode_prior_graph(&mut tape, &frames, noise.as_ref());
        Ok(extract_latent(&tape, &out, self.cfg.frame_rate()))
    }

    pub fn decode(&self, latent: &LatentSequence<T>) -> Vec<T> {
        let mut tape = Tape::new();
        let leaf = tape.constant(latent.values.clone().into_dyn());
        let wave = self.decode_graph(&mut tape, leaf);
        tape.value(wave).iter().copied().collect()
    }

    /// Score -> waveform through the prior path with a seeded latent draw.
    pub fn synthesize(&self, score: &MusicScore, seed: u64) -> Result<Vec<T>, ModelError> {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (latent, _) = self.encode_prior(score, Some(&mut rng))?;
        Ok(self.decode(&latent))
    }

    /// Array-level discriminator pass returning (feature map, score) pairs.
    pub fn discriminate(
        &self,
        wave: &[T],
        augment: Option<(&AugmentConfig, &mut ChaCha8Rng)>,
    ) -> Result<Vec<(FeatureMap<T>, T)>, ModelError> {
        let mut tape = Tape::new();
        let leaf = tape.constant(
            ArrayD::from_shape_vec(IxDyn(&[1, wave.len()]), wave.to_vec()).unwrap(),
        );
        let aug = augment.map(|(cfg, rng)| (cfg, rng, None));
        let (outs, _) = self.discriminate_graph(&mut tape, leaf, aug)?;
        Ok(outs
            .into_iter()
            .map(|o| {
                let fm = FeatureMap {
                    values: tape.value(o.feature).clone(),
                    kind: o.kind,
                    time_axis: o.time_axis,
                    freq_axis: o.freq_axis,
                };
                (fm, tape.scalar(o.score))
            })
            .collect())
    }
}

pub fn draw_noise<T: Scalar>(
    dim: usize,
    frames: usize,
    rng: &mut ChaCha8Rng,
) -> Array2<T> {
    Array2::from_shape_fn((dim, frames), |_| {
        let x: f64 = StandardNormal.sample(rng);
        T::from_config(x)
    })
}

fn extract_latent<T: Scalar>(
    tape: &Tape<T>,
    out: &nets::EncodedLatent,
    frame_rate: f64,
) -> (LatentSequence<T>, GaussianParams<T>) {
    let to2 = |v: Var| {
        tape.value(v)
            .clone()
            .into_dimensionality::<ndarray::Ix2>()
            .expect("latent arrays are 2-d")
    };
    (
        LatentSequence { values: to2(out.latent), frame_rate },
        GaussianParams { mean: to2(out.mean), log_std: to2(out.log_std) },
    )
}

#[cfg(test)]
mod tests;
