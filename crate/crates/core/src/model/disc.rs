//! Discriminator families, each split into a feature encoder and a scoring
//! head. MRSD components run an in-graph STFT and 2-D convolutions over
//! (frequency, time); MPD components fold the waveform by a period and
//! convolve along the folded time axis; MSD components run strided 1-D
//! convolutions at several average-pooled scales.

use super::layers::{Conv1dSpec, Conv2dSpec};
use super::nets::{stft_mag_graph, ModelConsts};
use super::params::{ParamInit, ParamStore};
use super::{ModelConfig, ModelError};
use crate::augment::{augment_features, AugmentConfig, AugmentDraws, DiscKind, FeatureRef};
use crate::autograd::{Tape, Var};
use crate::scalar::Scalar;
use rand_chacha::ChaCha8Rng;

pub(super) struct MrsdComponent {
    resolution: usize,
    hop: usize,
    convs: Vec<Conv2dSpec>,
    head: Conv2dSpec,
}

pub(super) struct MpdComponent {
    period: usize,
    convs: Vec<Conv2dSpec>,
    head: Conv2dSpec,
}

pub(super) struct MsdComponent {
    scale: usize,
    convs: Vec<Conv1dSpec>,
    head: Conv1dSpec,
}

pub(super) struct DiscLayout {
    mrsd: Vec<MrsdComponent>,
    mpd: Vec<MpdComponent>,
    msd: Vec<MsdComponent>,
}

impl DiscLayout {
    pub(super) fn build(cfg: &ModelConfig) -> Self {
        let mrsd = cfg
            .mrsd
            .resolutions
            .iter()
            .enumerate()
            .map(|(i, &res)| {
                let prefix = format!("disc/mrsd{i}");
                let mut convs = Vec::new();
                let mut in_ch = 1;
                for (j, &out_ch) in cfg.mrsd.channels.iter().enumerate() {
                    // Downsample frequency fast, keep more time resolution in
                    // the last layer.
                    let stride = if j + 1 == cfg.mrsd.channels.len() { (2, 1) } else { (2, 2) };
                    convs.push(Conv2dSpec {
                        name: format!("{prefix}/conv{j}"),
                        in_ch,
                        out_ch,
                        kernel: (3, 3),
                        stride,
                        pad: (1, 1),
                    });
                    in_ch = out_ch;
                }
                let head = Conv2dSpec {
                    name: format!("{prefix}/head"),
                    in_ch,
                    out_ch: 1,
                    kernel: (3, 3),
                    stride: (1, 1),
                    pad: (1, 1),
                };
                MrsdComponent { resolution: res, hop: res / cfg.mrsd.hop_divisor, convs, head }
            })
            .collect();

        let mpd = cfg
            .mpd
            .periods
            .iter()
            .enumerate()
            .map(|(i, &period)| {
                let prefix = format!("disc/mpd{i}");
                let mut convs = Vec::new();
                let mut in_ch = 1;
                for (j, &out_ch) in cfg.mpd.channels.iter().enumerate() {
                    convs.push(Conv2dSpec {
                        name: format!("{prefix}/conv{j}"),
                        in_ch,
                        out_ch,
                        kernel: (5, 1),
                        stride: (3, 1),
                        pad: (2, 0),
                    });
                    in_ch = out_ch;
                }
                let head = Conv2dSpec {
                    name: format!("{prefix}/head"),
                    in_ch,
                    out_ch: 1,
                    kernel: (3, 1),
                    stride: (1, 1),
                    pad: (1, 0),
                };
                MpdComponent { period, convs, head }
            })
            .collect();

        let msd = cfg
            .msd
            .scales
            .iter()
            .enumerate()
            .map(|(i, &scale)| {
                let prefix = format!("disc/msd{i}");
                let mut convs = Vec::new();
                let mut in_ch = 1;
                for (j, (&out_ch, &stride)) in
                    cfg.msd.channels.iter().zip(&cfg.msd.strides).enumerate()
                {
                    convs.push(Conv1dSpec {
                        name: format!("{prefix}/conv{j}"),
                        in_ch,
                        out_ch,
                        kernel: cfg.msd.kernel,
                        stride,
                        pad: (cfg.msd.kernel - 1) / 2,
                        weight_norm: false,
                    });
                    in_ch = out_ch;
                }
                let head = Conv1dSpec {
                    name: format!("{prefix}/head"),
                    in_ch,
                    out_ch: 1,
                    kernel: 3,
                    stride: 1,
                    pad: 1,
                    weight_norm: false,
                };
                MsdComponent { scale, convs, head }
            })
            .collect();

        DiscLayout { mrsd, mpd, msd }
    }

    pub(super) fn register<T: Scalar>(&self, store: &mut ParamStore<T>, init: &mut ParamInit) {
        for c in &self.mrsd {
            for conv in &c.convs {
                conv.register(store, init);
            }
            c.head.register(store, init);
        }
        for c in &self.mpd {
            for conv in &c.convs {
                conv.register(store, init);
            }
            c.head.register(store, init);
        }
        for c in &self.msd {
            for conv in &c.convs {
                conv.register(store, init);
            }
            c.head.register(store, init);
        }
    }
}

/// One discriminator component's output: the (possibly augmented) encoder
/// feature map, the raw pre-augmentation map, and the mean head score.
#[derive(Debug, Clone, Copy)]
pub struct DiscComponentOut {
    pub kind: DiscKind,
    /// Feature map entering the head (augmented when augmentation ran).
    pub feature: Var,
    /// Encoder output before augmentation.
    pub raw_feature: Var,
    pub time_axis: usize,
    pub freq_axis: Option<usize>,
    pub score: Var,
}

/// Run the three discriminator families. Components are encoded first; if an
/// augmentation config is provided, the feature maps are perturbed (drawing
/// fresh intervals unless `reuse` draws are given), then the heads score the
/// perturbed features.
pub(super) fn discriminate<T: Scalar>(
    tape: &mut Tape<T>,
    layout: &super::nets::ModelLayout,
    store: &ParamStore<T>,
    consts: &ModelConsts<T>,
    wave: Var,
    augment: Option<(&AugmentConfig, &mut ChaCha8Rng, Option<&AugmentDraws>)>,
) -> Result<(Vec<DiscComponentOut>, Option<AugmentDraws>), ModelError> {
    assert_eq!(tape.shape(wave).len(), 2, "waveform node must be (1, T)");
    let slope = T::from_config(0.1);
    let disc = &layout.disc;

    struct Encoded {
        kind: DiscKind,
        feature: Var,
        time_axis: usize,
        freq_axis: Option<usize>,
    }
    let mut encoded = Vec::new();

    for c in &disc.mrsd {
        let mag = stft_mag_graph(tape, consts, c.resolution, c.hop, wave);
        let bins = tape.shape(mag)[0];
        let frames = tape.shape(mag)[1];
        let mut x = tape.reshape(mag, &[1, bins, frames]);
        for conv in &c.convs {
            let bound = conv.bind(tape, store);
            x = bound.apply(tape, x);
            x = tape.leaky_relu(x, slope);
        }
        encoded.push(Encoded { kind: DiscKind::Mrsd, feature: x, time_axis: 2, freq_axis: Some(1) });
    }

    for c in &disc.mpd {
        let t = tape.shape(wave)[1];
        let rem = t % c.period;
        let padded = if rem == 0 { wave } else { tape.pad_cols(wave, 0, c.period - rem) };
        let rows = tape.shape(padded)[1] / c.period;
        let mut x = tape.reshape(padded, &[1, rows, c.period]);
        for conv in &c.convs {
            let bound = conv.bind(tape, store);
            x = bound.apply(tape, x);
            x = tape.leaky_relu(x, slope);
        }
        encoded.push(Encoded { kind: DiscKind::Mpd, feature: x, time_axis: 1, freq_axis: None });
    }

    for c in &disc.msd {
        let mut x = if c.scale > 1 { tape.avg_pool1d(wave, c.scale) } else { wave };
        for conv in &c.convs {
            let bound = conv.bind(tape, store);
            x = bound.apply(tape, x);
            x = tape.leaky_relu(x, slope);
        }
        encoded.push(Encoded { kind: DiscKind::Msd, feature: x, time_axis: 1, freq_axis: None });
    }

    // Augment between encoder and head, if requested.
    let (final_features, draws) = match augment {
        Some((cfg, rng, reuse)) if cfg.enabled => {
            let refs: Vec<FeatureRef> = encoded
                .iter()
                .map(|e| FeatureRef {
                    var: e.feature,
                    kind: e.kind,
                    time_axis: e.time_axis,
                    freq_axis: e.freq_axis,
                })
                .collect();
            let (vars, draws) = augment_features(tape, &refs, cfg, rng, reuse)
                .map_err(|e| ModelError::ConfigMismatch(e.to_string()))?;
            (vars, Some(draws))
        }
        _ => (encoded.iter().map(|e| e.feature).collect(), None),
    };

    // Heads on the (augmented) features, scores averaged over the map.
    let mut out = Vec::with_capacity(encoded.len());
    let mut idx = 0usize;
    for c in &disc.mrsd {
        let feature = final_features[idx];
        let head_out = c.head.bind(tape, store).apply(tape, feature);
        let score = tape.mean_all(head_out);
        out.push(DiscComponentOut {
            kind: DiscKind::Mrsd,
            feature,
            raw_feature: encoded[idx].feature,
            time_axis: 2,
            freq_axis: Some(1),
            score,
        });
        idx += 1;
    }
    for c in &disc.mpd {
        let feature = final_features[idx];
        let head_out = c.head.bind(tape, store).apply(tape, feature);
        let score = tape.mean_all(head_out);
        out.push(DiscComponentOut {
            kind: DiscKind::Mpd,
            feature,
            raw_feature: encoded[idx].feature,
            time_axis: 1,
            freq_axis: None,
            score,
        });
        idx += 1;
    }
    for c in &disc.msd {
        let feature = final_features[idx];
        let head_out = c.head.bind(tape, store).apply(tape, feature);
        let score = tape.mean_all(head_out);
        out.push(DiscComponentOut {
            kind: DiscKind::Msd,
            feature,
            raw_feature: encoded[idx].feature,
            time_axis: 1,
            freq_axis: None,
            score,
        });
        idx += 1;
    }
    Ok((out, draws))
}

/// Documented downsampling of each family, for shape contracts: the feature
/// time length given an input length.
pub fn expected_feature_frames(cfg: &ModelConfig, kind: DiscKind, index: usize, input_len: usize) -> usize {
    let ceil_div = |a: usize, b: usize| a.div_ceil(b);
    match kind {
        DiscKind::Msd => {
            let scale = cfg.msd.scales[index];
            let mut t = input_len / scale; // non-overlapping average pooling
            for &s in &cfg.msd.strides {
                t = ceil_div(t, s);
            }
            t
        }
        DiscKind::Mpd => {
            let period = cfg.mpd.periods[index];
            let mut t = ceil_div(input_len, period);
            for _ in &cfg.mpd.channels {
                t = ceil_div(t, 3);
            }
            t
        }
        DiscKind::Mrsd => {
            let res = cfg.mrsd.resolutions[index];
            let hop = res / cfg.mrsd.hop_divisor;
            let mut t = 1 + input_len / hop;
            for (j, _) in cfg.mrsd.channels.iter().enumerate() {
                let stride = if j + 1 == cfg.mrsd.channels.len() { 1 } else { 2 };
                t = ceil_div(t, stride);
            }
            t
        }
    }
}
