//! Generator-side network layouts and forward passes: posterior encoder,
//! prior encoder with length regulation and relative self-attention, the
//! shared decoder, the uncertainty predictor, and the in-graph mel features.

use ndarray::{Array2, ArrayD, IxDyn};

use super::layers::{Conv1dSpec, ConvT1dSpec, EmbeddingSpec, LayerNormSpec};
use super::params::{ParamInit, ParamStore};
use super::{ModelConfig, ModelError};
use crate::autograd::{Tape, Var};
use crate::corpus::MusicScore;
use crate::dsp::{mel_filterbank, MEL_LOG_EPS};
use crate::scalar::Scalar;
use crate::uncertainty::interp_matrix;

/// Frame-level conditioning after length regulation.
#[derive(Debug, Clone)]
pub struct ScoreFrames {
    pub phone_ids: Vec<usize>,
    pub pitch_ids: Vec<usize>,
}

impl ScoreFrames {
    pub fn len(&self) -> usize {
        self.phone_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phone_ids.is_empty()
    }
}

/// Expand note-level entries to frames by flooring cumulative duration
/// boundaries: note `i` covers frames `floor(cum_i * rate)` to
/// `floor(cum_{i+1} * rate)`, so the total is `floor(total * rate)` and the
/// sub-frame remainder is dropped rather than accumulating per note.
pub fn score_frames(cfg: &ModelConfig, score: &MusicScore) -> Result<ScoreFrames, ModelError> {
    score.validate(&cfg.inventory)?;
    let frame_rate = cfg.frame_rate();
    let mut phone_ids = Vec::new();
    let mut pitch_ids = Vec::new();
    let mut cum = 0.0f64;
    let mut prev_boundary = 0usize;
    for i in 0..score.len() {
        cum += score.durations[i];
        let boundary = (cum * frame_rate).floor() as usize;
        let frames = boundary.saturating_sub(prev_boundary);
        prev_boundary = boundary;
        let phone = cfg
            .inventory
            .id_of(&score.phonemes[i])
            .expect("validated phoneme");
        for _ in 0..frames {
            phone_ids.push(phone);
            pitch_ids.push(score.pitches[i] as usize);
        }
    }
    if phone_ids.is_empty() {
        return Err(ModelError::EmptyFrames(frame_rate));
    }
    Ok(ScoreFrames { phone_ids, pitch_ids })
}

pub struct AttentionBlockLayout {
    wq: Conv1dSpec,
    wk: Conv1dSpec,
    wv: Conv1dSpec,
    wo: Conv1dSpec,
    rel_name: String,
    ln1: LayerNormSpec,
    ffn1: Conv1dSpec,
    ffn2: Conv1dSpec,
    ln2: LayerNormSpec,
}

pub struct ModelLayout {
    // Posterior encoder.
    post_convs: Vec<Conv1dSpec>,
    post_mu: Conv1dSpec,
    post_logs: Conv1dSpec,
    // Prior encoder.
    phone_emb: EmbeddingSpec,
    pitch_emb: EmbeddingSpec,
    blocks: Vec<AttentionBlockLayout>,
    prior_mu: Conv1dSpec,
    prior_logs: Conv1dSpec,
    // Decoder.
    dec_pre: Conv1dSpec,
    dec_up: Vec<ConvT1dSpec>,
    dec_post: Vec<Conv1dSpec>,
    dec_out: Conv1dSpec,
    // Uncertainty predictor.
    unc_conv1: Conv1dSpec,
    unc_conv2: Conv1dSpec,
    unc_proj: Conv1dSpec,
    // Discriminators.
    pub(super) disc: super::disc::DiscLayout,
    heads: usize,
    rel_window: usize,
    head_dim: usize,
}

impl ModelLayout {
    pub fn build(cfg: &ModelConfig) -> Self {
        let d = cfg.latent_dim;
        let conv = |name: String, i, o, k, weight_norm| Conv1dSpec {
            name,
            in_ch: i,
            out_ch: o,
            kernel: k,
            stride: 1,
            pad: (k - 1) / 2,
            weight_norm,
        };

        let h = cfg.posterior.hidden;
        let mut post_convs = Vec::new();
        for i in 0..cfg.posterior.layers {
            let in_ch = if i == 0 { cfg.features.n_mels } else { h };
            post_convs.push(conv(format!("gen/post/conv{i}"), in_ch, h, cfg.posterior.kernel, true));
        }
        let post_mu = conv("gen/post/mu".into(), h, d, 1, true);
        let post_logs = conv("gen/post/logs".into(), h, d, 1, true);

        let phone_emb = EmbeddingSpec {
            name: "gen/prior/phone_emb".into(),
            dim: d,
            vocab: cfg.inventory.len(),
        };
        let pitch_emb =
            EmbeddingSpec { name: "gen/prior/pitch_emb".into(), dim: d, vocab: 128 };
        let mut blocks = Vec::new();
        for b in 0..cfg.prior.blocks {
            let p = format!("gen/prior/block{b}");
            blocks.push(AttentionBlockLayout {
                wq: conv(format!("{p}/wq"), d, d, 1, false),
                wk: conv(format!("{p}/wk"), d, d, 1, false),
                wv: conv(format!("{p}/wv"), d, d, 1, false),
                wo: conv(format!("{p}/wo"), d, d, 1, false),
                rel_name: format!("{p}/rel"),
                ln1: LayerNormSpec { name: format!("{p}/ln1"), dim: d },
                ffn1: conv(format!("{p}/ffn1"), d, cfg.prior.ffn_hidden, cfg.prior.ffn_kernel, false),
                ffn2: conv(format!("{p}/ffn2"), cfg.prior.ffn_hidden, d, cfg.prior.ffn_kernel, false),
                ln2: LayerNormSpec { name: format!("{p}/ln2"), dim: d },
            });
        }
        let prior_mu = conv("gen/prior/mu".into(), d, d, 1, false);
        let prior_logs = conv("gen/prior/logs".into(), d, d, 1, false);

        let base = cfg.decoder.base_channels;
        let dec_pre = conv("gen/dec/pre".into(), d, base, 7, true);
        let mut dec_up = Vec::new();
        let mut dec_post = Vec::new();
        let mut ch = base;
        for (i, (factor, kernel)) in cfg.decoder.upsample.iter().enumerate() {
            let out = (ch / 2).max(4);
            dec_up.push(ConvT1dSpec {
                name: format!("gen/dec/up{i}"),
                in_ch: ch,
                out_ch: out,
                kernel: *kernel,
                stride: *factor,
                pad: (kernel - factor) / 2,
                weight_norm: true,
            });
            dec_post.push(conv(
                format!("gen/dec/post{i}"),
                out,
                out,
                cfg.decoder.post_kernel,
                true,
            ));
            ch = out;
        }
        let dec_out = conv("gen/dec/out".into(), ch, 1, cfg.decoder.post_kernel, true);

        let u = &cfg.uncertainty;
        let unc_conv1 = conv("gen/unc/conv1".into(), d, u.hidden, u.kernel, false);
        let unc_conv2 = conv("gen/unc/conv2".into(), u.hidden, u.hidden, u.kernel, false);
        let unc_proj = conv("gen/unc/proj".into(), u.hidden, 1, 1, false);

        ModelLayout {
            post_convs,
            post_mu,
            post_logs,
            phone_emb,
            pitch_emb,
            blocks,
            prior_mu,
            prior_logs,
            dec_pre,
            dec_up,
            dec_post,
            dec_out,
            unc_conv1,
            unc_conv2,
            unc_proj,
            disc: super::disc::DiscLayout::build(cfg),
            heads: cfg.prior.heads,
            rel_window: cfg.prior.rel_window,
            head_dim: d / cfg.prior.heads,
        }
    }

    pub fn register<T: Scalar>(&self, store: &mut ParamStore<T>, init: &mut ParamInit) {
        for c in &self.post_convs {
            c.register(store, init);
        }
        self.post_mu.register(store, init);
        self.post_logs.register(store, init);
        self.phone_emb.register(store, init);
        self.pitch_emb.register(store, init);
        for b in &self.blocks {
            b.wq.register(store, init);
            b.wk.register(store, init);
            b.wv.register(store, init);
            b.wo.register(store, init);
            store.insert(&b.rel_name, init.randn::<T>(&[self.heads, 2 * self.rel_window + 1], 0.02));
            b.ln1.register(store, init);
            b.ffn1.register(store, init);
            b.ffn2.register(store, init);
            b.ln2.register(store, init);
        }
        self.prior_mu.register(store, init);
        self.prior_logs.register(store, init);
        self.dec_pre.register(store, init);
        for (up, post) in self.dec_up.iter().zip(&self.dec_post) {
            up.register(store, init);
            post.register(store, init);
        }
        self.dec_out.register(store, init);
        self.unc_conv1.register(store, init);
        self.unc_conv2.register(store, init);
        self.unc_proj.register(store, init);
        self.disc.register(store, init);
    }
}

/// Constant kernels shared by forward passes: windowed DFT bases per FFT size
/// and the mel filterbank.
pub struct ModelConsts<T: Scalar> {
    /// `n_fft -> (2*bins, 1, n_fft)` cos/sin kernels including the window.
    pub dft: std::collections::BTreeMap<usize, ArrayD<T>>,
    /// `n_mels x bins` filterbank for the feature config.
    pub mel_fb: Array2<T>,
}

impl<T: Scalar> ModelConsts<T> {
    pub fn build(cfg: &ModelConfig) -> Self {
        let mut dft = std::collections::BTreeMap::new();
        dft.insert(cfg.features.n_fft, dft_kernels::<T>(cfg.features.n_fft));
        for &res in &cfg.mrsd.resolutions {
            dft.entry(res).or_insert_with(|| dft_kernels::<T>(res));
        }
        let mel_fb = mel_filterbank::<T>(
            cfg.features.n_mels,
            cfg.features.n_fft,
            cfg.sample_rate,
            cfg.features.fmin,
            cfg.features.fmax_for(cfg.sample_rate),
        );
        ModelConsts { dft, mel_fb }
    }
}

/// Hann-windowed DFT basis as conv kernels: rows `0..bins` are cosine, rows
/// `bins..2*bins` are sine.
fn dft_kernels<T: Scalar>(n_fft: usize) -> ArrayD<T> {
    let bins = n_fft / 2 + 1;
    let mut w = ArrayD::<T>::zeros(IxDyn(&[2 * bins, 1, n_fft]));
    for n in 0..n_fft {
        let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / n_fft as f64).cos();
        for k in 0..bins {
            let angle = 2.0 * std::f64::consts::PI * k as f64 * n as f64 / n_fft as f64;
            w[[k, 0, n]] = T::from_config(hann * angle.cos());
            w[[bins + k, 0, n]] = T::from_config(-hann * angle.sin());
        }
    }
    w
}

/// In-graph magnitude STFT of `wave (1, T)`: center-padded, Hann-windowed,
/// `bins x (1 + T/hop)` output.
pub(super) fn stft_mag_graph<T: Scalar>(
    tape: &mut Tape<T>,
    consts: &ModelConsts<T>,
    n_fft: usize,
    hop: usize,
    wave: Var,
) -> Var {
    let bins = n_fft / 2 + 1;
    let padded = tape.pad_cols(wave, n_fft / 2, n_fft / 2);
    let w = tape.constant(consts.dft[&n_fft].clone());
    let zero_bias = tape.constant(ArrayD::zeros(IxDyn(&[2 * bins])));
    let proj = tape.conv1d(padded, w, zero_bias, hop, 0);
    let cos = tape.slice_rows(proj, 0, bins);
    let sin = tape.slice_rows(proj, bins, 2 * bins);
    let cos2 = tape.square(cos);
    let sin2 = tape.square(sin);
    let power = tape.add(cos2, sin2);
    // Tiny floor keeps the sqrt differentiable at silent bins.
    let power = tape.add_scalar(power, T::from_config(1e-12));
    tape.sqrt(power)
}

/// In-graph log-mel `n_mels x frames` matching `dsp::mel_spectrogram` up to
/// the 1e-12 magnitude floor.
pub(super) fn mel_graph<T: Scalar>(
    tape: &mut Tape<T>,
    consts: &ModelConsts<T>,
    cfg: &ModelConfig,
    wave: Var,
) -> Var {
    let mag = stft_mag_graph(tape, consts, cfg.features.n_fft, cfg.features.hop_length, wave);
    let fb = tape.constant(consts.mel_fb.clone().into_dyn());
    let mel = tape.matmul(fb, mag);
    let mel = tape.add_scalar(mel, T::from_config(MEL_LOG_EPS));
    tape.log(mel)
}

/// Latent encoding output: the reparameterized sample plus its Gaussian.
#[derive(Debug, Clone, Copy)]
pub struct EncodedLatent {
    pub latent: Var,
    pub mean: Var,
    pub log_std: Var,
}

fn reparameterize<T: Scalar>(
    tape: &mut Tape<T>,
    mean: Var,
    log_std: Var,
    noise: Option<&Array2<T>>,
) -> Var {
    match noise {
        None => mean,
        Some(eps) => {
            assert_eq!(
                tape.shape(mean),
                eps.shape(),
                "noise shape must match the Gaussian"
            );
            let eps = tape.constant(eps.clone().into_dyn());
            let std = tape.exp(log_std);
            let scaled = tape.mul(std, eps);
            tape.add(mean, scaled)
        }
    }
}

pub(super) fn posterior_forward<T: Scalar>(
    tape: &mut Tape<T>,
    layout: &ModelLayout,
    store: &ParamStore<T>,
    cfg: &ModelConfig,
    mel: &Array2<T>,
    noise: Option<&Array2<T>>,
) -> EncodedLatent {
    // Standardize the log-mel input with fixed constants.
    let shift = T::from_config(-cfg.mel_norm_mean);
    let scale = T::from_config(1.0 / cfg.mel_norm_scale);
    let normed = mel.mapv(|v| (v + shift) * scale);
    let mut x = tape.constant(normed.into_dyn());

    let slope = T::from_config(0.1);
    for conv in &layout.post_convs {
        let bound = conv.bind(tape, store);
        x = bound.apply(tape, x);
        x = tape.leaky_relu(x, slope);
    }
    let mu = layout.post_mu.bind(tape, store).apply(tape, x);
    let logs_raw = layout.post_logs.bind(tape, store).apply(tape, x);
    let logs = tape.clamp(logs_raw, T::from_config(cfg.log_std_min), T::from_config(cfg.log_std_max));
    let latent = reparameterize(tape, mu, logs, noise);
    EncodedLatent { latent, mean: mu, log_std: logs }
}

fn attention_block<T: Scalar>(
    tape: &mut Tape<T>,
    layout: &ModelLayout,
    block: &AttentionBlockLayout,
    store: &ParamStore<T>,
    x: Var,
) -> Var {
    let frames = tape.shape(x)[1];
    let heads = layout.heads;
    let dh = layout.head_dim;
    let scale = T::from_config(1.0 / (dh as f64).sqrt());

    let q = block.wq.bind(tape, store).apply(tape, x);
    let k = block.wk.bind(tape, store).apply(tape, x);
    let v = block.wv.bind(tape, store).apply(tape, x);

    // Clipped relative-position indices, shared by every head.
    let w = layout.rel_window as isize;
    let mut rel_idx = Vec::with_capacity(frames * frames);
    for i in 0..frames as isize {
        for j in 0..frames as isize {
            rel_idx.push(((j - i).clamp(-w, w) + w) as usize);
        }
    }
    let rel_table = tape.param(&block.rel_name, store.get(&block.rel_name).clone());

    let mut head_outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_rows(q, h * dh, (h + 1) * dh);
        let kh = tape.slice_rows(k, h * dh, (h + 1) * dh);
        let vh = tape.slice_rows(v, h * dh, (h + 1) * dh);

        let qt = tape.transpose(qh);
        let scores = tape.matmul(qt, kh);
        let scores = tape.mul_scalar(scores, scale);

        let rel_row = tape.slice_rows(rel_table, h, h + 1); // (1, 2w+1)
        let rel_flat = tape.gather_cols(rel_row, &rel_idx); // (1, F*F)
        let rel_bias = tape.reshape(rel_flat, &[frames, frames]);
        let scores = tape.add(scores, rel_bias);

        let attn = tape.softmax_rows(scores); // (F, F), rows are queries
        let attn_t = tape.transpose(attn);
        head_outputs.push(tape.matmul(vh, attn_t)); // (dh, F)
    }
    let merged = tape.concat_rows(&head_outputs);
    let projected = block.wo.bind(tape, store).apply(tape, merged);

    let res1 = tape.add(x, projected);
    let normed1 = block.ln1.apply(tape, store, res1);

    let ffn_in = block.ffn1.bind(tape, store).apply(tape, normed1);
    let ffn_act = tape.leaky_relu(ffn_in, T::zero()); // plain ReLU
    let ffn_out = block.ffn2.bind(tape, store).apply(tape, ffn_act);

    let res2 = tape.add(normed1, ffn_out);
    block.ln2.apply(tape, store, res2)
}

pub(super) fn prior_forward<T: Scalar>(
    tape: &mut Tape<T>,
    layout: &ModelLayout,
    store: &ParamStore<T>,
    cfg: &ModelConfig,
    frames: &ScoreFrames,
    noise: Option<&Array2<T>>,
) -> EncodedLatent {
    let phone = layout.phone_emb.lookup(tape, store, &frames.phone_ids);
    let pitch = layout.pitch_emb.lookup(tape, store, &frames.pitch_ids);
    let mut x = tape.add(phone, pitch);
    for block in &layout.blocks {
        x = attention_block(tape, layout, block, store, x);
    }
    let mu = layout.prior_mu.bind(tape, store).apply(tape, x);
    let logs_raw = layout.prior_logs.bind(tape, store).apply(tape, x);
    let logs = tape.clamp(logs_raw, T::from_config(cfg.log_std_min), T::from_config(cfg.log_std_max));
    let latent = reparameterize(tape, mu, logs, noise);
    EncodedLatent { latent, mean: mu, log_std: logs }
}

pub(super) fn decoder_forward<T: Scalar>(
    tape: &mut Tape<T>,
    layout: &ModelLayout,
    store: &ParamStore<T>,
    latent: Var,
) -> Var {
    let slope = T::from_config(0.1);
    let mut x = layout.dec_pre.bind(tape, store).apply(tape, latent);
    for (up, post) in layout.dec_up.iter().zip(&layout.dec_post) {
        x = tape.leaky_relu(x, slope);
        x = up.bind(tape, store).apply(tape, x);
        x = post.bind(tape, store).apply(tape, x);
    }
    x = tape.leaky_relu(x, slope);
    x = layout.dec_out.bind(tape, store).apply(tape, x);
    tape.tanh(x)
}

pub(super) fn uncertainty_forward<T: Scalar>(
    tape: &mut Tape<T>,
    layout: &ModelLayout,
    store: &ParamStore<T>,
    cfg: &ModelConfig,
    latent: Var,
) -> Var {
    let frames = tape.shape(latent)[1];
    let grid = interp_matrix::<T>(frames, cfg.uncertainty.fixed_length);
    let grid_t = tape.constant(grid.t().to_owned().into_dyn()); // (frames, L)
    let resampled = tape.matmul(latent, grid_t); // (latent_dim, L)

    let h1 = layout.unc_conv1.bind(tape, store).apply(tape, resampled);
    let h1 = tape.leaky_relu(h1, T::zero());
    let h2 = layout.unc_conv2.bind(tape, store).apply(tape, h1);
    let h2 = tape.leaky_relu(h2, T::zero());
    layout.unc_proj.bind(tape, store).apply(tape, h2) // (1, L)
}
