//! The epoch loop: shuffled frame-aligned crops, the flag schedule, the
//! exponential learning-rate decay, per-epoch JSON logs and checkpoints, and
//! bit-exact resume.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::ArrayD;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::step::{train_step, CropItem, TrainState};
use super::{EpochLog, TrainConfig, TrainError, TrainingStrategy};
use crate::corpus::{fnv1a64, load_score_file, wav, CorpusManifest, Split};
use crate::model::{load_checkpoint, save_checkpoint, ScoreFrames, SvsModel};
use crate::scalar::Scalar;
use crate::train::AdamWState;
use crate::uncertainty::{target_distance, UncertaintyTrack};

/// An utterance loaded for training: waveform plus frame-level conditioning.
#[derive(Debug, Clone)]
pub struct LoadedUtterance<T: Scalar> {
    pub id: String,
    pub wave: Vec<T>,
    pub frames: ScoreFrames,
    pub split: Split,
}

/// Read every manifest entry into memory, validating sample rates.
pub fn load_training_corpus<T: Scalar>(
    manifest: &CorpusManifest,
    model: &SvsModel<T>,
) -> Result<Vec<LoadedUtterance<T>>, TrainError> {
    if manifest.sample_rate != model.cfg.sample_rate {
        return Err(TrainError::Config(format!(
            "corpus sample rate {} != model sample rate {}",
            manifest.sample_rate, model.cfg.sample_rate
        )));
    }
    let mut out = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let (sr, wave) = wav::read_wav::<T>(&manifest.audio_path(entry))?;
        if sr != model.cfg.sample_rate {
            return Err(TrainError::Config(format!(
                "{}: wav sample rate {sr} != model sample rate {}",
                entry.id, model.cfg.sample_rate
            )));
        }
        let score = load_score_file(&manifest.score_path(entry), &model.cfg.inventory)?;
        let frames = model.score_frames(&score)?;
        out.push(LoadedUtterance { id: entry.id.clone(), wave, frames, split: entry.split });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub epochs: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub resume: Option<PathBuf>,
    /// Write per-utterance `t u_t d_t` curves for the dev split at the end.
    pub dump_uncertainty: bool,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub history: Vec<EpochLog>,
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
}

/// Training-state metadata stored in every checkpoint.
#[derive(Debug, Serialize, Deserialize)]
struct TrainMeta {
    epoch_next: usize,
    step: u64,
    strategy: String,
    rng_seed: String,
    rng_word_pos: String,
    opt_gen_step: u64,
    opt_disc_step: u64,
    history: Vec<EpochLog>,
    train_config: TrainConfig,
}

fn rng_to_parts(rng: &ChaCha8Rng) -> (String, String) {
    let seed = rng.get_seed();
    let hex: String = seed.iter().map(|b| format!("{b:02x}")).collect();
    (hex, rng.get_word_pos().to_string())
}

fn rng_from_parts(seed_hex: &str, word_pos: &str) -> Result<ChaCha8Rng, TrainError> {
    if seed_hex.len() != 64 {
        return Err(TrainError::Config("rng seed must be 32 hex bytes".to_string()));
    }
    let mut seed = [0u8; 32];
    for (i, chunk) in seed_hex.as_bytes().chunks(2).enumerate() {
        let s = std::str::from_utf8(chunk).map_err(|_| TrainError::Config("bad rng hex".into()))?;
        seed[i] = u8::from_str_radix(s, 16)
            .map_err(|_| TrainError::Config("bad rng hex".to_string()))?;
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    let pos: u128 = word_pos
        .parse()
        .map_err(|_| TrainError::Config("bad rng word pos".to_string()))?;
    rng.set_word_pos(pos);
    Ok(rng)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> TrainError + '_ {
    move |e| TrainError::Io { path: path.to_path_buf(), source: e }
}

/// Save model, optimizer moments and training state as one archive.
pub(crate) fn save_train_checkpoint<T: Scalar>(
    path: &Path,
    model: &SvsModel<T>,
    state: &TrainState<T>,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    let (rng_seed, rng_word_pos) = rng_to_parts(&state.rng);
    let meta = TrainMeta {
        epoch_next: state.epoch,
        step: state.step,
        strategy: state.strategy.to_string(),
        rng_seed,
        rng_word_pos,
        opt_gen_step: state.opt_gen.step,
        opt_disc_step: state.opt_disc.step,
        history: state.history.clone(),
        train_config: cfg.clone(),
    };
    let mut extras: Vec<(String, &ArrayD<T>)> = Vec::new();
    for (name, arr) in &state.opt_gen.m1 {
        extras.push((format!("opt/gen/m1/{name}"), arr));
    }
    for (name, arr) in &state.opt_gen.m2 {
        extras.push((format!("opt/gen/m2/{name}"), arr));
    }
    for (name, arr) in &state.opt_disc.m1 {
        extras.push((format!("opt/disc/m1/{name}"), arr));
    }
    for (name, arr) in &state.opt_disc.m2 {
        extras.push((format!("opt/disc/m2/{name}"), arr));
    }
    save_checkpoint(path, &model.cfg, &model.params, &extras, &serde_json::to_value(&meta)?)?;
    Ok(())
}

/// Restore a model plus training state saved by [`save_train_checkpoint`].
pub(crate) fn load_train_checkpoint<T: Scalar>(
    path: &Path,
    strategy: TrainingStrategy,
) -> Result<(SvsModel<T>, TrainState<T>, TrainConfig), TrainError> {
    let ck = load_checkpoint::<T>(path)?;
    let meta: TrainMeta = serde_json::from_value(ck.meta.clone())?;
    if meta.strategy != strategy.to_string() {
        return Err(TrainError::StrategyMismatch {
            checkpoint: meta.strategy,
            requested: strategy.to_string(),
        });
    }
    let model = SvsModel::from_parts(ck.config.clone(), &ck.param_store())?;

    let mut opt_gen = AdamWState { step: meta.opt_gen_step, ..Default::default() };
    let mut opt_disc = AdamWState { step: meta.opt_disc_step, ..Default::default() };
    let mut route = |name: &str, arr: &ArrayD<T>| {
        if let Some(rest) = name.strip_prefix("opt/gen/m1/") {
            opt_gen.m1.insert(rest.to_string(), arr.clone());
        } else if let Some(rest) = name.strip_prefix("opt/gen/m2/") {
            opt_gen.m2.insert(rest.to_string(), arr.clone());
        } else if let Some(rest) = name.strip_prefix("opt/disc/m1/") {
            opt_disc.m1.insert(rest.to_string(), arr.clone());
        } else if let Some(rest) = name.strip_prefix("opt/disc/m2/") {
            opt_disc.m2.insert(rest.to_string(), arr.clone());
        }
    };
    for (name, arr) in &ck.arrays {
        route(name, arr);
    }

    let state = TrainState {
        epoch: meta.epoch_next,
        step: meta.step,
        opt_gen,
        opt_disc,
        rng: rng_from_parts(&meta.rng_seed, &meta.rng_word_pos)?,
        strategy,
        history: meta.history.clone(),
    };
    Ok((model, state, meta.train_config))
}

/// Execute the strategy's epoch-indexed flag schedule over a corpus, writing
/// per-epoch checkpoints and one JSON log line per epoch. Returns the trained
/// model and a run summary.
pub fn run_strategy<T: Scalar + rustfft::FftNum>(
    strategy: TrainingStrategy,
    manifest: &CorpusManifest,
    cfg: &TrainConfig,
    opts: &RunOptions,
) -> Result<(SvsModel<T>, RunSummary), TrainError> {
    assert!(opts.epochs >= 1, "need at least one epoch");
    fs::create_dir_all(&opts.out_dir).map_err(io_err(&opts.out_dir))?;
    let ckpt_dir = opts.out_dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(io_err(&ckpt_dir))?;
    let log_path = opts.out_dir.join("train_log.jsonl");

    let (mut model, mut state) = match &opts.resume {
        Some(path) => {
            let (model, state, saved_cfg) = load_train_checkpoint::<T>(path, strategy)?;
            if saved_cfg.model != cfg.model {
                return Err(TrainError::Config(
                    "checkpoint model config differs from the requested config".to_string(),
                ));
            }
            (model, state)
        }
        None => {
            let model = SvsModel::<T>::new(cfg.model.clone(), opts.seed)?;
            // Offset the stream seed so parameter init and step randomness
            // are decoupled but both derive from the root seed.
            let state = TrainState::new(strategy, opts.seed.wrapping_add(0x5EED));
            // Truncate any stale log when starting fresh.
            if log_path.exists() {
                fs::remove_file(&log_path).map_err(io_err(&log_path))?;
            }
            (model, state)
        }
    };

    let corpus = load_training_corpus(manifest, &model)?;
    let train_items: Vec<&LoadedUtterance<T>> =
        corpus.iter().filter(|u| u.split == Split::Train).collect();
    if train_items.is_empty() {
        return Err(TrainError::EmptySplit("train".to_string()));
    }

    let hop = cfg.model.features.hop_length;
    let crop_frames_target = (cfg.crop_seconds * cfg.model.frame_rate()).floor() as usize;
    let mut log_file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(io_err(&log_path))?;

    let mut last_ckpt = ckpt_dir.join(format!("epoch_{:04}.ckpt", state.epoch.saturating_sub(1)));
    while state.epoch < opts.epochs {
        let epoch = state.epoch;
        let flags = strategy.flags_at(epoch, opts.epochs, &cfg.schedule);
        let lr = cfg.optimizer.lr_at(epoch);

        let mut order: Vec<usize> = (0..train_items.len()).collect();
        order.shuffle(&mut state.rng);

        let mut sums = super::LossReport::default();
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let mut batch = Vec::with_capacity(chunk.len());
            for &i in chunk {
                batch.push(make_crop(train_items[i], crop_frames_target, hop, &mut state.rng));
            }
            let report = train_step(&mut model, &batch, &mut state, cfg, flags, lr, None)?;
            sums.kl += report.kl;
            sums.recon += report.recon;
            sums.adv_g += report.adv_g;
            sums.adv_d += report.adv_d;
            sums.uncertainty += report.uncertainty;
            sums.feature_match += report.feature_match;
            sums.total_gen += report.total_gen;
            sums.total_disc += report.total_disc;
            batches += 1;
        }
        let n = batches as f64;
        let losses = super::LossReport {
            kl: sums.kl / n,
            recon: sums.recon / n,
            adv_g: sums.adv_g / n,
            adv_d: sums.adv_d / n,
            uncertainty: sums.uncertainty / n,
            feature_match: sums.feature_match / n,
            total_gen: sums.total_gen / n,
            total_disc: sums.total_disc / n,
        };

        let entry = EpochLog { epoch, flags, losses, lr };
        let line = serde_json::to_string(&entry)?;
        writeln!(log_file, "{line}").map_err(io_err(&log_path))?;
        log_file.flush().map_err(io_err(&log_path))?;
        state.history.push(entry);
        state.epoch = epoch + 1;

        last_ckpt = ckpt_dir.join(format!("epoch_{epoch:04}.ckpt"));
        save_train_checkpoint(&last_ckpt, &model, &state, cfg)?;
    }

    if opts.dump_uncertainty {
        let dev: Vec<&LoadedUtterance<T>> =
            corpus.iter().filter(|u| u.split == Split::Dev).collect();
        let dump_dir = opts.out_dir.join("uncertainty");
        fs::create_dir_all(&dump_dir).map_err(io_err(&dump_dir))?;
        for utt in dev {
            let track = uncertainty_track_for(&model, utt, cfg, opts.seed)?;
            let mut text = String::new();
            for (t, (u, d)) in track.u.iter().zip(&track.d).enumerate() {
                text.push_str(&format!("{t} {u} {d}\n"));
            }
            let path = dump_dir.join(format!("{}.txt", utt.id));
            fs::write(&path, text).map_err(io_err(&path))?;
        }
    }

    Ok((
        model,
        RunSummary { history: state.history.clone(), final_checkpoint: last_ckpt, log_path },
    ))
}

fn make_crop<T: Scalar>(
    utt: &LoadedUtterance<T>,
    crop_frames_target: usize,
    hop: usize,
    rng: &mut ChaCha8Rng,
) -> CropItem<T> {
    let avail = utt.frames.len().min(utt.wave.len() / hop);
    let take = crop_frames_target.min(avail).max(1);
    let start = if avail > take { rng.random_range(0..=avail - take) } else { 0 };
    CropItem {
        wave: utt.wave[start * hop..(start + take) * hop].to_vec(),
        frames: ScoreFrames {
            phone_ids: utt.frames.phone_ids[start..start + take].to_vec(),
            pitch_ids: utt.frames.pitch_ids[start..start + take].to_vec(),
        },
    }
}

/// Full-utterance prior-path uncertainty curves for held-out data: predicted
/// `u` and measured pooled error `d` per utterance, with seeded latent draws.
pub fn uncertainty_eval<T: Scalar + rustfft::FftNum>(
    model: &SvsModel<T>,
    items: &[&LoadedUtterance<T>],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<(String, UncertaintyTrack<T>)>, TrainError> {
    let mut out = Vec::with_capacity(items.len());
    for utt in items {
        let track = uncertainty_track_for(model, utt, cfg, seed)?;
        out.push((utt.id.clone(), track));
    }
    Ok(out)
}

/// Windowed uncertainty curves over held-out utterances: each utterance is
/// tiled into consecutive crop-sized windows (the same granularity the
/// predictor trains on) and every window yields one (u, d) pair of tracks.
pub fn uncertainty_eval_windowed<T: Scalar + rustfft::FftNum>(
    model: &SvsModel<T>,
    items: &[&LoadedUtterance<T>],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<(String, UncertaintyTrack<T>)>, TrainError> {
    use crate::autograd::Tape;
    let hop = model.cfg.features.hop_length;
    let window = ((cfg.crop_seconds * model.cfg.frame_rate()).floor() as usize).max(1);
    let grid = model.cfg.uncertainty.fixed_length;
    let mut out = Vec::new();
    for utt in items {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(&utt.id));
        let avail = utt.frames.len().min(utt.wave.len() / hop);
        let take = window.min(avail);
        if take * hop < grid {
            continue;
        }
        let mut start = 0usize;
        while start + take <= avail {
            let frames = ScoreFrames {
                phone_ids: utt.frames.phone_ids[start..start + take].to_vec(),
                pitch_ids: utt.frames.pitch_ids[start..start + take].to_vec(),
            };
            let z = crate::model::draw_noise::<T>(model.cfg.latent_dim, take, &mut rng);
            let mut tape = Tape::new();
            let pri = model.encode_prior_graph(&mut tape, &frames, Some(&z));
            let zhat = model.decode_graph(&mut tape, pri.latent);
            let predictor_in = match cfg.predictor_input {
                super::PredictorInput::SampledLatent => pri.latent,
                super::PredictorInput::PriorMean => pri.mean,
            };
            let u_var = model.predict_uncertainty_graph(&mut tape, predictor_in);
            let zhat_value: Vec<T> = tape.value(zhat).iter().copied().collect();
            let x_window = &utt.wave[start * hop..(start + take) * hop];
            let (d, n) = target_distance(x_window, &zhat_value, grid)?;
            let u: Vec<T> = tape.value(u_var).iter().copied().collect();
            out.push((format!("{}@{start}", utt.id), UncertaintyTrack::new(u, d, n)?));
            start += take;
        }
    }
    Ok(out)
}

fn uncertainty_track_for<T: Scalar + rustfft::FftNum>(
    model: &SvsModel<T>,
    utt: &LoadedUtterance<T>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<UncertaintyTrack<T>, TrainError> {
    use crate::autograd::Tape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(&utt.id));
    let z = crate::model::draw_noise::<T>(model.cfg.latent_dim, utt.frames.len(), &mut rng);
    let mut tape = Tape::new();
    let pri = model.encode_prior_graph(&mut tape, &utt.frames, Some(&z));
    let zhat = model.decode_graph(&mut tape, pri.latent);
    let predictor_in = match cfg.predictor_input {
        super::PredictorInput::SampledLatent => pri.latent,
        super::PredictorInput::PriorMean => pri.mean,
    };
    let u_var = model.predict_uncertainty_graph(&mut tape, predictor_in);

    let zhat_value: Vec<T> = tape.value(zhat).iter().copied().collect();
    let grid = model.cfg.uncertainty.fixed_length;
    let (d, n) = target_distance(&utt.wave, &zhat_value, grid)?;
    let u: Vec<T> = tape.value(u_var).iter().copied().collect();
    Ok(UncertaintyTrack::new(u, d, n)?)
}

/// Collect arrays keyed by prefix from a checkpoint blob; helper for tests.
#[allow(dead_code)]
pub(crate) fn arrays_with_prefix<T: Scalar>(
    arrays: &BTreeMap<String, ArrayD<T>>,
    prefix: &str,
) -> Vec<String> {
    arrays.keys().filter(|k| k.starts_with(prefix)).cloned().collect()
}
