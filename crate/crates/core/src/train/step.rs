//! One training step: a discriminator update followed by a generator update,
//! with augmentation applied to both real-path and fake-path discriminator
//! features whenever the epoch flags enable it.

use std::collections::HashMap;

use ndarray::{Array2, ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    AdversarialForm, EpochLog, Flags, LossReport, RealBranch, TrainConfig, TrainError,
    TrainingStrategy,
};
use crate::augment::AugmentDraws;
use crate::autograd::{Tape, Var};
use crate::model::{draw_noise, ScoreFrames, SvsModel};
use crate::scalar::Scalar;
use crate::train::AdamWState;
use crate::uncertainty::target_distance;

/// Everything mutable across steps: optimizer moments, the RNG stream, the
/// epoch/step counters and the per-epoch log history.
#[derive(Debug, Clone)]
pub struct TrainState<T: Scalar> {
    pub epoch: usize,
    pub step: u64,
    pub opt_gen: AdamWState<T>,
    pub opt_disc: AdamWState<T>,
    pub rng: ChaCha8Rng,
    pub strategy: TrainingStrategy,
    pub history: Vec<EpochLog>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(strategy: TrainingStrategy, seed: u64) -> Self {
        TrainState {
            epoch: 0,
            step: 0,
            opt_gen: AdamWState::default(),
            opt_disc: AdamWState::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            strategy,
            history: Vec::new(),
        }
    }
}

/// A frame-aligned training example: `frames.len() * hop` waveform samples
/// with their frame-level score conditioning.
#[derive(Debug, Clone)]
pub struct CropItem<T: Scalar> {
    pub wave: Vec<T>,
    pub frames: ScoreFrames,
}

/// Test hook: the fake-path features that entered the discriminator heads
/// during the discriminator update, with their interval draws.
#[derive(Debug, Default)]
pub struct StepInspection<T: Scalar> {
    pub fake_features: Vec<ArrayD<T>>,
    pub fake_draws: Option<AugmentDraws>,
}

fn finite<T: Scalar>(value: T, term: &str, step: u64) -> Result<T, TrainError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(TrainError::NonFiniteLoss { term: term.to_string(), step })
    }
}

/// In-graph closed-form Gaussian KL, mean over elements.
fn kl_graph<T: Scalar>(
    tape: &mut Tape<T>,
    mu_q: Var,
    logs_q: Var,
    mu_p: Var,
    logs_p: Var,
) -> Var {
    let half = T::from_config(0.5);
    let two = T::from_config(2.0);
    // log sigma_p - log sigma_q
    let log_ratio = tape.sub(logs_p, logs_q);
    // exp(2(logs_q - logs_p))
    let neg_ratio = tape.neg(log_ratio);
    let twice = tape.mul_scalar(neg_ratio, two);
    let var_ratio = tape.exp(twice);
    // (mu_q - mu_p)^2 * exp(-2 logs_p)
    let dm = tape.sub(mu_q, mu_p);
    let dm2 = tape.square(dm);
    let m2lp = tape.mul_scalar(logs_p, -two);
    let inv_var_p = tape.exp(m2lp);
    let maha = tape.mul(dm2, inv_var_p);

    let sum = tape.add(var_ratio, maha);
    let scaled = tape.mul_scalar(sum, half);
    let with_ratio = tape.add(log_ratio, scaled);
    let shifted = tape.add_scalar(with_ratio, -half);
    tape.mean_all(shifted)
}

/// Mean over per-component adversarial terms for the discriminator side.
fn disc_loss_graph<T: Scalar>(
    tape: &mut Tape<T>,
    real_scores: &[Var],
    fake_scores: &[Var],
    form: AdversarialForm,
) -> Var {
    let mut terms = Vec::with_capacity(real_scores.len() + fake_scores.len());
    for &s in real_scores {
        let neg = tape.neg(s);
        let one_minus = tape.add_scalar(neg, T::one());
        terms.push(match form {
            AdversarialForm::Literal => one_minus,
            AdversarialForm::LeastSquares => tape.square(one_minus),
        });
    }
    let real_mean = mean_of(tape, &terms);
    terms.clear();
    for &s in fake_scores {
        terms.push(match form {
            AdversarialForm::Literal => s,
            AdversarialForm::LeastSquares => tape.square(s),
        });
    }
    let fake_mean = mean_of(tape, &terms);
    tape.add(real_mean, fake_mean)
}

fn gen_loss_graph<T: Scalar>(
    tape: &mut Tape<T>,
    fake_scores: &[Var],
    form: AdversarialForm,
) -> Var {
    let mut terms = Vec::with_capacity(fake_scores.len());
    for &s in fake_scores {
        terms.push(match form {
            AdversarialForm::Literal => tape.neg(s),
            AdversarialForm::LeastSquares => {
                let neg = tape.neg(s);
                let one_minus = tape.add_scalar(neg, T::one());
                tape.square(one_minus)
            }
        });
    }
    mean_of(tape, &terms)
}

fn mean_of<T: Scalar>(tape: &mut Tape<T>, terms: &[Var]) -> Var {
    assert!(!terms.is_empty());
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t);
    }
    tape.mul_scalar(acc, T::from_config(1.0 / terms.len() as f64))
}

/// Mean pooling matrix onto the interval grid: `grid x len`, last interval
/// absorbs the tail, matching [`target_distance`].
fn pooling_matrix<T: Scalar>(len: usize, grid: usize) -> Array2<T> {
    let n = len / grid;
    let mut m = Array2::<T>::zeros((grid, len));
    for t in 0..grid {
        let start = t * n;
        let end = if t + 1 == grid { len } else { start + n };
        let w = T::from_config(1.0 / (end - start) as f64);
        for i in start..end {
            m[(t, i)] = w;
        }
    }
    m
}

struct ItemGraph<T: Scalar> {
    tape: Tape<T>,
    latent_z: Var,
    post_mu: Var,
    post_logs: Var,
    pri_mu: Var,
    pri_logs: Var,
    xhat: Var,
    zhat: Var,
    x_trim: Vec<T>,
    mel_x: Array2<T>,
}

/// One discriminator update then one generator update over a batch of crops.
/// Deterministic given the state's RNG; every loss term is finite-checked.
pub fn train_step<T: Scalar + rustfft::FftNum>(
    model: &mut SvsModel<T>,
    batch: &[CropItem<T>],
    state: &mut TrainState<T>,
    cfg: &TrainConfig,
    flags: Flags,
    lr: f64,
    mut inspect: Option<&mut StepInspection<T>>,
) -> Result<LossReport, TrainError> {
    assert!(!batch.is_empty(), "batch must hold at least one utterance");
    let hop = cfg.model.features.hop_length;
    let latent_dim = cfg.model.latent_dim;
    let augment_active = flags.augment_on && cfg.augment.enabled;
    let step_no = state.step;

    // Stage A: encode and decode每 item once; the same tape continues into
    // the generator losses after the discriminator update.
    let mut items = Vec::with_capacity(batch.len());
    for item in batch {
        assert_eq!(
            item.wave.len(),
            item.frames.len() * hop,
            "crop must align waveform samples with score frames"
        );
        let mel_x = model.mel_const(&item.wave)?;
        let mel_frames = mel_x.ncols();
        let f = mel_frames.min(item.frames.len());

        let mut tape = Tape::new();
        let eps = draw_noise::<T>(latent_dim, mel_frames, &mut state.rng);
        let post = model.encode_posterior_graph(&mut tape, &mel_x, Some(&eps));
        let z = draw_noise::<T>(latent_dim, item.frames.len(), &mut state.rng);
        let pri = model.encode_prior_graph(&mut tape, &item.frames, Some(&z));

        let lx = tape.slice_cols(post.latent, 0, f);
        let post_mu = tape.slice_cols(post.mean, 0, f);
        let post_logs = tape.slice_cols(post.log_std, 0, f);
        let lz = tape.slice_cols(pri.latent, 0, f);
        let pri_mu = tape.slice_cols(pri.mean, 0, f);
        let pri_logs = tape.slice_cols(pri.log_std, 0, f);

        let xhat = model.decode_graph(&mut tape, lx);
        let zhat = model.decode_graph(&mut tape, lz);
        let x_trim = item.wave[..f * hop].to_vec();
        // The crop equals its own trim (frames were aligned above), so the
        // encoder-input mel doubles as the reconstruction target.
        debug_assert_eq!(x_trim.len(), item.wave.len());

        items.push(ItemGraph {
            tape,
            latent_z: lz,
            post_mu,
            post_logs,
            pri_mu,
            pri_logs,
            xhat,
            zhat,
            x_trim,
            mel_x,
        });
    }

    let gen_checksum = if cfg!(debug_assertions) { model.params.checksum("gen/") } else { 0 };

    // Stage B: discriminator update on detached real/fake waveforms.
    let mut d_grads: HashMap<String, ArrayD<T>> = HashMap::new();
    let mut adv_d_sum = 0.0f64;
    for ig in &items {
        let mut tape_d = Tape::<T>::new();
        let real_value = match cfg.real_branch {
            RealBranch::PosteriorSample => ig.tape.value(ig.xhat).clone(),
            RealBranch::GroundTruth => {
                ArrayD::from_shape_vec(IxDyn(&[1, ig.x_trim.len()]), ig.x_trim.clone()).unwrap()
            }
        };
        let fake_value = ig.tape.value(ig.zhat).clone();
        let real = tape_d.constant(real_value);
        let fake = tape_d.constant(fake_value);

        let (real_outs, fake_outs, fake_draws) = if augment_active {
            let (real_outs, real_draws) = model.discriminate_graph(
                &mut tape_d,
                real,
                Some((&cfg.augment, &mut state.rng, None)),
            )?;
            let reuse = if cfg.augment.shared_interval { real_draws.as_ref() } else { None };
            let (fake_outs, fake_draws) = model.discriminate_graph(
                &mut tape_d,
                fake,
                Some((&cfg.augment, &mut state.rng, reuse)),
            )?;
            (real_outs, fake_outs, fake_draws)
        } else {
            let (real_outs, _) = model.discriminate_graph(&mut tape_d, real, None)?;
            let (fake_outs, _) = model.discriminate_graph(&mut tape_d, fake, None)?;
            (real_outs, fake_outs, None)
        };

        if let Some(hook) = inspect.as_deref_mut() {
            hook.fake_features =
                fake_outs.iter().map(|o| tape_d.value(o.feature).clone()).collect();
            hook.fake_draws = fake_draws.clone();
        }

        let real_scores: Vec<Var> = real_outs.iter().map(|o| o.score).collect();
        let fake_scores: Vec<Var> = fake_outs.iter().map(|o| o.score).collect();
        let l_d = disc_loss_graph(&mut tape_d, &real_scores, &fake_scores, cfg.adversarial_form);
        let l_d_value = finite(tape_d.scalar(l_d), "adv_d", step_no)?.to_f64().unwrap();
        adv_d_sum += l_d_value;

        let mut grads = tape_d.backward(l_d);
        for (name, grad) in tape_d.take_param_grads(&mut grads) {
            if name.starts_with("disc/") {
                match d_grads.get_mut(&name) {
                    Some(acc) => *acc += &grad,
                    None => {
                        d_grads.insert(name, grad);
                    }
                }
            }
        }
    }
    let scale = T::from_config(1.0 / batch.len() as f64);
    for grad in d_grads.values_mut() {
        grad.mapv_inplace(|v| v * scale);
    }
    state.opt_disc.apply(&mut model.params, &d_grads, lr, &cfg.optimizer);
    debug_assert_eq!(
        gen_checksum,
        model.params.checksum("gen/"),
        "discriminator update must not touch generator parameters"
    );

    let disc_checksum = if cfg!(debug_assertions) { model.params.checksum("disc/") } else { 0 };

    // Stage C: generator update, discriminating the fake path against the
    // freshly updated discriminator.
    let mut g_grads: HashMap<String, ArrayD<T>> = HashMap::new();
    let mut sums = LossReport::default();
    for ig in &mut items {
        let tape = &mut ig.tape;

        let mel_xhat = model.mel_graph(tape, ig.xhat);
        let mel_frames = tape.shape(mel_xhat)[1];
        let target = ig.mel_x.slice(ndarray::s![.., ..mel_frames]).to_owned();
        let mel_x_const = tape.constant(target.into_dyn());
        let diff = tape.sub(mel_xhat, mel_x_const);
        let absdiff = tape.abs(diff);
        let l_recon = tape.mean_all(absdiff);

        let l_kl = kl_graph(tape, ig.post_mu, ig.post_logs, ig.pri_mu, ig.pri_logs);

        let aug = if augment_active {
            Some((&cfg.augment, &mut state.rng, None))
        } else {
            None
        };
        let (fake_outs_g, _) = model.discriminate_graph(tape, ig.zhat, aug)?;
        let fake_scores: Vec<Var> = fake_outs_g.iter().map(|o| o.score).collect();
        let l_adv_g = gen_loss_graph(tape, &fake_scores, cfg.adversarial_form);

        let l_unc = if flags.uncertainty_on {
            let grid = cfg.model.uncertainty.fixed_length;
            let predictor_in = match cfg.predictor_input {
                super::PredictorInput::SampledLatent => ig.latent_z,
                super::PredictorInput::PriorMean => ig.pri_mu,
            };
            let u = model.predict_uncertainty_graph(tape, predictor_in);
            let d_var = if cfg.backprop_through_target {
                let len = ig.x_trim.len();
                let x_const = tape.constant(
                    ArrayD::from_shape_vec(IxDyn(&[1, len]), ig.x_trim.clone()).unwrap(),
                );
                let diff = tape.sub(ig.zhat, x_const);
                let sq = tape.square(diff);
                let sq_col = tape.transpose(sq); // (len, 1)
                let pool = tape.constant(pooling_matrix::<T>(len, grid).into_dyn());
                let pooled = tape.matmul(pool, sq_col); // (grid, 1)
                tape.transpose(pooled) // (1, grid)
            } else {
                // The target is a constant: no gradient into the generator
                // through d.
                let zhat_value: Vec<T> = tape.value(ig.zhat).iter().copied().collect();
                let (d, _) = target_distance(&ig.x_trim, &zhat_value, grid)?;
                tape.constant(ArrayD::from_shape_vec(IxDyn(&[1, grid]), d).unwrap())
            };
            let gap = tape.sub(d_var, u);
            let sq = tape.square(gap);
            Some(tape.mean_all(sq))
        } else {
            None
        };

        let l_fm = if cfg.weights.feature_match > 0.0 {
            // Feature matching between the posterior-sample features
            // (detached) and the prior-sample features.
            let xhat_value = tape.value(ig.xhat).clone();
            let xref = tape.constant(xhat_value);
            let (real_outs, _) = model.discriminate_graph(tape, xref, None)?;
            let mut terms = Vec::new();
            for (ro, fo) in real_outs.iter().zip(&fake_outs_g) {
                let r_value = tape.value(ro.raw_feature).clone();
                let r_const = tape.constant(r_value);
                let d = tape.sub(fo.raw_feature, r_const);
                let a = tape.abs(d);
                terms.push(tape.mean_all(a));
            }
            Some(mean_of(tape, &terms))
        } else {
            None
        };

        // Weighted total.
        let mut total = tape.mul_scalar(l_kl, T::from_config(cfg.weights.kl));
        let recon_w = tape.mul_scalar(l_recon, T::from_config(cfg.weights.recon));
        total = tape.add(total, recon_w);
        let adv_w = tape.mul_scalar(l_adv_g, T::from_config(cfg.weights.adv));
        total = tape.add(total, adv_w);
        if let Some(lu) = l_unc {
            let w = tape.mul_scalar(lu, T::from_config(cfg.weights.uncertainty));
            total = tape.add(total, w);
        }
        if let Some(lfm) = l_fm {
            let w = tape.mul_scalar(lfm, T::from_config(cfg.weights.feature_match));
            total = tape.add(total, w);
        }

        let kl_v = finite(tape.scalar(l_kl), "kl", step_no)?.to_f64().unwrap();
        let recon_v = finite(tape.scalar(l_recon), "recon", step_no)?.to_f64().unwrap();
        let adv_g_v = finite(tape.scalar(l_adv_g), "adv_g", step_no)?.to_f64().unwrap();
        let unc_v = match l_unc {
            Some(v) => finite(tape.scalar(v), "uncertainty", step_no)?.to_f64().unwrap(),
            None => 0.0,
        };
        let fm_v = match l_fm {
            Some(v) => finite(tape.scalar(v), "feature_match", step_no)?.to_f64().unwrap(),
            None => 0.0,
        };
        let total_v = finite(tape.scalar(total), "total_gen", step_no)?.to_f64().unwrap();

        sums.kl += kl_v;
        sums.recon += recon_v;
        sums.adv_g += adv_g_v;
        sums.uncertainty += unc_v;
        sums.feature_match += fm_v;
        sums.total_gen += total_v;

        let mut grads = tape.backward(total);
        for (name, grad) in tape.take_param_grads(&mut grads) {
            if name.starts_with("gen/") {
                match g_grads.get_mut(&name) {
                    Some(acc) => *acc += &grad,
                    None => {
                        g_grads.insert(name, grad);
                    }
                }
            }
        }
    }
    for grad in g_grads.values_mut() {
        grad.mapv_inplace(|v| v * scale);
    }
    state.opt_gen.apply(&mut model.params, &g_grads, lr, &cfg.optimizer);
    debug_assert_eq!(
        disc_checksum,
        model.params.checksum("disc/"),
        "generator update must not touch discriminator parameters"
    );

    state.step += 1;
    let b = batch.len() as f64;
    Ok(LossReport {
        kl: sums.kl / b,
        recon: sums.recon / b,
        adv_g: sums.adv_g / b,
        adv_d: adv_d_sum / b,
        uncertainty: sums.uncertainty / b,
        feature_match: sums.feature_match / b,
        total_gen: sums.total_gen / b,
        total_disc: adv_d_sum / b,
    })
}
