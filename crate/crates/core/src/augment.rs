//! Differentiable augmentation of discriminator features: temporal masking,
//! frequency masking, and interval-limited additive noise.
//!
//! All three operators act on a randomly selected partition of the feature
//! map and are applied through the autograd tape, so generator gradients flow
//! through the augmented features. Masking multiplies the selected interval
//! by a fixed value `v`; noise adds `alpha`-scaled standard Gaussian samples
//! inside the interval and leaves the rest bit-identical.

use ndarray::{ArrayD, Axis, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{Tape, Var};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("mask interval [{start}, {end}) exceeds axis extent {extent}")]
    OutOfBounds { start: usize, end: usize, extent: usize },
    #[error("feature map has no frequency axis; frequency masks apply to MRSD features only")]
    NoFrequencyAxis,
    #[error("invalid augmentation config: {0}")]
    BadConfig(String),
}

/// Which discriminator family produced a feature map; drives mask routing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscKind {
    /// Multi-resolution spectrogram discriminator (has a frequency axis).
    Mrsd,
    /// Multi-period discriminator.
    Mpd,
    /// Multi-scale discriminator.
    Msd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentMode {
    Mask,
    Noise,
    #[serde(rename = "mask+noise")]
    MaskNoise,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub mode: AugmentMode,
    /// Fraction of the axis extent to perturb.
    pub ratio: f64,
    /// Multiplier applied inside masked intervals.
    pub mask_value: f64,
    /// Scale of the interval noise.
    pub noise_scale: f64,
    /// Reuse one interval draw for the real-path and fake-path features of a
    /// component instead of drawing independently.
    pub shared_interval: bool,
    /// Interpret `noise_scale` relative to the feature map's standard
    /// deviation (taken as a constant) instead of absolute units.
    pub relative_to_std: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: true,
            mode: AugmentMode::Noise,
            ratio: 0.1,
            mask_value: 0.0,
            noise_scale: 0.1,
            shared_interval: false,
            relative_to_std: false,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(AugmentError::BadConfig(format!("ratio {} not in (0,1)", self.ratio)));
        }
        // v = 1 is admitted as the degenerate identity mask; training configs
        // use [0, 1).
        if !(0.0..=1.0).contains(&self.mask_value) {
            return Err(AugmentError::BadConfig(format!(
                "mask_value {} not in [0,1]",
                self.mask_value
            )));
        }
        if self.noise_scale < 0.0 {
            return Err(AugmentError::BadConfig(format!(
                "noise_scale {} must be >= 0",
                self.noise_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskAxisKind {
    Time,
    Frequency,
}

/// A sampled interval on one axis of a feature map. `len == 0` marks the
/// empty spec (the ratio floored to nothing); operators treat it as identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub axis: MaskAxisKind,
    pub start: usize,
    pub len: usize,
}

impl MaskSpec {
    pub fn empty(axis: MaskAxisKind) -> Self {
        MaskSpec { axis, start: 0, len: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Draw an interval of length `floor(extent * ratio)` with a uniform start.
/// Returns the empty spec when the floor comes out to zero.
pub fn sample_interval(
    axis: MaskAxisKind,
    extent: usize,
    ratio: f64,
    rng: &mut ChaCha8Rng,
) -> MaskSpec {
    assert!(extent >= 1, "extent must be at least 1");
    let len = (extent as f64 * ratio).floor() as usize;
    if len == 0 {
        return MaskSpec::empty(axis);
    }
    let start = rng.random_range(0..=extent - len);
    MaskSpec { axis, start, len }
}

fn check_bounds(spec: &MaskSpec, extent: usize) -> Result<(), AugmentError> {
    if spec.start + spec.len > extent {
        return Err(AugmentError::OutOfBounds {
            start: spec.start,
            end: spec.start + spec.len,
            extent,
        });
    }
    Ok(())
}

/// Multiplicative mask array for a feature shape: `v` inside the interval on
/// `axis_index`, 1 elsewhere.
pub fn mask_array<T: Scalar>(
    shape: &[usize],
    axis_index: usize,
    spec: &MaskSpec,
    v: f64,
) -> Result<ArrayD<T>, AugmentError> {
    check_bounds(spec, shape[axis_index])?;
    let mut mask = ArrayD::<T>::from_elem(IxDyn(shape), T::one());
    let value = T::from_config(v);
    for i in spec.start..spec.start + spec.len {
        mask.index_axis_mut(Axis(axis_index), i).fill(value);
    }
    Ok(mask)
}

/// Additive noise array: `alpha * N(0,1)` inside the interval, 0 elsewhere.
pub fn noise_array<T: Scalar>(
    shape: &[usize],
    axis_index: usize,
    spec: &MaskSpec,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ArrayD<T>, AugmentError> {
    check_bounds(spec, shape[axis_index])?;
    let mut noise = ArrayD::<T>::zeros(IxDyn(shape));
    let alpha_t = T::from_config(alpha);
    for i in spec.start..spec.start + spec.len {
        let mut lane = noise.index_axis_mut(Axis(axis_index), i);
        for slot in lane.iter_mut() {
            let draw: f64 = StandardNormal.sample(rng);
            *slot = alpha_t * T::from_config(draw);
        }
    }
    Ok(noise)
}

/// Scale the interval along the feature's time axis by `v`. Gradient with
/// respect to the features is the mask itself, elementwise.
pub fn mask_temporal<T: Scalar>(
    tape: &mut Tape<T>,
    f: Var,
    time_axis: usize,
    spec: &MaskSpec,
    v: f64,
) -> Result<Var, AugmentError> {
    debug_assert_eq!(spec.axis, MaskAxisKind::Time);
    if spec.is_empty() {
        return Ok(f);
    }
    let shape = tape.shape(f).to_vec();
    let mask = mask_array::<T>(&shape, time_axis, spec, v)?;
    let mask_leaf = tape.constant(mask);
    Ok(tape.mul(f, mask_leaf))
}

/// Scale a band along the feature's frequency axis by `v`. Only MRSD feature
/// maps carry a frequency axis.
pub fn mask_frequency<T: Scalar>(
    tape: &mut Tape<T>,
    f: Var,
    freq_axis: Option<usize>,
    spec: &MaskSpec,
    v: f64,
) -> Result<Var, AugmentError> {
    debug_assert_eq!(spec.axis, MaskAxisKind::Frequency);
    let axis = freq_axis.ok_or(AugmentError::NoFrequencyAxis)?;
    if spec.is_empty() {
        return Ok(f);
    }
    let shape = tape.shape(f).to_vec();
    let mask = mask_array::<T>(&shape, axis, spec, v)?;
    let mask_leaf = tape.constant(mask);
    Ok(tape.mul(f, mask_leaf))
}

/// Add fresh Gaussian noise inside the interval along the time axis; samples
/// outside stay bit-identical and the gradient w.r.t. `f` is the identity.
pub fn add_interval_noise<T: Scalar>(
    tape: &mut Tape<T>,
    f: Var,
    time_axis: usize,
    spec: &MaskSpec,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Var, AugmentError> {
    debug_assert_eq!(spec.axis, MaskAxisKind::Time);
    if spec.is_empty() || alpha == 0.0 {
        // Still consume the draws so RNG alignment does not depend on alpha.
        if !spec.is_empty() {
            let shape = tape.shape(f).to_vec();
            let _ = noise_array::<T>(&shape, time_axis, spec, alpha, rng)?;
        }
        return Ok(f);
    }
    let shape = tape.shape(f).to_vec();
    let noise = noise_array::<T>(&shape, time_axis, spec, alpha, rng)?;
    let noise_leaf = tape.constant(noise);
    Ok(tape.add(f, noise_leaf))
}

/// One discriminator feature map, as the augmentation router sees it.
#[derive(Debug, Clone, Copy)]
pub struct FeatureRef {
    pub var: Var,
    pub kind: DiscKind,
    pub time_axis: usize,
    pub freq_axis: Option<usize>,
}

/// Interval draws made for one forward pass, reusable across the real and
/// fake paths when `shared_interval` is set. Noise values are never reused.
#[derive(Debug, Clone, Default)]
pub struct AugmentDraws {
    pub mask: Vec<Option<MaskSpec>>,
    pub noise: Vec<Option<MaskSpec>>,
}

/// Apply the configured augmentation to each feature map: in mask mode MRSD
/// maps get a frequency-band mask while MPD/MSD maps get a temporal mask; in
/// noise mode every map gets interval noise along time; mask+noise composes
/// the two with independent intervals. A fresh interval is drawn per map per
/// forward pass unless `reuse` provides the draws.
pub fn augment_features<T: Scalar>(
    tape: &mut Tape<T>,
    features: &[FeatureRef],
    cfg: &AugmentConfig,
    rng: &mut ChaCha8Rng,
    reuse: Option<&AugmentDraws>,
) -> Result<(Vec<Var>, AugmentDraws), AugmentError> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(features.len());
    let mut draws = AugmentDraws::default();

    for (i, feat) in features.iter().enumerate() {
        let shape = tape.shape(feat.var).to_vec();
        let mut var = feat.var;

        let want_mask = matches!(cfg.mode, AugmentMode::Mask | AugmentMode::MaskNoise);
        let want_noise = matches!(cfg.mode, AugmentMode::Noise | AugmentMode::MaskNoise);

        if want_mask {
            let spec = match (reuse, feat.kind) {
                (Some(r), _) => r.mask[i],
                (None, DiscKind::Mrsd) => {
                    let axis = feat.freq_axis.ok_or(AugmentError::NoFrequencyAxis)?;
                    Some(sample_interval(MaskAxisKind::Frequency, shape[axis], cfg.ratio, rng))
                }
                (None, _) => Some(sample_interval(
                    MaskAxisKind::Time,
                    shape[feat.time_axis],
                    cfg.ratio,
                    rng,
                )),
            };
            if let Some(spec) = spec {
                var = match spec.axis {
                    MaskAxisKind::Frequency => {
                        mask_frequency(tape, var, feat.freq_axis, &spec, cfg.mask_value)?
                    }
                    MaskAxisKind::Time => {
                        mask_temporal(tape, var, feat.time_axis, &spec, cfg.mask_value)?
                    }
                };
            }
            draws.mask.push(spec);
        } else {
            draws.mask.push(None);
        }

        if want_noise {
            let spec = match reuse {
                Some(r) => r.noise[i],
                None => Some(sample_interval(
                    MaskAxisKind::Time,
                    shape[feat.time_axis],
                    cfg.ratio,
                    rng,
                )),
            };
            if let Some(spec) = spec {
                let alpha = if cfg.relative_to_std {
                    let value = tape.value(var);
                    let n = value.len() as f64;
                    let mean: f64 = value.iter().map(|v| v.to_f64().unwrap()).sum::<f64>() / n;
                    let var_sum: f64 = value
                        .iter()
                        .map(|v| {
                            let d = v.to_f64().unwrap() - mean;
                            d * d
                        })
                        .sum::<f64>();
                    cfg.noise_scale * (var_sum / n).sqrt()
                } else {
                    cfg.noise_scale
                };
                var = add_interval_noise(tape, var, feat.time_axis, &spec, alpha, rng)?;
            }
            draws.noise.push(spec);
        } else {
            draws.noise.push(None);
        }

        out.push(var);
    }
    Ok((out, draws))
}

/// Deterministic helper for tests: a seeded RNG.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::numeric::{central_diff_grad, relative_error};
    use ndarray::IxDyn;
    use proptest::prelude::*;

    fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> ArrayD<f64> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
    }

    #[test]
    fn interval_lengths_follow_the_floor_rule() {
        let mut rng = seeded_rng(1);
        let spec = sample_interval(MaskAxisKind::Time, 100, 0.1, &mut rng);
        assert_eq!(spec.len, 10);

        let spec = sample_interval(MaskAxisKind::Time, 5, 0.1, &mut rng);
        assert!(spec.is_empty());
    }

    #[test]
    fn interval_start_covers_the_whole_support() {
        let mut rng = seeded_rng(2);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..2000 {
            let spec = sample_interval(MaskAxisKind::Time, 10, 0.25, &mut rng);
            assert_eq!(spec.len, 2);
            assert!(spec.start <= 8);
            seen.insert(spec.start);
        }
        assert_eq!(seen.len(), 9, "all starts 0..=8 should occur");
    }

    #[test]
    fn temporal_mask_zeroes_the_selected_span() {
        let mut tape = Tape::<f64>::new();
        let ones = tape.constant(ArrayD::from_elem(IxDyn(&[2, 10]), 1.0));
        let spec = MaskSpec { axis: MaskAxisKind::Time, start: 4, len: 3 };
        let out = mask_temporal(&mut tape, ones, 1, &spec, 0.0).unwrap();
        let v = tape.value(out);
        for c in 0..2 {
            for t in 0..10 {
                let expect = if (4..7).contains(&t) { 0.0 } else { 1.0 };
                assert_eq!(v[[c, t]], expect, "({c},{t})");
            }
        }
    }

    #[test]
    fn unit_mask_value_is_identity_bitwise() {
        let mut rng = seeded_rng(3);
        let f = randn(&mut rng, &[3, 8]);
        let mut tape = Tape::<f64>::new();
        let leaf = tape.constant(f.clone());
        let spec = MaskSpec { axis: MaskAxisKind::Time, start: 2, len: 4 };
        let out = mask_temporal(&mut tape, leaf, 1, &spec, 1.0).unwrap();
        assert_eq!(tape.value(out), &f);
    }

    #[test]
    fn frequency_mask_zeroes_bins_across_frames() {
        let mut tape = Tape::<f64>::new();
        let ones = tape.constant(ArrayD::from_elem(IxDyn(&[1, 8, 6]), 1.0));
        let spec = MaskSpec { axis: MaskAxisKind::Frequency, start: 2, len: 2 };
        let out = mask_frequency(&mut tape, ones, Some(1), &spec, 0.0).unwrap();
        let v = tape.value(out);
        for xi in 0..8 {
            for t in 0..6 {
                let expect = if (2..4).contains(&xi) { 0.0 } else { 1.0 };
                assert_eq!(v[[0, xi, t]], expect);
            }
        }
    }

    #[test]
    fn masked_band_energy_scales_by_v_squared() {
        let mut rng = seeded_rng(4);
        let f = randn(&mut rng, &[2, 8, 5]);
        let spec = MaskSpec { axis: MaskAxisKind::Frequency, start: 3, len: 2 };
        let v = 0.5f64;
        let mut tape = Tape::<f64>::new();
        let leaf = tape.constant(f.clone());
        let out = mask_frequency(&mut tape, leaf, Some(1), &spec, v).unwrap();
        let masked = tape.value(out);

        let region_energy = |arr: &ArrayD<f64>| -> f64 {
            let mut e = 0.0;
            for c in 0..2 {
                for xi in 3..5 {
                    for t in 0..5 {
                        e += arr[[c, xi, t]] * arr[[c, xi, t]];
                    }
                }
            }
            e
        };
        let before = region_energy(&f);
        let after = region_energy(masked);
        assert!((after - v * v * before).abs() < 1e-12);
    }

    #[test]
    fn frequency_mask_requires_a_frequency_axis() {
        let mut tape = Tape::<f64>::new();
        let f = tape.constant(ArrayD::zeros(IxDyn(&[2, 10])));
        let spec = MaskSpec { axis: MaskAxisKind::Frequency, start: 0, len: 1 };
        assert!(matches!(
            mask_frequency(&mut tape, f, None, &spec, 0.0),
            Err(AugmentError::NoFrequencyAxis)
        ));
    }

    #[test]
    fn out_of_bounds_specs_are_rejected() {
        let mut tape = Tape::<f64>::new();
        let f = tape.constant(ArrayD::zeros(IxDyn(&[2, 10])));
        let spec = MaskSpec { axis: MaskAxisKind::Time, start: 8, len: 5 };
        assert!(matches!(
            mask_temporal(&mut tape, f, 1, &spec, 0.0),
            Err(AugmentError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn zero_alpha_noise_is_identity_bitwise() {
        let mut rng = seeded_rng(5);
        let f = randn(&mut rng, &[4, 12]);
        let mut tape = Tape::<f64>::new();
        let leaf = tape.constant(f.clone());
        let spec = MaskSpec { axis: MaskAxisKind::Time, start: 3, len: 4 };
        let out = add_interval_noise(&mut tape, leaf, 1, &spec, 0.0, &mut rng).unwrap();
        assert_eq!(tape.value(out), &f);
    }

    #[test]
    fn noise_leaves_the_outside_bit_identical() {
        let mut rng = seeded_rng(6);
        let f = randn(&mut rng, &[4, 12]);
        let mut tape = Tape::<f64>::new();
        let leaf = tape.constant(f.clone());
        let spec = MaskSpec { axis: MaskAxisKind::Time, start: 3, len: 4 };
        let out = add_interval_noise(&mut tape, leaf, 1, &spec, 0.7, &mut rng).unwrap();
        let v = tape.value(out);
        for c in 0..4 {
            for t in 0..12 {
                if (3..7).contains(&t) {
                    assert_ne!(v[[c, t]], f[[c, t]], "inside should be perturbed");
                } else {
                    assert_eq!(v[[c, t]].to_bits(), f[[c, t]].to_bits());
                }
            }
        }
    }

    #[test]
    fn interval_noise_has_alpha_squared_variance() {
        let mut rng = seeded_rng(7);
        let alpha = 0.3f64;
        let shape = [2usize, 20];
        let spec = MaskSpec { axis: MaskAxisKind::Time, start: 5, len: 5 };
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        let mut n = 0usize;
        for _ in 0..1000 {
            let noise = noise_array::<f64>(&shape, 1, &spec, alpha, &mut rng).unwrap();
            for t in 5..10 {
                for c in 0..2 {
                    let d = noise[[c, t]];
                    sum += d;
                    sum_sq += d * d;
                    n += 1;
                }
            }
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!((var - alpha * alpha).abs() / (alpha * alpha) < 0.05, "var {var}");
    }

    #[test]
    fn mask_gradient_matches_finite_differences() {
        let mut rng = seeded_rng(8);
        let f = randn(&mut rng, &[3, 10]);
        let weights = randn(&mut rng, &[3, 10]);
        let spec = MaskSpec { axis: MaskAxisKind::Time, start: 2, len: 5 };

        let run = |probe: &ArrayD<f64>| -> (f64, Option<ArrayD<f64>>) {
            let mut tape = Tape::<f64>::new();
            let leaf = tape.param("f", probe.clone());
            let masked = mask_temporal(&mut tape, leaf, 1, &spec, 0.25).unwrap();
            let w = tape.constant(weights.clone());
            let prod = tape.mul(masked, w);
            let loss = tape.sum_all(prod);
            let grads = tape.backward(loss);
            (tape.scalar(loss), grads.get(leaf).cloned())
        };
        let (_, analytic) = run(&f);
        let numeric = central_diff_grad(|p| run(p).0, &f, 1e-6);
        let err = relative_error(&analytic.unwrap(), &numeric);
        assert!(err <= 1e-6, "rel err {err:.3e}");
    }

    #[test]
    fn routing_masks_frequency_for_mrsd_and_time_for_msd() {
        let mut rng = seeded_rng(9);
        let mrsd = ArrayD::from_elem(IxDyn(&[2, 8, 6]), 1.0);
        let msd = ArrayD::from_elem(IxDyn(&[4, 20]), 1.0);
        let mut tape = Tape::<f64>::new();
        let mrsd_leaf = tape.constant(mrsd);
        let msd_leaf = tape.constant(msd);
        let features = [
            FeatureRef { var: mrsd_leaf, kind: DiscKind::Mrsd, time_axis: 2, freq_axis: Some(1) },
            FeatureRef { var: msd_leaf, kind: DiscKind::Msd, time_axis: 1, freq_axis: None },
        ];
        let cfg = AugmentConfig {
            mode: AugmentMode::Mask,
            ratio: 0.25,
            mask_value: 0.0,
            ..AugmentConfig::default()
        };
        let (out, draws) = augment_features(&mut tape, &features, &cfg, &mut rng, None).unwrap();

        // MRSD: some frequency band is zero across all frames.
        let m = tape.value(out[0]);
        let spec = draws.mask[0].unwrap();
        assert_eq!(spec.axis, MaskAxisKind::Frequency);
        for xi in spec.start..spec.start + spec.len {
            for c in 0..2 {
                for t in 0..6 {
                    assert_eq!(m[[c, xi, t]], 0.0);
                }
            }
        }
        // MSD: some time span is zero across all channels.
        let s = tape.value(out[1]);
        let spec = draws.mask[1].unwrap();
        assert_eq!(spec.axis, MaskAxisKind::Time);
        for t in spec.start..spec.start + spec.len {
            for c in 0..4 {
                assert_eq!(s[[c, t]], 0.0);
            }
        }
    }

    #[test]
    fn mask_then_noise_composes() {
        let mut rng = seeded_rng(10);
        let msd = ArrayD::from_elem(IxDyn(&[1, 40]), 1.0);
        let mut tape = Tape::<f64>::new();
        let leaf = tape.constant(msd);
        let features =
            [FeatureRef { var: leaf, kind: DiscKind::Msd, time_axis: 1, freq_axis: None }];
        let cfg = AugmentConfig {
            mode: AugmentMode::MaskNoise,
            ratio: 0.2,
            mask_value: 0.0,
            noise_scale: 0.5,
            ..AugmentConfig::default()
        };
        let (out, draws) = augment_features(&mut tape, &features, &cfg, &mut rng, None).unwrap();
        let v = tape.value(out[0]);
        let mask = draws.mask[0].unwrap();
        let noise = draws.noise[0].unwrap();
        for t in 0..40 {
            let masked = (mask.start..mask.start + mask.len).contains(&t);
            let noised = (noise.start..noise.start + noise.len).contains(&t);
            match (masked, noised) {
                (true, false) => assert_eq!(v[[0, t]], 0.0),
                (false, false) => assert_eq!(v[[0, t]], 1.0),
                // Noised positions moved away from their pre-noise value.
                (true, true) => assert_ne!(v[[0, t]], 0.0),
                (false, true) => assert_ne!(v[[0, t]], 1.0),
            }
        }
    }

    #[test]
    fn shared_draws_reuse_the_interval() {
        let mut rng = seeded_rng(11);
        let a = ArrayD::from_elem(IxDyn(&[1, 30]), 1.0);
        let mut tape = Tape::<f64>::new();
        let leaf_a = tape.constant(a.clone());
        let leaf_b = tape.constant(a);
        let feats_a =
            [FeatureRef { var: leaf_a, kind: DiscKind::Msd, time_axis: 1, freq_axis: None }];
        let feats_b =
            [FeatureRef { var: leaf_b, kind: DiscKind::Msd, time_axis: 1, freq_axis: None }];
        let cfg =
            AugmentConfig { mode: AugmentMode::Mask, shared_interval: true, ..Default::default() };
        let (_, draws) = augment_features(&mut tape, &feats_a, &cfg, &mut rng, None).unwrap();
        let (_, draws_b) =
            augment_features(&mut tape, &feats_b, &cfg, &mut rng, Some(&draws)).unwrap();
        assert_eq!(draws.mask, draws_b.mask);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn interval_length_is_exactly_the_floor(
            extent in 2usize..512,
            ratio in 0.001f64..0.999,
            seed in 0u64..1_000_000,
        ) {
            let mut rng = seeded_rng(seed);
            let spec = sample_interval(MaskAxisKind::Time, extent, ratio, &mut rng);
            let expect = (extent as f64 * ratio).floor() as usize;
            prop_assert_eq!(spec.len, expect);
            if !spec.is_empty() {
                prop_assert!(spec.start + spec.len <= extent);
            }
        }

        #[test]
        fn outside_stays_bit_identical_for_masks(
            extent in 4usize..64,
            ratio in 0.05f64..0.9,
            v in 0.0f64..0.99,
            seed in 0u64..1_000_000,
        ) {
            let mut rng = seeded_rng(seed);
            let f = randn(&mut rng, &[2, extent]);
            let spec = sample_interval(MaskAxisKind::Time, extent, ratio, &mut rng);
            let mut tape = Tape::<f64>::new();
            let leaf = tape.constant(f.clone());
            let out = mask_temporal(&mut tape, leaf, 1, &spec, v).unwrap();
            let got = tape.value(out);
            for c in 0..2 {
                for t in 0..extent {
                    let inside = !spec.is_empty()
                        && (spec.start..spec.start + spec.len).contains(&t);
                    if inside {
                        prop_assert_eq!(got[[c, t]], f[[c, t]] * v);
                    } else {
                        prop_assert_eq!(got[[c, t]].to_bits(), f[[c, t]].to_bits());
                    }
                }
            }
        }
    }
}
