//! Deterministic toy singing synthesizer and seeded corpus generation.
//!
//! Voiced phonemes are rendered as a phase-continuous harmonic series shaped
//! by the phoneme's formant resonances, unvoiced phonemes as band-limited
//! noise, rests (MIDI pitch 0) as silence. F0 and voicing ground truth are
//! filled analytically from the score on the same frame grid the STFT uses.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    fnv1a64, midi_to_hz, save_manifest, save_score_file, wav, CorpusError, CorpusManifest,
    ManifestEntry, MusicScore, PhonemeInventory, PhonemeKind, Split, Utterance,
};
use crate::scalar::Scalar;

/// Rendering controls for [`synthesize_toy_voice`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ToyVoiceParams {
    pub inventory: PhonemeInventory,
    /// Frame hop used for the analytic F0/voicing tracks.
    pub hop_length: usize,
    /// 5 Hz, +/-30 cent vibrato on voiced notes.
    pub vibrato: bool,
    pub vibrato_rate_hz: f64,
    pub vibrato_depth_cents: f64,
    /// Raised-cosine fade at note edges, seconds.
    pub fade_seconds: f64,
    /// Articulation silence carved from the tail of every note, seconds.
    /// Keeps adjacent pitches from overlapping inside one analysis window.
    pub inter_note_gap_seconds: f64,
    /// Pre-normalization gain of unvoiced noise segments.
    pub noise_gain: f64,
    /// Spectral floor keeping every harmonic audible regardless of formants.
    pub formant_floor: f64,
}

impl Default for ToyVoiceParams {
    fn default() -> Self {
        ToyVoiceParams {
            inventory: PhonemeInventory::default(),
            hop_length: 256,
            vibrato: false,
            vibrato_rate_hz: 5.0,
            vibrato_depth_cents: 30.0,
            fade_seconds: 0.005,
            inter_note_gap_seconds: 0.012,
            noise_gain: 0.35,
            formant_floor: 0.30,
        }
    }
}

fn formant_gain(freq: f64, formants: &[f64; 3], floor: f64) -> f64 {
    let widths = [90.0, 110.0, 140.0];
    let mut g = floor;
    for (center, width) in formants.iter().zip(widths) {
        let z = (freq - center) / width;
        g += (-0.5 * z * z).exp();
    }
    g
}

/// Windowed-sinc band-pass FIR used for unvoiced phonemes.
fn bandpass_fir(lo: f64, hi: f64, sample_rate: u32, taps: usize) -> Vec<f64> {
    let sr = sample_rate as f64;
    let nyquist = sr / 2.0;
    let (lo, hi) = (lo.min(nyquist * 0.98), hi.min(nyquist * 0.98));
    let mid = (taps / 2) as isize;
    let sinc = |fc: f64, n: isize| {
        let x = n as f64;
        if n == 0 {
            2.0 * fc / sr
        } else {
            (2.0 * std::f64::consts::PI * fc * x / sr).sin() / (std::f64::consts::PI * x)
        }
    };
    (0..taps)
        .map(|i| {
            let n = i as isize - mid;
            let hamming = 0.54
                - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (taps - 1) as f64).cos();
            (sinc(hi, n) - sinc(lo, n)) * hamming
        })
        .collect()
}

/// Deterministic toy singing for a score: same `(score, sample_rate, seed)`
/// always yields the bit-identical utterance.
pub fn synthesize_toy_voice<T: Scalar>(
    score: &MusicScore,
    sample_rate: u32,
    seed: u64,
    params: &ToyVoiceParams,
) -> Result<Utterance<T>, CorpusError> {
    if sample_rate < 8000 {
        return Err(CorpusError::InvalidScore(format!(
            "sample rate {sample_rate} below the 8000 Hz minimum"
        )));
    }
    score.validate(&params.inventory)?;

    let sr = sample_rate as f64;
    let mut boundaries = Vec::with_capacity(score.len() + 1);
    let mut cum = 0.0f64;
    boundaries.push(0usize);
    for &d in &score.durations {
        cum += d;
        boundaries.push((sr * cum).round() as usize);
    }
    let total = *boundaries.last().unwrap();

    let mut wave = vec![0.0f64; total];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fade = (params.fade_seconds * sr).round() as usize;

    let vibrato_factor = |t_sec: f64| -> f64 {
        if params.vibrato {
            let cents = params.vibrato_depth_cents
                * (2.0 * std::f64::consts::PI * params.vibrato_rate_hz * t_sec).sin();
            2f64.powf(cents / 1200.0)
        } else {
            1.0
        }
    };

    let gap = (params.inter_note_gap_seconds * sr).round() as usize;
    // Sounding range of each note: the note minus its articulation gap.
    let sounding: Vec<(usize, usize)> = (0..score.len())
        .map(|i| {
            let (start, end) = (boundaries[i], boundaries[i + 1]);
            let len = end.saturating_sub(start);
            let cut = if i + 1 < score.len() { gap.min(len / 4) } else { 0 };
            (start, end - cut)
        })
        .collect();

    for i in 0..score.len() {
        let (start, end) = sounding[i];
        if end <= start {
            continue;
        }
        let len = end - start;
        let env = |j: usize| -> f64 {
            let head = fade.min(len / 2);
            if head == 0 {
                return 1.0;
            }
            let ramp = |k: usize| 0.5 - 0.5 * (std::f64::consts::PI * k as f64 / head as f64).cos();
            if j < head {
                ramp(j)
            } else if j >= len - head {
                ramp(len - 1 - j)
            } else {
                1.0
            }
        };

        let pitch = score.pitches[i];
        let def = params.inventory.lookup(&score.phonemes[i]).expect("validated");
        match (&def.kind, pitch) {
            (_, 0) => {} // rest
            (PhonemeKind::Vowel { formants }, _) => {
                let f0 = midi_to_hz(pitch);
                let max_harmonic = ((0.45 * sr) / f0).floor().max(1.0) as usize;
                let mut amps: Vec<f64> = (1..=max_harmonic)
                    .map(|h| {
                        formant_gain(h as f64 * f0, formants, params.formant_floor) / h as f64
                    })
                    .collect();
                let norm: f64 = amps.iter().sum();
                for a in &mut amps {
                    *a /= norm;
                }

                let mut phase = 0.0f64;
                for j in 0..len {
                    let t_sec = (start + j) as f64 / sr;
                    let f_inst = f0 * vibrato_factor(t_sec);
                    phase += 2.0 * std::f64::consts::PI * f_inst / sr;
                    let mut s = 0.0f64;
                    for (h, &a) in amps.iter().enumerate() {
                        s += a * ((h + 1) as f64 * phase).sin();
                    }
                    wave[start + j] = s * env(j);
                }
            }
            (PhonemeKind::Unvoiced { band }, _) => {
                let fir = bandpass_fir(band.0, band.1, sample_rate, 127);
                let pad = fir.len() / 2;
                let noise: Vec<f64> = (0..len + fir.len())
                    .map(|_| {
                        let x: f64 = StandardNormal.sample(&mut rng);
                        x
                    })
                    .collect();
                for j in 0..len {
                    let mut acc = 0.0f64;
                    for (k, &c) in fir.iter().enumerate() {
                        acc += c * noise[j + pad + fir.len() / 2 - k];
                    }
                    wave[start + j] = acc * params.noise_gain * env(j);
                }
            }
        }
    }

    // Peak-normalize to 0.95 unless the score was all rests.
    let peak = wave.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak > 0.0 {
        let scale = 0.95 / peak;
        for v in &mut wave {
            *v *= scale;
        }
    }

    // Analytic ground truth on the STFT frame grid (centers at t * hop).
    let frames = 1 + total / params.hop_length;
    let mut f0_ref = vec![T::zero(); frames];
    let mut vuv_ref = vec![false; frames];
    for t in 0..frames {
        let center = t * params.hop_length;
        if center >= total {
            continue;
        }
        let note = match boundaries.binary_search(&center) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        if note >= score.len() {
            continue;
        }
        // Voicing ground truth covers the fully developed part of the note:
        // fade ramps and the articulation gap are transition regions, not
        // periodic signal.
        let (s_start, s_end) = sounding[note];
        if center < s_start + fade || center + fade >= s_end {
            continue;
        }
        let pitch = score.pitches[note];
        let def = params.inventory.lookup(&score.phonemes[note]).expect("validated");
        if pitch > 0 && matches!(def.kind, PhonemeKind::Vowel { .. }) {
            let hz = midi_to_hz(pitch) * vibrato_factor(center as f64 / sr);
            f0_ref[t] = T::from_config(hz);
            vuv_ref[t] = true;
        }
    }

    Ok(Utterance {
        id: String::new(),
        waveform: wave.into_iter().map(T::from_config).collect(),
        sample_rate,
        score: score.clone(),
        f0_ref,
        vuv_ref,
    })
}

/// Seeded random-score settings for corpus generation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RandomScoreParams {
    pub min_notes: usize,
    pub max_notes: usize,
    pub pitch_lo: u8,
    pub pitch_hi: u8,
    pub duration_lo: f64,
    pub duration_hi: f64,
    pub rest_prob: f64,
    pub consonant_prob: f64,
}

impl Default for RandomScoreParams {
    fn default() -> Self {
        RandomScoreParams {
            min_notes: 4,
            max_notes: 16,
            pitch_lo: 50,
            pitch_hi: 80,
            duration_lo: 0.1,
            duration_hi: 0.8,
            rest_prob: 0.1,
            consonant_prob: 0.15,
        }
    }
}

/// Draw a random score from the generator settings.
pub fn random_score(
    rng: &mut ChaCha8Rng,
    params: &RandomScoreParams,
    inventory: &PhonemeInventory,
) -> MusicScore {
    let vowels: Vec<&str> = inventory.vowels().map(|d| d.symbol.as_str()).collect();
    let consonants: Vec<&str> = inventory.consonants().map(|d| d.symbol.as_str()).collect();
    let n = rng.random_range(params.min_notes..=params.max_notes);

    let mut phonemes = Vec::with_capacity(n);
    let mut pitches = Vec::with_capacity(n);
    let mut durations = Vec::with_capacity(n);
    for _ in 0..n {
        let roll: f64 = rng.random();
        let pitch = rng.random_range(params.pitch_lo..=params.pitch_hi);
        if roll < params.rest_prob {
            phonemes.push(vowels[rng.random_range(0..vowels.len())].to_string());
            pitches.push(0);
        } else if roll < params.rest_prob + params.consonant_prob && !consonants.is_empty() {
            phonemes.push(consonants[rng.random_range(0..consonants.len())].to_string());
            pitches.push(pitch);
        } else {
            phonemes.push(vowels[rng.random_range(0..vowels.len())].to_string());
            pitches.push(pitch);
        }
        durations.push(rng.random_range(params.duration_lo..params.duration_hi));
    }
    MusicScore { phonemes, pitches, durations }
}

fn splitmix64(seed: u64, i: u64) -> u64 {
    let mut z = seed.wrapping_add(i.wrapping_mul(0x9E3779B97F4A7C15)).wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// 80/10/10 split sizes with every split non-empty.
fn split_counts(n: usize) -> (usize, usize, usize) {
    let dev = (n / 10).max(1);
    let test = (n / 10).max(1);
    (n - dev - test, dev, test)
}

pub fn generate_corpus(
    num_utts: usize,
    sample_rate: u32,
    seed: u64,
    out_dir: &Path,
) -> Result<CorpusManifest, CorpusError> {
    generate_corpus_with(
        num_utts,
        sample_rate,
        seed,
        out_dir,
        &RandomScoreParams::default(),
        &ToyVoiceParams::default(),
    )
}

/// Write scores, audio and a manifest for a seeded synthetic corpus. Ids are
/// ranked by hash to assign splits, so membership is stable under reruns.
pub fn generate_corpus_with(
    num_utts: usize,
    sample_rate: u32,
    seed: u64,
    out_dir: &Path,
    score_params: &RandomScoreParams,
    voice_params: &ToyVoiceParams,
) -> Result<CorpusManifest, CorpusError> {
    if num_utts < 3 {
        return Err(CorpusError::TooFewUtterances(num_utts));
    }
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |e: std::io::Error| CorpusError::Io { path: p.clone(), source: e }
    };
    let scores_dir = out_dir.join("scores");
    let wav_dir = out_dir.join("wav");
    fs::create_dir_all(&scores_dir).map_err(io_err(&scores_dir))?;
    fs::create_dir_all(&wav_dir).map_err(io_err(&wav_dir))?;

    let ids: Vec<String> = (0..num_utts).map(|i| format!("utt_{i:04}")).collect();

    // Rank ids by hash; the first 80% of the ranking becomes train.
    let mut ranked: Vec<&String> = ids.iter().collect();
    ranked.sort_by_key(|id| (fnv1a64(id), (*id).clone()));
    let (n_train, n_dev, _) = split_counts(num_utts);
    let mut split_of = std::collections::HashMap::new();
    for (rank, id) in ranked.iter().enumerate() {
        let split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
        split_of.insert((*id).clone(), split);
    }

    let mut entries = Vec::with_capacity(num_utts);
    for (i, id) in ids.iter().enumerate() {
        let utt_seed = splitmix64(seed, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(utt_seed);
        let score = random_score(&mut rng, score_params, &voice_params.inventory);
        let utt: Utterance<f64> =
            synthesize_toy_voice(&score, sample_rate, utt_seed, voice_params)?;

        let score_rel = format!("scores/{id}.score");
        let audio_rel = format!("wav/{id}.wav");
        save_score_file(&out_dir.join(&score_rel), &score)?;
        wav::write_wav(&out_dir.join(&audio_rel), sample_rate, &utt.waveform)?;

        entries.push(ManifestEntry {
            id: id.clone(),
            score: score_rel,
            audio: audio_rel,
            split: split_of[id],
        });
    }

    let manifest =
        CorpusManifest { sample_rate, seed, entries, root: out_dir.to_path_buf() };
    save_manifest(&manifest, &out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
