//! Music-score and utterance data model, a deterministic toy singing corpus
//! with analytic ground truth, and the pipe-delimited score file format.

mod manifest;
mod score;
mod synth;
pub mod wav;

pub use manifest::{load_manifest, save_manifest, split_manifest, CorpusManifest, ManifestEntry, Split};
pub use score::{load_score_file, save_score_file};
pub use synth::{
    generate_corpus, generate_corpus_with, random_score, synthesize_toy_voice, RandomScoreParams,
    ToyVoiceParams,
};

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("unknown phoneme symbol '{symbol}'")]
    UnknownPhoneme { symbol: String },
    #[error("MIDI pitch {pitch} outside 0..=127")]
    PitchOutOfRange { pitch: u32 },
    #[error("invalid score: {0}")]
    InvalidScore(String),
    #[error("corpus needs at least 3 utterances, got {0}")]
    TooFewUtterances(usize),
    #[error("{path}: not a valid WAV file: {msg}")]
    BadWav { path: PathBuf, msg: String },
    #[error("manifest references missing file {0}")]
    MissingFile(PathBuf),
    #[error("duplicate utterance id '{0}'")]
    DuplicateId(String),
    #[error("unknown split tag '{0}' (expected train, dev or test)")]
    UnknownSplit(String),
}

/// Aligned phoneme / MIDI pitch / duration sequences conditioning synthesis.
/// Pitch 0 denotes a rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicScore {
    pub phonemes: Vec<String>,
    pub pitches: Vec<u8>,
    pub durations: Vec<f64>,
}

impl MusicScore {
    pub fn new(
        phonemes: Vec<String>,
        pitches: Vec<u8>,
        durations: Vec<f64>,
    ) -> Result<Self, CorpusError> {
        let score = MusicScore { phonemes, pitches, durations };
        score.check_lengths()?;
        Ok(score)
    }

    fn check_lengths(&self) -> Result<(), CorpusError> {
        if self.phonemes.is_empty() {
            return Err(CorpusError::InvalidScore("no notes".to_string()));
        }
        if self.phonemes.len() != self.pitches.len() || self.pitches.len() != self.durations.len()
        {
            return Err(CorpusError::InvalidScore(format!(
                "sequence lengths differ: {} phonemes, {} pitches, {} durations",
                self.phonemes.len(),
                self.pitches.len(),
                self.durations.len()
            )));
        }
        if let Some(d) = self.durations.iter().find(|d| !(**d > 0.0)) {
            return Err(CorpusError::InvalidScore(format!("non-positive duration {d}")));
        }
        Ok(())
    }

    /// Validate against a phoneme inventory and the MIDI range.
    pub fn validate(&self, inventory: &PhonemeInventory) -> Result<(), CorpusError> {
        self.check_lengths()?;
        for p in &self.phonemes {
            if inventory.lookup(p).is_none() {
                return Err(CorpusError::UnknownPhoneme { symbol: p.clone() });
            }
        }
        for &p in &self.pitches {
            if p > 127 {
                return Err(CorpusError::PitchOutOfRange { pitch: p as u32 });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.phonemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phonemes.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.durations.iter().sum()
    }
}

/// Equal-temperament frequency of a MIDI note number.
pub fn midi_to_hz(pitch: u8) -> f64 {
    440.0 * 2f64.powf((pitch as f64 - 69.0) / 12.0)
}

/// A waveform with its score and analytic F0/voicing ground truth.
#[derive(Debug, Clone)]
pub struct Utterance<T: Scalar> {
    pub id: String,
    pub waveform: Vec<T>,
    pub sample_rate: u32,
    pub score: MusicScore,
    pub f0_ref: Vec<T>,
    pub vuv_ref: Vec<bool>,
}

/// How a phoneme is rendered by the toy voice.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum PhonemeKind {
    /// Harmonic series shaped by three formant resonances (Hz).
    Vowel { formants: [f64; 3] },
    /// Band-limited noise between the two corner frequencies (Hz).
    Unvoiced { band: (f64, f64) },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PhonemeDef {
    pub symbol: String,
    pub kind: PhonemeKind,
}

/// The configured phoneme set; defaults to eight vowels with fixed formant
/// tables and four unvoiced consonants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhonemeInventory {
    pub defs: Vec<PhonemeDef>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PartialEq for PhonemeInventory {
    fn eq(&self, other: &Self) -> bool {
        // The index is a derived cache; identity is the definition list.
        self.defs == other.defs
    }
}

impl PhonemeInventory {
    pub fn new(defs: Vec<PhonemeDef>) -> Self {
        let index = defs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.symbol.clone(), i))
            .collect();
        PhonemeInventory { defs, index }
    }

    pub fn lookup(&self, symbol: &str) -> Option<&PhonemeDef> {
        if self.index.len() != self.defs.len() {
            // Deserialized inventories arrive without the index.
            return self.defs.iter().find(|d| d.symbol == symbol);
        }
        self.index.get(symbol).map(|&i| &self.defs[i])
    }

    pub fn id_of(&self, symbol: &str) -> Option<usize> {
        if self.index.len() != self.defs.len() {
            return self.defs.iter().position(|d| d.symbol == symbol);
        }
        self.index.get(symbol).copied()
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn vowels(&self) -> impl Iterator<Item = &PhonemeDef> {
        self.defs.iter().filter(|d| matches!(d.kind, PhonemeKind::Vowel { .. }))
    }

    pub fn consonants(&self) -> impl Iterator<Item = &PhonemeDef> {
        self.defs.iter().filter(|d| matches!(d.kind, PhonemeKind::Unvoiced { .. }))
    }
}

impl Default for PhonemeInventory {
    fn default() -> Self {
        let vowel = |symbol: &str, f1: f64, f2: f64, f3: f64| PhonemeDef {
            symbol: symbol.to_string(),
            kind: PhonemeKind::Vowel { formants: [f1, f2, f3] },
        };
        let noise = |symbol: &str, lo: f64, hi: f64| PhonemeDef {
            symbol: symbol.to_string(),
            kind: PhonemeKind::Unvoiced { band: (lo, hi) },
        };
        // Vowel formants after the classic American English measurement
        // tables; consonant bands are coarse fricative ranges.
        PhonemeInventory::new(vec![
            vowel("a", 730.0, 1090.0, 2440.0),
            vowel("ae", 660.0, 1720.0, 2410.0),
            vowel("e", 530.0, 1840.0, 2480.0),
            vowel("er", 490.0, 1350.0, 1690.0),
            vowel("i", 270.0, 2290.0, 3010.0),
            vowel("o", 570.0, 840.0, 2410.0),
            vowel("u", 300.0, 870.0, 2240.0),
            vowel("uh", 640.0, 1190.0, 2390.0),
            noise("f", 1200.0, 7000.0),
            noise("h", 400.0, 2500.0),
            noise("s", 4000.0, 7500.0),
            noise("sh", 2000.0, 5000.0),
        ])
    }
}

/// Stable 64-bit FNV-1a, used to order ids into splits.
pub(crate) fn fnv1a64(s: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests;
