//! Pipe-delimited score files: one note per line,
//! `phoneme|midi_pitch|duration_seconds`, `#` starts a comment.

use std::fs;
use std::path::Path;

use super::{CorpusError, MusicScore, PhonemeInventory};

pub fn load_score_file(path: &Path, inventory: &PhonemeInventory) -> Result<MusicScore, CorpusError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CorpusError::Io { path: path.to_path_buf(), source: e })?;
    let err = |line: usize, msg: String| CorpusError::Parse { path: path.to_path_buf(), line, msg };

    let mut phonemes = Vec::new();
    let mut pitches = Vec::new();
    let mut durations = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 3 {
            return Err(err(
                line_no,
                format!("expected phoneme|pitch|duration, found {} fields", fields.len()),
            ));
        }

        let tokens: Vec<&str> = fields[0].split_whitespace().collect();
        if tokens.len() != 1 {
            return Err(err(
                line_no,
                format!("{} phonemes for 1 pitch/duration entry", tokens.len()),
            ));
        }
        let symbol = tokens[0];
        if inventory.lookup(symbol).is_none() {
            return Err(err(line_no, format!("unknown phoneme symbol '{symbol}'")));
        }

        let pitch: u32 = fields[1]
            .trim()
            .parse()
            .map_err(|_| err(line_no, format!("non-numeric pitch '{}'", fields[1].trim())))?;
        if pitch > 127 {
            return Err(err(line_no, format!("MIDI pitch {pitch} outside 0..=127")));
        }

        let duration: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| err(line_no, format!("non-numeric duration '{}'", fields[2].trim())))?;
        if !(duration > 0.0) {
            return Err(err(line_no, format!("duration must be positive, got {duration}")));
        }

        phonemes.push(symbol.to_string());
        pitches.push(pitch as u8);
        durations.push(duration);
    }

    if phonemes.is_empty() {
        return Err(err(0, "no notes".to_string()));
    }
    MusicScore::new(phonemes, pitches, durations)
}

pub fn save_score_file(path: &Path, score: &MusicScore) -> Result<(), CorpusError> {
    let mut out = String::new();
    for i in 0..score.len() {
        // `{}` on f64 prints the shortest string that parses back exactly,
        // so save -> load reproduces an equal score.
        out.push_str(&format!(
            "{}|{}|{}\n",
            score.phonemes[i], score.pitches[i], score.durations[i]
        ));
    }
    fs::write(path, out).map_err(|e| CorpusError::Io { path: path.to_path_buf(), source: e })
}
