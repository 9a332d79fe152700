//! JSON-lines corpus manifest: a header object with generation settings,
//! then one object per utterance.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::UnknownSplit(other.to_string())),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Dev => write!(f, "dev"),
            Split::Test => write!(f, "test"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    /// Score file path relative to the manifest location.
    pub score: String,
    /// Audio file path relative to the manifest location.
    pub audio: String,
    pub split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct ManifestHeader {
    sample_rate: u32,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub sample_rate: u32,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
    /// Directory the relative paths resolve against.
    pub root: PathBuf,
}

impl CorpusManifest {
    pub fn score_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.score)
    }

    pub fn audio_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.audio)
    }

    pub fn entries_for(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// Ids carrying the given split tag, in manifest order.
pub fn split_manifest(manifest: &CorpusManifest, split: Split) -> Vec<String> {
    manifest
        .entries_for(split)
        .map(|e| e.id.clone())
        .collect()
}

pub fn save_manifest(manifest: &CorpusManifest, path: &Path) -> Result<(), CorpusError> {
    let mut out = String::new();
    let header = ManifestHeader { sample_rate: manifest.sample_rate, seed: manifest.seed };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for entry in &manifest.entries {
        out.push_str(&serde_json::to_string(entry).expect("entry serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CorpusError::Io { path: path.to_path_buf(), source: e })
}

/// Load and validate a manifest: unique ids, existing files.
pub fn load_manifest(path: &Path) -> Result<CorpusManifest, CorpusError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CorpusError::Io { path: path.to_path_buf(), source: e })?;
    let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();

    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header_line) = lines.next().ok_or_else(|| CorpusError::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "empty manifest".to_string(),
    })?;
    let header: ManifestHeader =
        serde_json::from_str(header_line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("bad header: {e}"),
        })?;

    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in lines {
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: format!("bad entry: {e}"),
        })?;
        if !seen.insert(entry.id.clone()) {
            return Err(CorpusError::DuplicateId(entry.id));
        }
        for rel in [&entry.score, &entry.audio] {
            let p = root.join(rel);
            if !p.exists() {
                return Err(CorpusError::MissingFile(p));
            }
        }
        entries.push(entry);
    }

    Ok(CorpusManifest { sample_rate: header.sample_rate, seed: header.seed, entries, root })
}
