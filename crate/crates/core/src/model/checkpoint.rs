//! Checkpoint archive: a JSON index followed by flat little-endian arrays.
//!
//! Layout: magic `CANTUSCK`, u32 format version, u64 index length, the JSON
//! index, then the raw array payload. The index records dtype, the model
//! config, caller-supplied metadata (training state), and per-array name,
//! shape and byte offset into the payload. Round trips are bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::params::ParamStore;
use super::ModelConfig;
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"CANTUSCK";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt checkpoint index: {0}")]
    BadIndex(String),
    #[error("checkpoint stores {stored} arrays but dtype {dtype} was requested")]
    DtypeMismatch { stored: String, dtype: String },
    #[error("array payload out of bounds for {name}")]
    Truncated { name: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    dtype: String,
    model_config: ModelConfig,
    meta: serde_json::Value,
    arrays: Vec<ArrayEntry>,
}

/// Everything read back from a checkpoint file.
pub struct Checkpoint<T: Scalar> {
    pub config: ModelConfig,
    pub meta: serde_json::Value,
    /// All stored arrays: model parameters (`gen/`, `disc/`) and whatever
    /// extras the writer added (optimizer moments under `opt/`).
    pub arrays: BTreeMap<String, ArrayD<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    /// The model-parameter subset as a store.
    pub fn param_store(&self) -> ParamStore<T> {
        let mut store = ParamStore::new();
        for (name, arr) in &self.arrays {
            if name.starts_with("gen/") || name.starts_with("disc/") {
                store.insert(name, arr.clone());
            }
        }
        store
    }
}

/// Write a checkpoint atomically (temp file + rename).
pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    config: &ModelConfig,
    params: &ParamStore<T>,
    extra_arrays: &[(String, &ArrayD<T>)],
    meta: &serde_json::Value,
) -> Result<(), CheckpointError> {
    let io_err = |e: std::io::Error| CheckpointError::Io { path: path.to_path_buf(), source: e };

    let mut entries = Vec::new();
    let mut payload = Vec::new();
    {
        let mut push = |name: &str, arr: &ArrayD<T>| {
            entries.push(ArrayEntry {
                name: name.to_string(),
                shape: arr.shape().to_vec(),
                offset: payload.len(),
            });
            for v in arr.iter() {
                v.write_le(&mut payload);
            }
        };
        for (name, arr) in params.iter() {
            push(name, arr);
        }
        for (name, arr) in extra_arrays {
            push(name, arr);
        }
    }

    let index = Index {
        dtype: T::DTYPE.to_string(),
        model_config: config.clone(),
        meta: meta.clone(),
        arrays: entries,
    };
    let index_json = serde_json::to_vec(&index)
        .map_err(|e| CheckpointError::BadIndex(e.to_string()))?;

    let mut bytes = Vec::with_capacity(8 + 4 + 8 + index_json.len() + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(index_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&index_json);
    bytes.extend_from_slice(&payload);

    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp).map_err(io_err)?;
    file.write_all(&bytes).map_err(io_err)?;
    file.sync_all().map_err(io_err)?;
    drop(file);
    fs::rename(&tmp, path).map_err(io_err)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, CheckpointError> {
    let bytes = fs::read(path)
        .map_err(|e| CheckpointError::Io { path: path.to_path_buf(), source: e })?;
    if bytes.len() < 20 || &bytes[0..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let index_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let index_end = 20 + index_len;
    if bytes.len() < index_end {
        return Err(CheckpointError::BadIndex("index extends past file end".into()));
    }
    let index: Index = serde_json::from_slice(&bytes[20..index_end])
        .map_err(|e| CheckpointError::BadIndex(e.to_string()))?;
    if index.dtype != T::DTYPE {
        return Err(CheckpointError::DtypeMismatch {
            stored: index.dtype,
            dtype: T::DTYPE.to_string(),
        });
    }

    let payload = &bytes[index_end..];
    let mut arrays = BTreeMap::new();
    for entry in &index.arrays {
        let count: usize = entry.shape.iter().product();
        let nbytes = count * T::BYTE_WIDTH;
        let end = entry.offset + nbytes;
        if end > payload.len() {
            return Err(CheckpointError::Truncated { name: entry.name.clone() });
        }
        let mut data = Vec::with_capacity(count);
        for i in 0..count {
            let at = entry.offset + i * T::BYTE_WIDTH;
            data.push(T::read_le(&payload[at..at + T::BYTE_WIDTH]));
        }
        let arr = ArrayD::from_shape_vec(IxDyn(&entry.shape), data)
            .map_err(|e| CheckpointError::BadIndex(format!("{}: {e}", entry.name)))?;
        arrays.insert(entry.name.clone(), arr);
    }

    Ok(Checkpoint { config: index.model_config, meta: index.meta, arrays })
}
