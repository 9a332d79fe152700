//! Minimal RIFF WAV reader/writer for 16-bit signed PCM mono.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::CorpusError;
use crate::scalar::Scalar;

/// Write samples in `[-1, 1]` as 16-bit PCM mono.
pub fn write_wav<T: Scalar>(path: &Path, sample_rate: u32, samples: &[T]) -> Result<(), CorpusError> {
    let data_len = (samples.len() * 2) as u32;
    let mut bytes = Vec::with_capacity(44 + samples.len() * 2);
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + data_len).to_le_bytes());
    bytes.extend_from_slice(b"WAVE");
    bytes.extend_from_slice(b"fmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes()); // PCM
    bytes.extend_from_slice(&1u16.to_le_bytes()); // mono
    bytes.extend_from_slice(&sample_rate.to_le_bytes());
    bytes.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    bytes.extend_from_slice(&2u16.to_le_bytes()); // block align
    bytes.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        let v = s.to_f64().unwrap().clamp(-1.0, 1.0);
        let q = (v * 32767.0).round() as i16;
        bytes.extend_from_slice(&q.to_le_bytes());
    }

    let mut file = fs::File::create(path)
        .map_err(|e| CorpusError::Io { path: path.to_path_buf(), source: e })?;
    file.write_all(&bytes)
        .map_err(|e| CorpusError::Io { path: path.to_path_buf(), source: e })?;
    Ok(())
}

/// Read a 16-bit PCM mono WAV back into `[-1, 1]` samples.
pub fn read_wav<T: Scalar>(path: &Path) -> Result<(u32, Vec<T>), CorpusError> {
    let bytes = fs::read(path)
        .map_err(|e| CorpusError::Io { path: path.to_path_buf(), source: e })?;
    let bad = |msg: &str| CorpusError::BadWav { path: path.to_path_buf(), msg: msg.to_string() };

    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("not a RIFF/WAVE file"));
    }

    let mut sample_rate = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let chunk_id = &bytes[pos..pos + 4];
        let chunk_len = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = (pos + 8 + chunk_len).min(bytes.len());
        let body = &bytes[pos + 8..body_end];
        match chunk_id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(bad("truncated fmt chunk"));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                if format != 1 || channels != 1 || bits != 16 {
                    return Err(bad("only 16-bit PCM mono is supported"));
                }
                sample_rate = Some(u32::from_le_bytes(body[4..8].try_into().unwrap()));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos += 8 + chunk_len + (chunk_len & 1);
    }

    let sample_rate = sample_rate.ok_or_else(|| bad("missing fmt chunk"))?;
    let data = data.ok_or_else(|| bad("missing data chunk"))?;
    let samples = data
        .chunks_exact(2)
        .map(|c| {
            let q = i16::from_le_bytes([c[0], c[1]]);
            T::from_config(q as f64 / 32767.0)
        })
        .collect();
    Ok((sample_rate, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_within_quantization() {
        let dir = std::env::temp_dir().join("cantus_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.wav");
        let samples: Vec<f64> = (0..100).map(|i| ((i as f64) * 0.37).sin() * 0.9).collect();
        write_wav(&path, 16000, &samples).unwrap();
        let (sr, back) = read_wav::<f64>(&path).unwrap();
        assert_eq!(sr, 16000);
        assert_eq!(back.len(), samples.len());
        for (a, b) in samples.iter().zip(&back) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
        std::fs::remove_file(&path).ok();
    }
}
