//! Log-mel spectrogram images: stacked comparison panels with a shared time
//! axis, a shared color scale, and the utterance id drawn in a corner.

use std::path::Path;

use ndarray::Array2;

use super::EvalError;
use crate::corpus::wav;
use crate::dsp::{mel_spectrogram, stft, FeatureConfig};
use crate::scalar::Scalar;

/// 5x7 glyphs for the id annotation; bit 4 is the leftmost column.
fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_lowercase() {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'a' => [0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F],
        'b' => [0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x1E],
        'c' => [0x00, 0x00, 0x0E, 0x10, 0x10, 0x11, 0x0E],
        'd' => [0x01, 0x01, 0x0D, 0x13, 0x11, 0x11, 0x0F],
        'e' => [0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E],
        'f' => [0x06, 0x09, 0x08, 0x1C, 0x08, 0x08, 0x08],
        'g' => [0x00, 0x0F, 0x11, 0x11, 0x0F, 0x01, 0x0E],
        'h' => [0x10, 0x10, 0x16, 0x19, 0x11, 0x11, 0x11],
        'i' => [0x04, 0x00, 0x0C, 0x04, 0x04, 0x04, 0x0E],
        'j' => [0x02, 0x00, 0x06, 0x02, 0x02, 0x12, 0x0C],
        'k' => [0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12],
        'l' => [0x0C, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'm' => [0x00, 0x00, 0x1A, 0x15, 0x15, 0x11, 0x11],
        'n' => [0x00, 0x00, 0x16, 0x19, 0x11, 0x11, 0x11],
        'o' => [0x00, 0x00, 0x0E, 0x11, 0x11, 0x11, 0x0E],
        'p' => [0x00, 0x00, 0x1E, 0x11, 0x1E, 0x10, 0x10],
        'q' => [0x00, 0x00, 0x0D, 0x13, 0x0F, 0x01, 0x01],
        'r' => [0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10],
        's' => [0x00, 0x00, 0x0E, 0x10, 0x0E, 0x01, 0x1E],
        't' => [0x08, 0x08, 0x1C, 0x08, 0x08, 0x09, 0x06],
        'u' => [0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0D],
        'v' => [0x00, 0x00, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'w' => [0x00, 0x00, 0x11, 0x11, 0x15, 0x15, 0x0A],
        'x' => [0x00, 0x00, 0x11, 0x0A, 0x04, 0x0A, 0x11],
        'y' => [0x00, 0x00, 0x11, 0x11, 0x0F, 0x01, 0x0E],
        'z' => [0x00, 0x00, 0x1F, 0x02, 0x04, 0x08, 0x1F],
        '_' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ' ' => [0x00; 7],
        _ => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x00, 0x04], // '?'
    }
}

/// Dark-to-bright color ramp for log magnitudes.
fn colormap(x: f64) -> [u8; 3] {
    let stops: [(f64, [f64; 3]); 5] = [
        (0.00, [0.0, 0.0, 4.0]),
        (0.25, [70.0, 15.0, 110.0]),
        (0.50, [180.0, 50.0, 100.0]),
        (0.75, [250.0, 140.0, 55.0]),
        (1.00, [252.0, 253.0, 190.0]),
    ];
    let x = x.clamp(0.0, 1.0);
    for w in stops.windows(2) {
        let (x0, c0) = w[0];
        let (x1, c1) = w[1];
        if x <= x1 {
            let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
            return [
                (c0[0] + t * (c1[0] - c0[0])) as u8,
                (c0[1] + t * (c1[1] - c0[1])) as u8,
                (c0[2] + t * (c1[2] - c0[2])) as u8,
            ];
        }
    }
    [252, 253, 190]
}

struct Canvas {
    width: usize,
    height: usize,
    pixels: Vec<u8>, // RGB8
}

impl Canvas {
    fn new(width: usize, height: usize) -> Self {
        Canvas { width, height, pixels: vec![0u8; width * height * 3] }
    }

    fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        if x < self.width && y < self.height {
            let at = (y * self.width + x) * 3;
            self.pixels[at..at + 3].copy_from_slice(&rgb);
        }
    }

    fn draw_text(&mut self, x0: usize, y0: usize, text: &str, scale: usize) {
        let mut x = x0;
        for c in text.chars() {
            let rows = glyph(c);
            for (ry, row) in rows.iter().enumerate() {
                for rx in 0..5 {
                    if row & (0x10 >> rx) != 0 {
                        for sy in 0..scale {
                            for sx in 0..scale {
                                self.put(
                                    x + rx * scale + sx,
                                    y0 + ry * scale + sy,
                                    [255, 255, 255],
                                );
                            }
                        }
                    }
                }
            }
            x += 6 * scale;
        }
    }
}

/// Render stacked log-mel panels (same time axis, shared color scale) to a
/// PNG. Panels are `(label, frames x n_mels)` matrices; low mel bands are at
/// the bottom of each panel.
pub fn render_mel_image(
    panels: &[(String, Array2<f64>)],
    out_path: &Path,
) -> Result<(), EvalError> {
    assert!(!panels.is_empty());
    let scale = 2usize;
    let n_mels = panels[0].1.ncols();
    let frames = panels.iter().map(|(_, m)| m.nrows()).max().unwrap();
    let sep = 3usize;
    let panel_h = n_mels * scale;
    let width = frames * scale;
    let height = panels.len() * panel_h + (panels.len() - 1) * sep;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, m) in panels {
        for v in m.iter() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    let range = (hi - lo).max(1e-9);

    let mut canvas = Canvas::new(width, height);
    for (p, (label, m)) in panels.iter().enumerate() {
        let y_off = p * (panel_h + sep);
        for t in 0..m.nrows() {
            for b in 0..n_mels.min(m.ncols()) {
                let v = (m[(t, b)] - lo) / range;
                let rgb = colormap(v);
                // Highest band at the top of the panel.
                let y = y_off + (n_mels - 1 - b) * scale;
                for sy in 0..scale {
                    for sx in 0..scale {
                        canvas.put(t * scale + sx, y + sy, rgb);
                    }
                }
            }
        }
        canvas.draw_text(2, y_off + 2, label, 1);
    }

    let file = std::fs::File::create(out_path)
        .map_err(|e| EvalError::Io { path: out_path.to_path_buf(), source: e })?;
    let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| EvalError::Png(e.to_string()))?;
    writer
        .write_image_data(&canvas.pixels)
        .map_err(|e| EvalError::Png(e.to_string()))?;
    Ok(())
}

/// Two-panel comparison plot for a reference/hypothesis wav pair.
pub fn plot_mel_comparison<T: Scalar + rustfft::FftNum>(
    ref_wav: &Path,
    hyp_wav: &Path,
    features: &FeatureConfig,
    id: &str,
    out_path: &Path,
) -> Result<(), EvalError> {
    let (sr_ref, ref_wave) = wav::read_wav::<T>(ref_wav)?;
    let (sr_hyp, hyp_wave) = wav::read_wav::<T>(hyp_wav)?;
    if sr_ref != sr_hyp {
        return Err(EvalError::SampleRateMismatch {
            id: id.to_string(),
            ref_rate: sr_ref,
            hyp_rate: sr_hyp,
        });
    }
    let mel_of = |wave: &[T]| -> Result<Array2<f64>, EvalError> {
        let spec = stft(wave, sr_ref, features.n_fft, features.hop_length, features.win_length)?;
        let mel = mel_spectrogram(&spec, features.n_mels, features.fmin, features.fmax_for(sr_ref))?;
        Ok(mel.values.mapv(|v| v.to_f64().unwrap()))
    };
    let panels = vec![
        (format!("{id} ref"), mel_of(&ref_wave)?),
        (format!("{id} hyp"), mel_of(&hyp_wave)?),
    ];
    render_mel_image(&panels, out_path)
}
