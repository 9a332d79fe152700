//! Plain-text metric tables (objective columns, one row per system), a JSON
//! sidecar with all per-utterance values, and optional comparison plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{EvalError, MetricReport};
use crate::dsp::FeatureConfig;

/// Files produced by [`render_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub table: PathBuf,
    pub json: PathBuf,
    pub plots: Vec<PathBuf>,
}

fn fmt_opt3(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".to_string())
}

fn fmt_opt_pct(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}%")).unwrap_or_else(|| "n/a".to_string())
}

/// Render the aligned text table (values to 3 decimals, percentages to 2)
/// and the JSON sidecar; optionally also a stacked mel comparison plot per
/// `(reference wav, hypothesis wav)` pair, written next to the table.
pub fn render_report(
    report: &MetricReport,
    out_path: &Path,
    plots: &[(PathBuf, PathBuf)],
    features: &FeatureConfig,
) -> Result<ReportFiles, EvalError> {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:<24} {:>12} {:>8} {:>10} {:>8}",
        "System", "Log_F0_RMSE", "MCD", "Semitone", "VUV"
    );
    let _ = writeln!(
        text,
        "{:<24} {:>12} {:>8} {:>10} {:>8}",
        report.system,
        fmt_opt3(report.mean_log_f0_rmse),
        format!("{:.3}", report.mean_mcd),
        fmt_opt_pct(report.mean_semitone_accuracy),
        format!("{:.2}%", report.mean_vuv_error),
    );
    let _ = writeln!(text);
    let _ = writeln!(
        text,
        "{:<24} {:>12} {:>8} {:>10} {:>8} {:>8} {:>8}",
        "Utterance", "Log_F0_RMSE", "MCD", "Semitone", "VUV", "Frames", "Voiced"
    );
    for u in &report.per_utterance {
        let _ = writeln!(
            text,
            "{:<24} {:>12} {:>8} {:>10} {:>8} {:>8} {:>8}",
            u.id,
            fmt_opt3(u.log_f0_rmse),
            format!("{:.3}", u.mcd),
            fmt_opt_pct(u.semitone_accuracy),
            format!("{:.2}%", u.vuv_error),
            u.frames,
            u.mutually_voiced_frames,
        );
    }
    if !report.unmatched.is_empty() {
        let _ = writeln!(text);
        let _ = writeln!(text, "unmatched hypothesis files (skipped): {}", report.unmatched.join(", "));
    }

    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| EvalError::Io { path: parent.to_path_buf(), source: e })?;
        }
    }
    std::fs::write(out_path, &text)
        .map_err(|e| EvalError::Io { path: out_path.to_path_buf(), source: e })?;

    let json_path = out_path.with_extension("json");
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(&json_path, json)
        .map_err(|e| EvalError::Io { path: json_path.clone(), source: e })?;

    let mut plot_paths = Vec::new();
    let plot_dir = out_path.parent().unwrap_or(Path::new("."));
    for (ref_wav, hyp_wav) in plots {
        let id = ref_wav
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("pair")
            .to_string();
        let png_path = plot_dir.join(format!(
            "{}_{}.png",
            out_path.file_stem().and_then(|s| s.to_str()).unwrap_or("report"),
            id
        ));
        super::plot_mel_comparison::<f64>(ref_wav, hyp_wav, features, &id, &png_path)?;
        plot_paths.push(png_path);
    }

    Ok(ReportFiles { table: out_path.to_path_buf(), json: json_path, plots: plot_paths })
}
