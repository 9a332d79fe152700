use ndarray::Array2;

use super::*;
use crate::corpus::{generate_corpus_with, synthesize_toy_voice, MusicScore, RandomScoreParams, ToyVoiceParams};
use crate::dsp::{McepSequence, PitchTrack};

fn track(f0: Vec<f64>, voiced: Vec<bool>) -> PitchTrack<f64> {
    PitchTrack { f0, voiced, hop_length: 256, sample_rate: 16000 }
}

fn const_track(hz: f64, frames: usize) -> PitchTrack<f64> {
    track(vec![hz; frames], vec![true; frames])
}

#[test]
fn log_f0_rmse_basics() {
    let a = const_track(220.0, 8);
    assert_eq!(log_f0_rmse(&a, &a.clone()), Some(0.0));

    // 100 Hz vs 200 Hz everywhere -> ln 2.
    let b = const_track(100.0, 8);
    let c = const_track(200.0, 8);
    let v = log_f0_rmse(&b, &c).unwrap();
    assert!((v - 2f64.ln()).abs() < 1e-12, "{v}");

    // Disjoint voicing -> undefined.
    let mut d = const_track(100.0, 4);
    let mut e = const_track(100.0, 4);
    d.voiced = vec![true, true, false, false];
    e.voiced = vec![false, false, true, true];
    assert_eq!(log_f0_rmse(&d, &e), None);
}

#[test]
fn mcd_unit_case_and_symmetry() {
    let zeros = McepSequence::<f64> { coefficients: Array2::zeros((1, 14)), order: 13 };
    assert_eq!(mcd(&zeros, &zeros.clone()).unwrap(), 0.0);

    let mut one = zeros.clone();
    one.coefficients[(0, 1)] = 1.0;
    let v = mcd(&zeros, &one).unwrap();
    let expect = 10.0 * 2f64.sqrt() / 10f64.ln();
    assert!((v - expect).abs() < 1e-9, "{v} vs {expect}");
    assert!((v - 6.1418).abs() < 1e-4);
    // Symmetric.
    assert_eq!(mcd(&zeros, &one).unwrap(), mcd(&one, &zeros).unwrap());

    // Coefficient 0 is excluded.
    let mut dc = zeros.clone();
    dc.coefficients[(0, 0)] = 5.0;
    assert_eq!(mcd(&zeros, &dc).unwrap(), 0.0);

    let other = McepSequence::<f64> { coefficients: Array2::zeros((1, 8)), order: 7 };
    assert!(mcd(&zeros, &other).is_err());
}

#[test]
fn semitone_accuracy_cases() {
    let a = const_track(440.0, 10);
    assert_eq!(semitone_accuracy(&a, &a.clone()), Some(100.0));

    // One octave apart: never the same semitone.
    let b = const_track(880.0, 10);
    assert_eq!(semitone_accuracy(&a, &b), Some(0.0));

    // Half the frames one semitone off.
    let ratio = 2f64.powf(1.0 / 12.0);
    let mut f0 = vec![440.0; 10];
    for v in f0.iter_mut().take(5) {
        *v *= ratio;
    }
    let c = track(f0, vec![true; 10]);
    assert_eq!(semitone_accuracy(&a, &c), Some(50.0));
}

#[test]
fn vuv_error_cases() {
    let a = track(vec![100.0; 4], vec![true, true, false, false]);
    assert_eq!(vuv_error(&a, &a.clone()), 0.0);

    let flipped = track(vec![0.0; 4], vec![false, false, true, true]);
    assert_eq!(vuv_error(&a, &flipped), 100.0);

    let one_off = track(vec![100.0; 4], vec![true, true, false, true]);
    assert_eq!(vuv_error(&a, &one_off), 25.0);
}

fn small_corpus(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("cantus_eval_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let quick = RandomScoreParams {
        min_notes: 3,
        max_notes: 5,
        duration_lo: 0.15,
        duration_hi: 0.3,
        ..Default::default()
    };
    generate_corpus_with(4, 16000, 5, &dir, &quick, &ToyVoiceParams::default()).unwrap();
    dir
}

#[test]
fn self_evaluation_is_the_identity() {
    let dir = small_corpus("self");
    let wav_dir = dir.join("wav");
    let features = crate::dsp::FeatureConfig::default();
    let report = evaluate_corpus::<f64>(&wav_dir, &wav_dir, &features, "self").unwrap();

    assert_eq!(report.per_utterance.len(), 4);
    assert!(report.mean_log_f0_rmse.unwrap().abs() <= 1e-9);
    assert!(report.mean_mcd.abs() <= 1e-9);
    assert!((report.mean_semitone_accuracy.unwrap() - 100.0).abs() <= 1e-9);
    assert!(report.mean_vuv_error.abs() <= 1e-9);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unmatched_files_are_skipped_with_warning() {
    let dir = small_corpus("unmatched");
    let ref_dir = dir.join("refs");
    let hyp_dir = dir.join("hyps");
    std::fs::create_dir_all(&ref_dir).unwrap();
    std::fs::create_dir_all(&hyp_dir).unwrap();
    for id in ["utt_0000", "utt_0001"] {
        std::fs::copy(dir.join(format!("wav/{id}.wav")), ref_dir.join(format!("{id}.wav"))).unwrap();
        std::fs::copy(dir.join(format!("wav/{id}.wav")), hyp_dir.join(format!("{id}.wav"))).unwrap();
    }
    // Extra hypothesis without a reference.
    std::fs::copy(dir.join("wav/utt_0002.wav"), hyp_dir.join("utt_0002.wav")).unwrap();

    let features = crate::dsp::FeatureConfig::default();
    let report = evaluate_corpus::<f64>(&ref_dir, &hyp_dir, &features, "partial").unwrap();
    assert_eq!(report.per_utterance.len(), 2);
    assert_eq!(report.unmatched, vec!["utt_0002".to_string()]);

    // Empty intersection is an error.
    let empty = dir.join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    assert!(matches!(
        evaluate_corpus::<f64>(&ref_dir, &empty, &features, "none"),
        Err(EvalError::EmptyIntersection)
    ));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn report_means_match_hand_aggregation() {
    let dir = small_corpus("agg");
    let wav_dir = dir.join("wav");
    let features = crate::dsp::FeatureConfig::default();
    let report = evaluate_corpus::<f64>(&wav_dir, &wav_dir, &features, "agg").unwrap();

    let mean_mcd: f64 = report.per_utterance.iter().map(|u| u.mcd).sum::<f64>()
        / report.per_utterance.len() as f64;
    assert!((report.mean_mcd - mean_mcd).abs() < 1e-15);
    let f0_vals: Vec<f64> = report.per_utterance.iter().filter_map(|u| u.log_f0_rmse).collect();
    let mean_f0 = f0_vals.iter().sum::<f64>() / f0_vals.len() as f64;
    assert!((report.mean_log_f0_rmse.unwrap() - mean_f0).abs() < 1e-15);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn trailing_silence_under_one_hop_leaves_metrics_unchanged() {
    let score = MusicScore::new(
        vec!["a".into(), "e".into()],
        vec![64, 69],
        vec![0.4, 0.4],
    )
    .unwrap();
    let utt = synthesize_toy_voice::<f64>(&score, 16000, 3, &ToyVoiceParams::default()).unwrap();
    let mut padded = utt.waveform.clone();
    padded.extend(std::iter::repeat_n(0.0, 255));

    let features = crate::dsp::FeatureConfig::default();
    let same = evaluate_pair("pad", &utt.waveform, &padded, 16000, &features).unwrap();
    assert_eq!(same.log_f0_rmse, Some(0.0));
    assert_eq!(same.mcd, 0.0);
    assert_eq!(same.semitone_accuracy, Some(100.0));
    assert_eq!(same.vuv_error, 0.0);
}

#[test]
fn report_renders_table_json_and_plot() {
    let dir = small_corpus("render");
    let wav_dir = dir.join("wav");
    let features = crate::dsp::FeatureConfig::default();
    let report = evaluate_corpus::<f64>(&wav_dir, &wav_dir, &features, "toy-system").unwrap();

    let out = dir.join("report/metrics.txt");
    let pair = (wav_dir.join("utt_0000.wav"), wav_dir.join("utt_0000.wav"));
    let files = render_report(&report, &out, &[pair], &features).unwrap();

    let text = std::fs::read_to_string(&files.table).unwrap();
    // One system row with table formatting: 3 decimals, 2-decimal percents.
    assert!(text.contains("toy-system"));
    assert!(text.contains("0.000"));
    assert!(text.contains("100.00%"));
    assert!(text.contains("0.00%"));
    assert_eq!(text.lines().filter(|l| l.contains("toy-system")).count(), 1);

    let json: MetricReport =
        serde_json::from_str(&std::fs::read_to_string(&files.json).unwrap()).unwrap();
    assert_eq!(json, report);

    assert_eq!(files.plots.len(), 1);
    assert!(files.plots[0].exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn identical_panels_render_pixel_equal_blocks() {
    let mel = Array2::from_shape_fn((40, 16), |(t, b)| ((t * 7 + b * 3) % 11) as f64);
    let dir = std::env::temp_dir().join(format!("cantus_plot_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("panels.png");
    render_mel_image(
        &[("same".to_string(), mel.clone()), ("same".to_string(), mel.clone())],
        &path,
    )
    .unwrap();

    let decoder = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(&path).unwrap()));
    let mut reader = decoder.read_info().unwrap();
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    let width = info.width as usize;
    let panel_h = 16 * 2;
    let sep = 3;
    // Identical inputs with identical labels: the two panels are pixel-equal.
    for y in 0..panel_h {
        let top = &buf[y * width * 3..(y + 1) * width * 3];
        let y2 = y + panel_h + sep;
        let bottom = &buf[y2 * width * 3..(y2 + 1) * width * 3];
        assert_eq!(top, bottom, "row {y} differs");
    }
    std::fs::remove_dir_all(&dir).ok();
}
