use super::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn one_note(symbol: &str, pitch: u8, dur: f64) -> MusicScore {
    MusicScore::new(vec![symbol.to_string()], vec![pitch], vec![dur]).unwrap()
}

fn tmp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("cantus_corpus_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn midi_69_sings_at_440() {
    let utt: Utterance<f64> =
        synthesize_toy_voice(&one_note("a", 69, 1.0), 16000, 1, &ToyVoiceParams::default())
            .unwrap();
    assert_eq!(utt.waveform.len(), 16000);
    let voiced: Vec<f64> = utt
        .f0_ref
        .iter()
        .zip(&utt.vuv_ref)
        .filter(|(_, &v)| v)
        .map(|(f, _)| *f)
        .collect();
    assert!(!voiced.is_empty());
    for f in voiced {
        assert!((f - 440.0).abs() < 1e-9);
    }
}

#[test]
fn midi_60_sings_at_middle_c() {
    let utt: Utterance<f64> =
        synthesize_toy_voice(&one_note("o", 60, 1.0), 16000, 1, &ToyVoiceParams::default())
            .unwrap();
    let f = utt
        .f0_ref
        .iter()
        .zip(&utt.vuv_ref)
        .find(|(_, &v)| v)
        .map(|(f, _)| *f)
        .unwrap();
    assert!((f - 261.6256).abs() < 1e-3, "{f}");
}

#[test]
fn rest_only_score_is_silent_and_unvoiced() {
    let utt: Utterance<f64> =
        synthesize_toy_voice(&one_note("a", 0, 0.5), 16000, 1, &ToyVoiceParams::default())
            .unwrap();
    assert!(utt.waveform.iter().all(|&v| v == 0.0));
    assert!(utt.vuv_ref.iter().all(|v| !v));
    assert!(utt.f0_ref.iter().all(|&f| f == 0.0));
}

#[test]
fn synthesis_is_deterministic() {
    let score = MusicScore::new(
        vec!["a".into(), "s".into(), "i".into()],
        vec![64, 70, 0],
        vec![0.3, 0.2, 0.25],
    )
    .unwrap();
    let p = ToyVoiceParams::default();
    let a: Utterance<f32> = synthesize_toy_voice(&score, 16000, 99, &p).unwrap();
    let b: Utterance<f32> = synthesize_toy_voice(&score, 16000, 99, &p).unwrap();
    assert_eq!(a.waveform, b.waveform);
    assert_eq!(a.f0_ref, b.f0_ref);
}

#[test]
fn ground_truth_invariants_hold() {
    let score = MusicScore::new(
        vec!["e".into(), "sh".into(), "u".into(), "a".into()],
        vec![55, 60, 0, 72],
        vec![0.21, 0.17, 0.13, 0.4],
    )
    .unwrap();
    let utt: Utterance<f64> =
        synthesize_toy_voice(&score, 16000, 7, &ToyVoiceParams::default()).unwrap();
    let expected_len = (16000.0 * score.total_duration()).round() as usize;
    assert!((utt.waveform.len() as isize - expected_len as isize).unsigned_abs() <= 256);
    assert_eq!(utt.f0_ref.len(), utt.vuv_ref.len());
    for (f, v) in utt.f0_ref.iter().zip(&utt.vuv_ref) {
        assert_eq!(*f > 0.0, *v);
    }
    // Peak normalization.
    let peak = utt.waveform.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    assert!((peak - 0.95).abs() < 1e-9);
}

#[test]
fn vibrato_fluctuates_within_depth() {
    let params = ToyVoiceParams { vibrato: true, ..ToyVoiceParams::default() };
    let utt: Utterance<f64> =
        synthesize_toy_voice(&one_note("a", 69, 1.0), 16000, 1, &params).unwrap();
    let voiced: Vec<f64> = utt
        .f0_ref
        .iter()
        .zip(&utt.vuv_ref)
        .filter(|(_, &v)| v)
        .map(|(f, _)| *f)
        .collect();
    let max = voiced.iter().cloned().fold(0.0f64, f64::max);
    let min = voiced.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max > min, "vibrato should move the pitch");
    let depth = 2f64.powf(30.0 / 1200.0);
    assert!(max <= 440.0 * depth * 1.0001);
    assert!(min >= 440.0 / depth * 0.9999);
}

#[test]
fn unknown_phoneme_is_named_in_error() {
    let score = MusicScore::new(vec!["zz".into()], vec![60], vec![0.5]).unwrap();
    let err = synthesize_toy_voice::<f64>(&score, 16000, 1, &ToyVoiceParams::default())
        .unwrap_err();
    match err {
        CorpusError::UnknownPhoneme { symbol } => assert_eq!(symbol, "zz"),
        other => panic!("wrong error {other:?}"),
    }
}

#[test]
fn out_of_range_pitch_is_rejected() {
    let score = MusicScore::new(vec!["a".into()], vec![200], vec![0.5]).unwrap();
    let err = synthesize_toy_voice::<f64>(&score, 16000, 1, &ToyVoiceParams::default())
        .unwrap_err();
    assert!(matches!(err, CorpusError::PitchOutOfRange { pitch: 200 }));
}

#[test]
fn low_sample_rate_is_rejected() {
    let err = synthesize_toy_voice::<f64>(
        &one_note("a", 60, 0.5),
        4000,
        1,
        &ToyVoiceParams::default(),
    )
    .unwrap_err();
    assert!(matches!(err, CorpusError::InvalidScore(_)));
}

#[test]
fn corpus_generation_is_byte_identical_across_runs() {
    let dir_a = tmp_dir("det_a");
    let dir_b = tmp_dir("det_b");
    generate_corpus(10, 16000, 7, &dir_a).unwrap();
    generate_corpus(10, 16000, 7, &dir_b).unwrap();

    let manifest_a = std::fs::read(dir_a.join("manifest.jsonl")).unwrap();
    let manifest_b = std::fs::read(dir_b.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest_a, manifest_b);
    for id in ["utt_0000", "utt_0004", "utt_0009"] {
        let wav_a = std::fs::read(dir_a.join(format!("wav/{id}.wav"))).unwrap();
        let wav_b = std::fs::read(dir_b.join(format!("wav/{id}.wav"))).unwrap();
        assert_eq!(wav_a, wav_b, "{id} differs");
    }
    std::fs::remove_dir_all(&dir_a).ok();
    std::fs::remove_dir_all(&dir_b).ok();
}

#[test]
fn fifty_utterances_split_40_5_5() {
    let dir = tmp_dir("split50");
    let quick = RandomScoreParams { duration_lo: 0.1, duration_hi: 0.15, max_notes: 5, ..Default::default() };
    let manifest =
        generate_corpus_with(50, 8000, 3, &dir, &quick, &ToyVoiceParams::default()).unwrap();
    assert_eq!(split_manifest(&manifest, Split::Train).len(), 40);
    assert_eq!(split_manifest(&manifest, Split::Dev).len(), 5);
    assert_eq!(split_manifest(&manifest, Split::Test).len(), 5);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn too_small_corpus_is_rejected() {
    let dir = tmp_dir("tiny");
    assert!(matches!(
        generate_corpus(2, 16000, 1, &dir),
        Err(CorpusError::TooFewUtterances(2))
    ));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn splits_partition_the_ids() {
    let dir = tmp_dir("partition");
    let quick = RandomScoreParams { duration_lo: 0.1, duration_hi: 0.15, max_notes: 5, ..Default::default() };
    let manifest =
        generate_corpus_with(10, 8000, 11, &dir, &quick, &ToyVoiceParams::default()).unwrap();
    let mut all: Vec<String> = Vec::new();
    for split in [Split::Train, Split::Dev, Split::Test] {
        all.extend(split_manifest(&manifest, split));
    }
    all.sort();
    let mut expect: Vec<String> = manifest.entries.iter().map(|e| e.id.clone()).collect();
    expect.sort();
    assert_eq!(all, expect);

    // Round trip through disk preserves the manifest.
    let loaded = load_manifest(&dir.join("manifest.jsonl")).unwrap();
    assert_eq!(loaded.entries, manifest.entries);
    assert_eq!(loaded.sample_rate, manifest.sample_rate);
    assert_eq!(loaded.seed, manifest.seed);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn score_file_single_line_parses() {
    let dir = tmp_dir("score1");
    let path = dir.join("one.score");
    std::fs::write(&path, "a|69|0.5\n").unwrap();
    let score = load_score_file(&path, &PhonemeInventory::default()).unwrap();
    assert_eq!(score.len(), 1);
    assert_eq!(score.phonemes[0], "a");
    assert_eq!(score.pitches[0], 69);
    assert_eq!(score.durations[0], 0.5);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn score_file_rejects_bad_input() {
    let dir = tmp_dir("scorebad");
    let inv = PhonemeInventory::default();

    let empty = dir.join("empty.score");
    std::fs::write(&empty, "# only a comment\n").unwrap();
    let err = load_score_file(&empty, &inv).unwrap_err();
    assert!(err.to_string().contains("no notes"), "{err}");

    let mismatch = dir.join("mismatch.score");
    std::fs::write(&mismatch, "a b|69|0.5\n").unwrap();
    let err = load_score_file(&mismatch, &inv).unwrap_err();
    assert!(err.to_string().contains("2 phonemes"), "{err}");
    assert!(err.to_string().contains(":1:"), "line number missing: {err}");

    let bad_pitch = dir.join("badpitch.score");
    std::fs::write(&bad_pitch, "a|69|0.5\na|seventy|0.5\n").unwrap();
    let err = load_score_file(&bad_pitch, &inv).unwrap_err();
    assert!(err.to_string().contains("non-numeric pitch"), "{err}");
    assert!(err.to_string().contains(":2:"), "line number missing: {err}");

    let bad_dur = dir.join("baddur.score");
    std::fs::write(&bad_dur, "a|69|long\n").unwrap();
    let err = load_score_file(&bad_dur, &inv).unwrap_err();
    assert!(err.to_string().contains("non-numeric duration"), "{err}");

    std::fs::remove_dir_all(&dir).ok();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn score_files_round_trip(
        n in 1usize..12,
        seed in 0u64..u64::MAX,
    ) {
        let inv = PhonemeInventory::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let score = super::synth::random_score(&mut rng, &RandomScoreParams::default(), &inv);
        let _ = n;
        let dir = tmp_dir("roundtrip");
        let path = dir.join(format!("rt_{seed}.score"));
        save_score_file(&path, &score).unwrap();
        let back = load_score_file(&path, &inv).unwrap();
        prop_assert_eq!(back, score);
        std::fs::remove_file(&path).ok();
    }
}
