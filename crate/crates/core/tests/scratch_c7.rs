use cantus::corpus::*;
use cantus::train::*;

fn pearson_of(model: &cantus::model::SvsModel<f32>, corpus: &[LoadedUtterance<f32>], cfg: &TrainConfig) -> f64 {
    let held: Vec<&LoadedUtterance<f32>> = corpus.iter().filter(|u| u.split != Split::Train).collect();
    let tracks = uncertainty_eval_windowed(model, &held, cfg, 1234).unwrap();
    let mut pairs = Vec::new();
    for (_, t) in &tracks {
        for (u, d) in t.u.iter().zip(&t.d) { pairs.push((*u as f64, *d as f64)); }
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let cov = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / n;
    let sx = (pairs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>() / n).sqrt();
    let sy = (pairs.iter().map(|p| (p.1 - my) * (p.1 - my)).sum::<f64>() / n).sqrt();
    cov / (sx * sy)
}

#[test]
fn scratch_c7_trajectory() {
    let dir = std::env::temp_dir().join("cantus_scratch_c7");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let n_utts: usize = std::env::var("C7_UTTS").ok().and_then(|v| v.parse().ok()).unwrap_or(30);
    let seed: u64 = std::env::var("C7_SEED").ok().and_then(|v| v.parse().ok()).unwrap_or(33);
    let vibrato = std::env::var("C7_VIB").map(|v| v == "1").unwrap_or(false);
    let voice = ToyVoiceParams { vibrato, ..ToyVoiceParams::default() };
    let manifest = generate_corpus_with(
        n_utts,
        16000,
        seed,
        &dir,
        &RandomScoreParams::default(),
        &voice,
    )
    .unwrap();
    let cfg = TrainConfig::default();
    let out = dir.join("run");
    let mut resume = None;
    let mut history = Vec::new();
    for &stop in &[22usize, 25, 30, 35, 40] {
        let opts = RunOptions { epochs: stop, seed: 3, out_dir: out.clone(), resume: resume.clone(), dump_uncertainty: false };
        let (model, summary) = run_strategy::<f32>(TrainingStrategy::BaselineUnc, &manifest, &cfg, &opts).unwrap();
        let corpus = load_training_corpus(&manifest, &model).unwrap();
        let r = pearson_of(&model, &corpus, &cfg);
        eprintln!("epoch {stop}: r = {r:.3}");
        resume = Some(summary.final_checkpoint.clone());
        history = summary.history.clone();
    }
    let lu: Vec<f64> = history.iter().filter(|l| l.flags.uncertainty_on).map(|l| l.losses.uncertainty).collect();
    eprintln!("L_u per active epoch: {:?}", lu.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>());
    let first5 = lu[..5].iter().sum::<f64>() / 5.0;
    let last5 = lu[15..].iter().sum::<f64>() / 5.0;
    eprintln!("first5 {first5:.5} last5 {last5:.5} ratio {:.3}", last5 / first5);
}
