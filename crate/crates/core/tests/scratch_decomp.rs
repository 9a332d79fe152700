use cantus::corpus::*;
use cantus::model::*;
use cantus::train::*;

fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    if n < 2.0 { return f64::NAN; }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let cov = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / n;
    let sx = (pairs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>() / n).sqrt();
    let sy = (pairs.iter().map(|p| (p.1 - my) * (p.1 - my)).sum::<f64>() / n).sqrt();
    cov / (sx * sy)
}

#[test]
fn scratch_decompose_r() {
    // 28125: 36 utts vibrato seed 7, k9 h64 L100, ratio 0.5025 / r 0.225
    let dir = std::path::PathBuf::from(std::env::var("DECOMP_DIR").unwrap_or_else(|_| "/tmp/cantus_accept_bu_28125".into()));
    if !dir.exists() { eprintln!("missing"); return; }
    let ck = load_checkpoint::<f32>(&dir.join("run/checkpoints/epoch_0039.ckpt")).unwrap();
    let model = SvsModel::from_parts(ck.config.clone(), &ck.param_store()).unwrap();
    let manifest = load_manifest(&dir.join("manifest.jsonl")).unwrap();
    let corpus = load_training_corpus(&manifest, &model).unwrap();
    let cfg = TrainConfig::default();

    for (label, items) in [
        ("held", corpus.iter().filter(|u| u.split != Split::Train).collect::<Vec<_>>()),
        ("train", corpus.iter().filter(|u| u.split == Split::Train).take(8).collect::<Vec<_>>()),
    ] {
        let refs: Vec<&LoadedUtterance<f32>> = items.iter().map(|u| &**u).collect();
        let tracks = uncertainty_eval_windowed(&model, &refs, &cfg, 1234).unwrap();
        let mut all = Vec::new();
        let mut window_means = Vec::new();
        let mut within_rs = Vec::new();
        for (_, t) in &tracks {
            let pairs: Vec<(f64, f64)> = t.u.iter().zip(&t.d).map(|(a, b)| (*a as f64, *b as f64)).collect();
            let mu = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
            let md = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
            window_means.push((mu, md));
            let r = pearson(&pairs);
            if r.is_finite() { within_rs.push(r); }
            all.extend(pairs);
        }
        let pooled = pearson(&all);
        let between = pearson(&window_means);
        let within = within_rs.iter().sum::<f64>() / within_rs.len() as f64;
        eprintln!("{label}: pooled r {pooled:.3} | between-window r {between:.3} ({} windows) | mean within-window r {within:.3}",
            window_means.len());
    }

    // Longer eval windows: 2 s and 3 s crops, plus full utterances.
    for secs in [2.0f64, 3.0] {
        let cfg2 = TrainConfig { crop_seconds: secs, ..TrainConfig::default() };
        let held: Vec<&LoadedUtterance<f32>> =
            corpus.iter().filter(|u| u.split != Split::Train).collect();
        let tracks = uncertainty_eval_windowed(&model, &held, &cfg2, 1234).unwrap();
        let mut all = Vec::new();
        for (_, t) in &tracks {
            all.extend(t.u.iter().zip(&t.d).map(|(a, b)| (*a as f64, *b as f64)));
        }
        eprintln!("window {secs}s: pooled r {:.3} over {} pts ({} windows)", pearson(&all), all.len(), tracks.len());
    }
    let held: Vec<&LoadedUtterance<f32>> =
        corpus.iter().filter(|u| u.split != Split::Train).collect();
    let tracks = uncertainty_eval(&model, &held, &TrainConfig::default(), 1234).unwrap();
    let mut all = Vec::new();
    for (_, t) in &tracks {
        all.extend(t.u.iter().zip(&t.d).map(|(a, b)| (*a as f64, *b as f64)));
    }
    eprintln!("full utterances: pooled r {:.3} over {} pts ({} utts)", pearson(&all), all.len(), tracks.len());
}
