//! Command-line entry point binding corpus generation, training, synthesis,
//! evaluation and plotting into reproducible runs. Every run writes a
//! `run.json` next to its primary output recording the resolved
//! configuration, the seed and the tool version.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::corpus::{self, load_manifest, load_score_file};
use crate::dsp::FeatureConfig;
use crate::eval::{evaluate_corpus, plot_mel_comparison, render_report};
use crate::model::{load_checkpoint, SvsModel};
use crate::train::{
    run_strategy, RunOptions, TrainConfig, TrainingStrategy, STRATEGY_NAMES,
};

#[derive(Parser, Debug)]
#[command(
    name = "cantus",
    version,
    about = "Desk-scale singing voice synthesis: corpus generation, CVAE+GAN training, synthesis and objective evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a deterministic synthetic singing corpus.
    GenCorpus(GenCorpusArgs),
    /// Train a model with one of the staged strategies.
    Train(TrainArgs),
    /// Synthesize a waveform from a score file through a trained checkpoint.
    Synth(SynthArgs),
    /// Evaluate a hypothesis directory against a reference directory.
    Eval(EvalArgs),
    /// Render a stacked mel-spectrogram comparison of two waveforms.
    Plot(PlotArgs),
}

#[derive(Args, Debug, Serialize)]
struct GenCorpusArgs {
    /// Output directory for scores, audio and the manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "num-utts")]
    num_utts: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long = "sample-rate", default_value_t = 16000)]
    sample_rate: u32,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    /// Corpus manifest (manifest.jsonl) or the directory containing it.
    #[arg(long)]
    corpus: PathBuf,
    /// One of B, B+D, B&U, B&U&(U+D) (aliases: b, bd, bu, bud).
    #[arg(long)]
    strategy: String,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// JSON training config; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for checkpoints and logs.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Resume from a checkpoint written by a previous run.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Rescale the 20/80 stage thresholds to the requested epoch count.
    #[arg(long = "scale-schedule", default_value_t = false)]
    scale_schedule: bool,
    /// Dump per-utterance `t u_t d_t` uncertainty curves for the dev split.
    #[arg(long = "dump-uncertainty", default_value_t = false)]
    dump_uncertainty: bool,
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    /// Trained checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Score file (phoneme|midi_pitch|duration per line).
    #[arg(long)]
    score: PathBuf,
    /// Output WAV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Optional training config to cross-check against the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    /// Directory of reference WAVs ({id}.wav).
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Directory of hypothesis WAVs ({id}.wav).
    #[arg(long)]
    hyp: PathBuf,
    /// Report text file to write (a JSON sidecar goes next to it).
    #[arg(long)]
    report: PathBuf,
    /// Optional training config supplying the analysis settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Utterance ids to render as comparison plots (repeatable).
    #[arg(long = "wav")]
    wav: Vec<String>,
}

#[derive(Args, Debug, Serialize)]
struct PlotArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
    /// Output PNG path.
    #[arg(long)]
    out: PathBuf,
    /// Optional training config supplying the analysis settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Route argv to the subcommands: exit 0 on success, 1 on usage errors,
/// 2 on runtime errors.
pub fn dispatch(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };

    // Strategy names are validated before any work happens so typos are
    // usage errors, not runtime errors.
    if let Command::Train(args) = &cli.command {
        if args.strategy.parse::<TrainingStrategy>().is_err() {
            eprintln!(
                "error: unknown strategy '{}'; valid strategies: {}",
                args.strategy,
                STRATEGY_NAMES.join(", ")
            );
            return 1;
        }
    }

    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn version_string() -> String {
    format!("cantus {}", env!("CARGO_PKG_VERSION"))
}

fn write_run_json<A: Serialize, C: Serialize>(
    dir: &Path,
    command: &str,
    args: &A,
    seed: u64,
    config: &C,
) -> Result<(), Box<dyn std::error::Error>> {
    std::fs::create_dir_all(dir)?;
    let record = serde_json::json!({
        "command": command,
        "args": args,
        "seed": seed,
        "version": version_string(),
        "config": config,
    });
    std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&record)?)?;
    Ok(())
}

fn load_train_config(path: &Option<PathBuf>) -> Result<TrainConfig, Box<dyn std::error::Error>> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::GenCorpus(args) => {
            let manifest = corpus::generate_corpus(args.num_utts, args.sample_rate, args.seed, &args.out)?;
            write_run_json(
                &args.out,
                "gen-corpus",
                &args,
                args.seed,
                &serde_json::json!({
                    "num_utts": args.num_utts,
                    "sample_rate": args.sample_rate,
                    "entries": manifest.entries.len(),
                }),
            )?;
            println!(
                "wrote {} utterances to {} (train/dev/test = {}/{}/{})",
                manifest.entries.len(),
                args.out.display(),
                manifest.entries_for(corpus::Split::Train).count(),
                manifest.entries_for(corpus::Split::Dev).count(),
                manifest.entries_for(corpus::Split::Test).count(),
            );
            Ok(())
        }
        Command::Train(args) => {
            let strategy: TrainingStrategy = args.strategy.parse()?;
            let mut cfg = load_train_config(&args.config)?;
            if args.scale_schedule {
                cfg.schedule.scale = true;
            }
            let manifest_path = if args.corpus.is_dir() {
                args.corpus.join("manifest.jsonl")
            } else {
                args.corpus.clone()
            };
            let manifest = load_manifest(&manifest_path)?;
            write_run_json(&args.out, "train", &args, args.seed, &cfg)?;
            let opts = RunOptions {
                epochs: args.epochs,
                seed: args.seed,
                out_dir: args.out.clone(),
                resume: args.resume.clone(),
                dump_uncertainty: args.dump_uncertainty,
            };
            let (_, summary) = run_strategy::<crate::Real>(strategy, &manifest, &cfg, &opts)?;
            let last = summary.history.last().expect("at least one epoch");
            println!(
                "trained {} epochs with strategy {}; final recon {:.4}, log at {}",
                summary.history.len(),
                strategy,
                last.losses.recon,
                summary.log_path.display()
            );
            println!("final checkpoint: {}", summary.final_checkpoint.display());
            Ok(())
        }
        Command::Synth(args) => {
            let ck = load_checkpoint::<crate::Real>(&args.ckpt)?;
            if let Some(cfg_path) = &args.config {
                let cfg: TrainConfig = serde_json::from_str(&std::fs::read_to_string(cfg_path)?)?;
                if cfg.model != ck.config {
                    return Err("checkpoint/model-config mismatch".into());
                }
            }
            let model = SvsModel::from_parts(ck.config.clone(), &ck.param_store())?;
            let score = load_score_file(&args.score, &model.cfg.inventory)?;
            let wave = model.synthesize(&score, args.seed)?;
            if let Some(parent) = args.out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            corpus::wav::write_wav(&args.out, model.cfg.sample_rate, &wave)?;
            let run_dir = args.out.parent().unwrap_or(Path::new(".")).to_path_buf();
            write_run_json(&run_dir, "synth", &args, args.seed, &ck.config)?;
            println!(
                "synthesized {:.2} s to {}",
                wave.len() as f64 / model.cfg.sample_rate as f64,
                args.out.display()
            );
            Ok(())
        }
        Command::Eval(args) => {
            let cfg = load_train_config(&args.config)?;
            let features: FeatureConfig = cfg.model.features.clone();
            let system = args
                .hyp
                .file_name()
                .and_then(|s| s.to_str())
                .unwrap_or("system")
                .to_string();
            let report = evaluate_corpus::<f64>(&args.reference, &args.hyp, &features, &system)?;
            let pairs: Vec<(PathBuf, PathBuf)> = args
                .wav
                .iter()
                .map(|id| {
                    (
                        args.reference.join(format!("{id}.wav")),
                        args.hyp.join(format!("{id}.wav")),
                    )
                })
                .collect();
            let files = render_report(&report, &args.report, &pairs, &features)?;
            let run_dir = args.report.parent().unwrap_or(Path::new(".")).to_path_buf();
            write_run_json(&run_dir, "eval", &args, 0, &features)?;
            println!("wrote report to {} (+ JSON sidecar)", files.table.display());
            for p in files.plots {
                println!("plot: {}", p.display());
            }
            Ok(())
        }
        Command::Plot(args) => {
            let cfg = load_train_config(&args.config)?;
            let id = args
                .reference
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("pair")
                .to_string();
            if let Some(parent) = args.out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            plot_mel_comparison::<f64>(&args.reference, &args.hyp, &cfg.model.features, &id, &args.out)?;
            let run_dir = args.out.parent().unwrap_or(Path::new(".")).to_path_buf();
            write_run_json(&run_dir, "plot", &args, 0, &cfg.model.features)?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
    }
}
