//! Command-line front end: `synth`, `featurize`, `train`, `eval`, `gradcheck`.
//!
//! Exit codes: 0 on success, 1 on pipeline errors (the error's name goes to
//! stderr), 2 on usage errors. Every command ends its stdout with one JSON
//! summary line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::alignment::{load_vocab, parse_alignment};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, render_markdown};
use crate::features::{read_archive, write_archive, ArchiveHeader, ContextSample, FeatureArchive};
use crate::nn::gradcheck::{check_tiny_model, REL_ERR_FLOOR};
use crate::nn::{load_checkpoint, save_checkpoint, Model, ModelConfig, Variant};
use crate::pipeline::Featurizer;
use crate::segment::SegmentMode;
use crate::synth::generate_corpus;
use crate::tone::parse_pattern;
use crate::train::train;

/// Largest relative error the `gradcheck` command accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "tonelab", version, about = "Mandarin tone classification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Turn audio and alignments into a feature archive.
    Featurize(FeaturizeArgs),
    /// Train one model variant.
    Train(TrainArgs),
    /// Score a checkpoint on a feature archive.
    Eval(EvalArgs),
    /// Finite-difference check of the tiny model's gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct FeaturizeArgs {
    #[arg(long)]
    audio_dir: PathBuf,
    #[arg(long)]
    alignments: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    context_size: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    segment_mode: Option<SegmentMode>,
    /// Only utterances whose id starts with this prefix.
    #[arg(long)]
    prefix: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated, e.g. `T4-T4,T2-T2`.
    #[arg(long)]
    patterns: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the table as markdown.
    #[arg(long)]
    markdown: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_mode(s: &str) -> std::result::Result<SegmentMode, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("expected plain, ditone or tritone, got {s:?}"))
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Runs the command line `argv` (including the program name) and returns
/// the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Featurize(a) => featurize(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(summary) => {
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}: {e}", e.name());
            1
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn synth(a: SynthArgs) -> Result<serde_json::Value> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?.synth;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let meta = generate_corpus(&cfg, &a.out)?;
    Ok(json!({
        "command": "synth",
        "utterances": meta.utterances.len(),
        "tone_counts": meta.tone_counts,
        "seed": cfg.seed,
        "out": a.out,
    }))
}

fn featurize(a: FeaturizeArgs) -> Result<serde_json::Value> {
    let run = RunConfig::load_or_default(a.config.as_deref())?;
    let context_size = a.context_size.unwrap_or(run.context_size);
    let segment_mode = a.segment_mode.unwrap_or(run.segment_mode);
    let vocab = load_vocab(&a.vocab)?;
    let alignments = parse_alignment(&a.alignments, &vocab)?;
    let featurizer = Featurizer::new(run.mel.clone(), context_size, segment_mode, vocab.len())?;
    let samples = featurizer.featurize_dir(&a.audio_dir, &alignments, a.prefix.as_deref())?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let header = ArchiveHeader { mel: Some(run.mel), vocab_size: vocab.len(), context_size, segment_mode };
    let manifest = write_archive(&samples, &header, &a.out)?;
    Ok(json!({
        "command": "featurize",
        "samples": manifest.sample_count,
        "tone_counts": manifest.tone_counts,
        "context_size": context_size,
        "segment_mode": segment_mode,
        "out": a.out,
    }))
}

/// The model configuration for `variant` on data from `archive`.
pub fn model_config_for(run: &RunConfig, variant: Variant, archive: &FeatureArchive) -> ModelConfig {
    let header = &archive.manifest.header;
    ModelConfig {
        variant,
        context_size: if variant == Variant::SfCtx { run.context_size } else { 0 },
        vocab_size: header.vocab_size,
        n_mels: header.mel.as_ref().map_or(run.model.n_mels, |m| m.n_filters),
        ..run.model.clone()
    }
}

/// Samples narrowed to the model's context size.
fn fit_samples(samples: Vec<ContextSample>, cfg: &ModelConfig) -> Result<Vec<ContextSample>> {
    let n = cfg.slots() / 2;
    if samples.iter().all(|s| s.context_size() == n) {
        return Ok(samples);
    }
    samples.iter().map(|s| s.narrow(n)).collect()
}

fn train_cmd(a: TrainArgs) -> Result<serde_json::Value> {
    let run = RunConfig::load_or_default(a.config.as_deref())?;
    let mut tcfg = run.train.clone();
    if let Some(seed) = a.seed {
        tcfg.seed = seed;
    }
    let train_arc = read_archive(&a.features)?;
    let dev_arc = read_archive(&a.dev)?;
    let variant = a.variant.unwrap_or(run.model.variant);
    let mcfg = model_config_for(&run, variant, &train_arc);
    let train_set = fit_samples(train_arc.samples, &mcfg)?;
    let dev_set = fit_samples(dev_arc.samples, &mcfg)?;
    let model = Model::<f32>::new(mcfg, tcfg.seed)?;
    let history_path = a.out.parent().unwrap_or(Path::new(".")).join("history.json");
    let (best, history) = match train(model, &train_set, &dev_set, &tcfg) {
        Ok(r) => r,
        Err(Error::DivergenceError { epoch, history }) => {
            write_json(&history_path, &history)?;
            return Err(Error::DivergenceError { epoch, history });
        }
        Err(e) => return Err(e),
    };
    save_checkpoint(&best, &a.out)?;
    write_json(&history_path, &history)?;
    Ok(json!({
        "command": "train",
        "variant": variant,
        "epochs": history.epochs.len(),
        "best_epoch": history.best_epoch,
        "best_dev_loss": history.best_dev_loss,
        "stop_reason": history.stop_reason,
        "seed": tcfg.seed,
        "out": a.out,
    }))
}

fn eval_cmd(a: EvalArgs) -> Result<serde_json::Value> {
    let run = RunConfig::load_or_default(a.config.as_deref())?;
    let patterns = match &a.patterns {
        Some(list) => list.split(',').map(|p| parse_pattern(p.trim())).collect::<Result<Vec<_>>>()?,
        None => run.parsed_patterns()?,
    };
    let model = load_checkpoint(&a.model)?;
    let archive = read_archive(&a.features)?;
    let samples = fit_samples(archive.samples, model.config())?;
    let report = evaluate(&model, &samples, &patterns)?;
    write_json(&a.out, &report)?;
    if let Some(md) = &a.markdown {
        fs::write(md, render_markdown(std::slice::from_ref(&report))).map_err(|e| Error::io(md, e))?;
    }
    Ok(json!({
        "command": "eval",
        "model": report.model,
        "total": report.total,
        "accuracy": report.accuracy,
        "out": a.out,
    }))
}

fn gradcheck(a: GradcheckArgs) -> Result<serde_json::Value> {
    let r = check_tiny_model(a.seed)?;
    if !(r.max_rel_err < GRADCHECK_TOLERANCE) {
        return Err(Error::NumericError(format!(
            "max relative error {:.3e} at parameter {} exceeds {GRADCHECK_TOLERANCE:e} (floor {REL_ERR_FLOOR:e})",
            r.max_rel_err, r.worst
        )));
    }
    Ok(json!({
        "command": "gradcheck",
        "max_rel_err": r.max_rel_err,
        "checked": r.checked,
        "total": r.total,
        "seed": a.seed,
    }))
}
