//! `prosodid`: extract, syllabify, sweep, synth and report.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use prosodid_core::classifiers::ClassifierKind;
use prosodid_core::corpus::{build_manifest, load_wav, split_folds, write_annotations, CorpusManifest, Tier};
use prosodid_core::dsp::preprocess;
use prosodid_core::eval::{
    confusion_csv, extract_corpus, generate_synthetic_corpus, load_corpus_features, report_csv, summary, summary_from_csv,
    sweep, FeatureCache,
};
use prosodid_core::par;
use prosodid_core::syllabifier::syllabify;

use config::{parse_combos, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "prosodid", version, about = "Prosodic dialect identification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract frame tracks, syllables and unit descriptors into the feature cache.
    Extract(Common),
    /// Write syllable boundaries for individual wav files.
    Syllabify {
        #[command(flatten)]
        common: Common,
        /// Wav files; defaults to every recording of the corpus.
        wavs: Vec<PathBuf>,
    },
    /// Run the cross-validation grid over cached features.
    Sweep(Common),
    /// Generate a synthetic corpus into --out.
    Synth(Common),
    /// Re-render the summary from a report CSV.
    Report {
        #[command(flatten)]
        common: Common,
        /// Report CSV; defaults to <out>/report.csv.
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OnOff {
    On,
    Off,
    Both,
}

#[derive(Args, Debug, Default)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// word or syllable; repeatable.
    #[arg(long)]
    tier: Vec<Tier>,
    /// One feature combination per use (EN,F0,ST or EN+F0+ST), or "all".
    #[arg(long)]
    combo: Vec<String>,
    #[arg(long, value_enum)]
    context: Option<OnOff>,
    /// Comma-separated classifier names.
    #[arg(long, value_delimiter = ',')]
    classifier: Vec<ClassifierKind>,
}

impl Common {
    /// Config file (or defaults) with the flags applied on top.
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.corpus {
            c.corpus = v.clone();
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.workers {
            c.workers = v;
        }
        if !self.tier.is_empty() {
            c.tiers = self.tier.clone();
        }
        if !self.combo.is_empty() {
            c.combos = parse_combos(&self.combo)?;
        }
        if let Some(v) = self.context {
            c.contexts = match v {
                OnOff::On => vec![true],
                OnOff::Off => vec![false],
                OnOff::Both => vec![false, true],
            };
        }
        if !self.classifier.is_empty() {
            c.classifiers = self.classifier.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Extract(_) => "extract",
        Command::Syllabify { .. } => "syllabify",
        Command::Sweep(_) => "sweep",
        Command::Synth(_) => "synth",
        Command::Report { .. } => "report",
    }
}

/// A failure that has already been itemized; carries extra JSON fields.
#[derive(Debug)]
struct Failed {
    message: String,
    details: serde_json::Value,
}

impl std::fmt::Display for Failed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failed {}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn echo_config(c: &ExperimentConfig, name: &str) -> anyhow::Result<()> {
    write_file(&c.out.join(name), c.to_toml()?)
}

fn manifest(c: &ExperimentConfig) -> anyhow::Result<CorpusManifest> {
    build_manifest(&c.corpus).with_context(|| format!("scanning corpus {}", c.corpus.display()))
}

fn cmd_extract(c: &ExperimentConfig) -> anyhow::Result<()> {
    let m = manifest(c)?;
    echo_config(c, "extract.toml")?;
    write_file(&c.out.join("manifest.json"), m.to_json()?)?;
    let cache = FeatureCache::from_env_or(c.cache_dir());
    let (s, _) = par::with_workers(c.workers, || extract_corpus(&m, &c.extract, &cache))?;
    println!(
        "{}",
        json!({
            "recordings": s.recordings,
            "cache_hits": s.cache_hits,
            "computed": s.computed,
            "failed": s.failures.len(),
            "skipped_units": s.skipped_units,
            "cache": cache.dir(),
        })
    );
    if !s.failures.is_empty() {
        let failures: Vec<_> = s.failures.iter().map(|(id, e)| json!({"recording": id, "error": e})).collect();
        return Err(Failed {
            message: format!("{} of {} recordings failed", s.failures.len(), s.recordings),
            details: json!({ "failures": failures }),
        }
        .into());
    }
    Ok(())
}

fn cmd_syllabify(c: &ExperimentConfig, wavs: &[PathBuf]) -> anyhow::Result<()> {
    let wavs: Vec<PathBuf> = if wavs.is_empty() {
        let m = manifest(c)?;
        m.recordings.iter().map(|r| m.wav_path(r)).collect()
    } else {
        wavs.to_vec()
    };
    let results = par::with_workers(c.workers, || {
        par::map(&wavs, |path| -> anyhow::Result<usize> {
            let rec = load_wav(path)?;
            let units = syllabify(&preprocess(&rec, &c.extract.front_end)?, &c.extract.oscillator)?;
            let out = c.out.join(format!("{}.syllables.tsv", rec.recording_id));
            std::fs::create_dir_all(&c.out)?;
            write_annotations(&out, &units)?;
            Ok(units.len())
        })
    });
    let mut failures = Vec::new();
    for (path, r) in wavs.iter().zip(results) {
        match r {
            Ok(n) => println!("{}\t{n}", path.display()),
            Err(e) => failures.push(json!({"wav": path, "error": message(&e)})),
        }
    }
    if !failures.is_empty() {
        return Err(Failed {
            message: format!("{} of {} files failed", failures.len(), wavs.len()),
            details: json!({ "failures": failures }),
        }
        .into());
    }
    Ok(())
}

fn cmd_sweep(c: &ExperimentConfig) -> anyhow::Result<()> {
    let m = manifest(c)?;
    let cache = FeatureCache::from_env_or(c.cache_dir());
    let features = load_corpus_features(&m, &c.extract, &cache).context("run `prosodid extract` first")?;
    let plan = split_folds(&m, c.folds, c.repeats, c.seed)?;
    for s in plan.splits() {
        s.check_disjoint()?;
    }
    let grid = c.grid();
    let workers = match c.workers {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(grid.cells().len());
    log::info!("{} cells × {} splits on {workers} workers", grid.cells().len(), c.folds * c.repeats);
    let report = par::with_workers(workers, || sweep(&features, &plan, &grid, &c.hyperparams, c.seed));

    echo_config(c, "config.toml")?;
    write_file(&c.out.join("folds.json"), serde_json::to_string_pretty(&plan)?)?;
    write_file(&c.out.join("report.csv"), report_csv(&report)?)?;
    write_file(&c.out.join("confusion.csv"), confusion_csv(&report))?;
    let s = summary(&report);
    write_file(&c.out.join("summary.json"), s.to_json()?)?;
    for line in s.lines() {
        println!("{line}");
    }
    if !s.errors.is_empty() {
        let cells: Vec<_> = s.errors.iter().map(|(cell, e)| json!({"cell": cell, "error": e})).collect();
        return Err(Failed {
            message: format!("{} of {} grid cells failed", s.errors.len(), s.cells),
            details: json!({ "cells": cells }),
        }
        .into());
    }
    Ok(())
}

fn cmd_synth(c: &ExperimentConfig) -> anyhow::Result<()> {
    let m = par::with_workers(c.workers, || generate_synthetic_corpus(&c.out, &c.synth, c.seed))?;
    // surfaces the too-few-speakers warning before anyone runs a sweep
    split_folds(&m, c.folds, 1, c.seed)?;
    println!(
        "{}",
        json!({
            "corpus": c.out,
            "dialects": m.dialects().len(),
            "speakers": m.speakers.len(),
            "recordings": m.recordings.len(),
        })
    );
    Ok(())
}

fn cmd_report(c: &ExperimentConfig, csv: Option<&Path>) -> anyhow::Result<()> {
    let path = csv.map_or_else(|| c.out.join("report.csv"), Path::to_path_buf);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let s = summary_from_csv(&text)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    write_file(&dir.join("summary.json"), s.to_json()?)?;
    for line in s.lines() {
        println!("{line}");
    }
    if s.best.is_none() && s.errors.is_empty() {
        bail!("{} has no aggregate rows", path.display());
    }
    Ok(())
}

/// The error chain joined with ": ", skipping causes already quoted by their parent.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Extract(common) => cmd_extract(&common.resolve()?),
        Command::Syllabify { common, wavs } => cmd_syllabify(&common.resolve()?, wavs),
        Command::Sweep(common) => cmd_sweep(&common.resolve()?),
        Command::Synth(common) => cmd_synth(&common.resolve()?),
        Command::Report { common, csv } => cmd_report(&common.resolve()?, csv.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&msg).trim_start_matches("error: ").to_string();
            eprintln!("{}", json!({"command": null, "error": "usage", "message": first}));
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut record = json!({
                "command": command_name(&cli.command),
                "error": e.downcast_ref::<Failed>().map_or("failed", |_| "partial"),
                "message": message(&e),
            });
            if let Some(f) = e.downcast_ref::<Failed>() {
                if let (Some(obj), Some(extra)) = (record.as_object_mut(), f.details.as_object()) {
                    obj.extend(extra.clone());
                }
            }
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
