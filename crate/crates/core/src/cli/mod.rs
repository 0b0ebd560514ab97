//! `twinfuse synth|extract|match|evaluate`.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

pub use config::{ConfigError, PipelineConfig};

use crate::dataset::{
    generate_synthetic_cohort, load_image, load_wav, parse_manifest, Manifest, SynthConfig,
};
use crate::dcva::{fit_dcva, LabeledSamples};
use crate::dtw::{match_speech, SpeechTemplate};
use crate::ear::{extract_ear_features, GaborBank};
use crate::eval::{cmc, identity_truth, rank_table, twin_one_one};
use crate::fusion::{fuse, to_similarity, FusionError, Polarity, ScoreMatrix};
use crate::speech::{mfcc, MfccSequence};
use crate::store::{self, EntryKind, StoreEntry, StoreError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const IDS_FILE: &str = "ids.txt";

#[derive(Debug, Parser)]
#[command(
    name = "twinfuse",
    version,
    about = "Speech and ear fusion for identifying twins"
)]
pub struct Cli {
    /// Configuration file (flat key=value).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. --set speech.n_ceps=13. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Manifest path (config key `manifest`).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Feature store directory (config key `store`).
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic twin cohort and its manifest.
    Synth(SynthArgs),
    /// Extract MFCC and/or Gabor ear features into the store.
    Extract(ExtractArgs),
    /// Fit the ear model and compute speech and ear distance matrices.
    Match,
    /// Normalize, fuse and write CMC curves and the rank table.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of twin pairs.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub pairs: u64,
    /// Output directory (config key `synth.out_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Within-pair perturbation strength.
    #[arg(long)]
    pub twin_gap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Modality {
    Speech,
    Ear,
    All,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long, value_enum, default_value_t = Modality::All)]
    pub modality: Modality,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub w_speech: Option<f64>,
    #[arg(long)]
    pub w_ear: Option<f64>,
    /// row or global.
    #[arg(long)]
    pub normalization: Option<String>,
    /// Report directory (config key `reports`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_threads();
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

fn init_threads() {
    if let Some(n) = std::env::var("TWINFUSE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // Fails harmlessly if the global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax {
            origin: "--set".into(),
            line: 1,
        })?;
        cfg.set(k, v)?;
    }
    if let Some(m) = &cli.manifest {
        cfg.manifest = m.clone();
    }
    if let Some(s) = &cli.store {
        cfg.store = s.clone();
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::Synth(a) => {
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(o) = &a.out {
                cfg.synth_out = o.clone();
            }
            if let Some(g) = a.twin_gap {
                cfg.twin_gap = g;
            }
            cfg.validate()?;
            cmd_synth(&cfg, a.pairs as usize)?;
        }
        Command::Extract(a) => {
            cfg.validate()?;
            cmd_extract(&cfg, a.modality)?;
        }
        Command::Match => {
            cfg.validate()?;
            cmd_match(&cfg)?;
        }
        Command::Evaluate(a) => {
            if let Some(w) = a.w_speech {
                cfg.fusion.w_speech = w;
            }
            if let Some(w) = a.w_ear {
                cfg.fusion.w_ear = w;
            }
            if let Some(n) = &a.normalization {
                cfg.fusion.normalization = n.parse().map_err(Failure::Usage)?;
            }
            if let Some(o) = &a.out {
                cfg.reports = Some(o.clone());
            }
            cfg.validate()?;
            let table = cmd_evaluate(&cfg)?;
            print!("{table}");
        }
    }
    Ok(())
}

pub fn cmd_synth(cfg: &PipelineConfig, n_pairs: usize) -> Result<PathBuf> {
    let synth = SynthConfig {
        seed: cfg.seed,
        n_pairs,
        twin_gap: cfg.twin_gap,
        sample_rate: cfg.sample_rate,
        image_width: cfg.ear.width,
        image_height: cfg.ear.height,
    };
    let manifest = generate_synthetic_cohort(&synth, &cfg.synth_out)
        .with_context(|| format!("generating cohort in {}", cfg.synth_out.display()))?;
    let path = cfg.synth_out.join("manifest.csv");
    println!(
        "{} subjects written, manifest {}",
        manifest.subjects.len(),
        path.display()
    );
    Ok(path)
}

fn load_manifest(cfg: &PipelineConfig) -> Result<Manifest> {
    parse_manifest(&cfg.manifest)
        .with_context(|| format!("reading manifest {}", cfg.manifest.display()))
}

fn speech_ids(subject: &str, split: &str, n: usize) -> Vec<String> {
    (1..=n)
        .map(|i| format!("{subject}_speech_{split}{i}"))
        .collect()
}

fn ear_id(subject: &str, split: &str) -> String {
    format!("{subject}_ear_{split}")
}

/// Returns the number of entries written per modality.
pub fn cmd_extract(cfg: &PipelineConfig, modality: Modality) -> Result<(usize, usize)> {
    let manifest = load_manifest(cfg)?;
    let mut counts = (0, 0);
    if matches!(modality, Modality::Speech | Modality::All) {
        let written: Vec<usize> = manifest
            .subjects
            .par_iter()
            .map(|s| -> Result<usize> {
                let jobs = speech_ids(&s.subject_id, "train", s.speech_train.len())
                    .into_iter()
                    .zip(&s.speech_train)
                    .chain(
                        speech_ids(&s.subject_id, "test", s.speech_test.len())
                            .into_iter()
                            .zip(&s.speech_test),
                    );
                let mut n = 0;
                for (id, path) in jobs {
                    let clip =
                        load_wav(path).with_context(|| format!("loading {}", path.display()))?;
                    let seq = mfcc(&clip, &cfg.frame)
                        .with_context(|| format!("extracting MFCC from {}", path.display()))?;
                    let entry = StoreEntry::new(
                        EntryKind::Mfcc,
                        id,
                        vec![seq.n_frames(), seq.n_ceps()],
                        seq.as_slice().to_vec(),
                    )?;
                    store::put(&cfg.store, &entry)?;
                    n += 1;
                }
                Ok(n)
            })
            .collect::<Result<_>>()?;
        counts.0 = written.iter().sum();
        println!("speech: {} MFCC entries", counts.0);
    }
    if matches!(modality, Modality::Ear | Modality::All) {
        let (w, h) = (cfg.ear.width, cfg.ear.height);
        let bank = GaborBank::build(&cfg.ear.bank, w.min(h)).context("building Gabor bank")?;
        let written: Vec<usize> = manifest
            .subjects
            .par_iter()
            .map(|s| -> Result<usize> {
                let jobs = [
                    ("train", &s.ear_train, cfg.ear.mirror),
                    ("test", &s.ear_test, false),
                ];
                for (split, path, mirror) in jobs {
                    let img =
                        load_image(path).with_context(|| format!("loading {}", path.display()))?;
                    if img.width() != w || img.height() != h {
                        bail!(
                            "{}: image is {}x{}, configured size is {}x{}",
                            path.display(),
                            img.width(),
                            img.height(),
                            w,
                            h
                        );
                    }
                    let v = extract_ear_features(&img, &bank, mirror).with_context(|| {
                        format!("extracting ear features from {}", path.display())
                    })?;
                    let entry = StoreEntry::new(
                        EntryKind::EarVector,
                        ear_id(&s.subject_id, split),
                        vec![v.values.len()],
                        v.values,
                    )?;
                    store::put(&cfg.store, &entry)?;
                }
                Ok(2)
            })
            .collect::<Result<_>>()?;
        counts.1 = written.iter().sum();
        println!("ear: {} feature vectors", counts.1);
    }
    Ok(counts)
}

/// Loads every `(kind, id)` or fails with the full list of absent ids.
fn fetch_all(store_dir: &Path, kind: EntryKind, ids: &[String]) -> Result<Vec<StoreEntry>> {
    let results: Vec<Result<StoreEntry, StoreError>> = ids
        .par_iter()
        .map(|id| store::get(store_dir, kind, id))
        .collect();
    let missing: Vec<&str> = results
        .iter()
        .zip(ids)
        .filter(|(r, _)| matches!(r, Err(StoreError::NotFound { .. })))
        .map(|(_, id)| id.as_str())
        .collect();
    if !missing.is_empty() {
        bail!(
            "missing {kind} features (run extract first): {}",
            missing.join(", ")
        );
    }
    results
        .into_iter()
        .map(|r| r.map_err(anyhow::Error::from))
        .collect()
}

fn to_sequence(entry: StoreEntry, cfg: &PipelineConfig) -> Result<MfccSequence> {
    MfccSequence::new(entry.shape[1], entry.payload, cfg.frame.clone())
        .map_err(|e| anyhow!("entry {}: {e}", entry.id))
}

/// Writes `score_matrix/speech`, `score_matrix/ear` and `dcva_model/ear`.
pub fn cmd_match(cfg: &PipelineConfig) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let ids = manifest.subject_ids();
    let g = ids.len();

    let per_subject = |split: &str, count: &dyn Fn(usize) -> usize| -> Vec<(usize, String)> {
        manifest
            .subjects
            .iter()
            .enumerate()
            .flat_map(|(k, s)| {
                speech_ids(&s.subject_id, split, count(k))
                    .into_iter()
                    .map(move |id| (k, id))
            })
            .collect()
    };
    let train = per_subject("train", &|k| manifest.subjects[k].speech_train.len());
    let test = per_subject("test", &|k| manifest.subjects[k].speech_test.len());
    let ear_train: Vec<String> = ids.iter().map(|s| ear_id(s, "train")).collect();
    let ear_test: Vec<String> = ids.iter().map(|s| ear_id(s, "test")).collect();

    let train_ids: Vec<String> = train.iter().map(|(_, id)| id.clone()).collect();
    let test_ids: Vec<String> = test.iter().map(|(_, id)| id.clone()).collect();
    let mut missing = Vec::new();
    for (kind, list) in [
        (EntryKind::Mfcc, &train_ids),
        (EntryKind::Mfcc, &test_ids),
        (EntryKind::EarVector, &ear_train),
        (EntryKind::EarVector, &ear_test),
    ] {
        missing.extend(
            list.iter()
                .filter(|id| !store::contains(&cfg.store, kind, id))
                .cloned(),
        );
    }
    if !missing.is_empty() {
        bail!(
            "missing features (run extract first): {}",
            missing.join(", ")
        );
    }

    let mut sequences: Vec<Vec<MfccSequence>> = vec![Vec::new(); g];
    for ((k, _), e) in train
        .iter()
        .zip(fetch_all(&cfg.store, EntryKind::Mfcc, &train_ids)?)
    {
        sequences[*k].push(to_sequence(e, cfg)?);
    }
    let gallery: Vec<SpeechTemplate> = ids
        .iter()
        .zip(sequences)
        .map(|(id, seqs)| {
            SpeechTemplate::new(id.clone(), seqs).map_err(|e| anyhow!("speech template {id}: {e}"))
        })
        .collect::<Result<_>>()?;
    let mut probes: Vec<Vec<MfccSequence>> = vec![Vec::new(); g];
    for ((k, _), e) in test
        .iter()
        .zip(fetch_all(&cfg.store, EntryKind::Mfcc, &test_ids)?)
    {
        probes[*k].push(to_sequence(e, cfg)?);
    }
    let speech_rows: Vec<Vec<f64>> = probes
        .par_iter()
        .enumerate()
        .map(|(k, utts)| -> Result<Vec<f64>> {
            if utts.is_empty() {
                bail!("subject {} has no test utterance", ids[k]);
            }
            let mut best = vec![f64::INFINITY; g];
            for u in utts {
                let d = match_speech(u, &gallery, &cfg.dtw)
                    .map_err(|e| anyhow!("matching {}: {e}", ids[k]))?;
                for (b, x) in best.iter_mut().zip(d) {
                    *b = b.min(x);
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;

    let train_vecs = fetch_all(&cfg.store, EntryKind::EarVector, &ear_train)?;
    let samples = LabeledSamples::new(
        ids.clone(),
        train_vecs.into_iter().map(|e| vec![e.payload]).collect(),
    )
    .context("assembling ear training set")?;
    let model = fit_dcva(&samples).context("fitting ear model")?;
    drop(samples);
    let ear_rows: Vec<Vec<f64>> = fetch_all(&cfg.store, EntryKind::EarVector, &ear_test)?
        .into_par_iter()
        .map(|e| {
            model
                .distances(&e.payload)
                .map_err(|err| anyhow!("matching {}: {err}", e.id))
        })
        .collect::<Result<_>>()?;

    for (name, rows) in [("speech", &speech_rows), ("ear", &ear_rows)] {
        let m = ScoreMatrix::from_rows(ids.clone(), ids.clone(), rows, Polarity::Distance)?;
        let entry = StoreEntry::new(
            EntryKind::ScoreMatrix,
            name,
            vec![g, g],
            m.scores().to_vec(),
        )?;
        store::put(&cfg.store, &entry)?;
    }
    let (shape, payload) = model.to_payload();
    store::put(
        &cfg.store,
        &StoreEntry::new(EntryKind::DcvaModel, "ear", shape, payload)?,
    )?;
    let ids_path = cfg
        .store
        .join(EntryKind::ScoreMatrix.dir_name())
        .join(IDS_FILE);
    fs::write(&ids_path, ids.join("\n") + "\n")
        .with_context(|| format!("writing {}", ids_path.display()))?;
    println!("speech and ear distance matrices: {g} probes x {g} identities");
    Ok(())
}

fn load_matrix(cfg: &PipelineConfig, name: &str, ids: &[String]) -> Result<ScoreMatrix> {
    let e = store::get(&cfg.store, EntryKind::ScoreMatrix, name).context("run match first")?;
    let n = ids.len();
    if e.shape != [n, n] {
        return Err(FusionError::IdMismatch).with_context(|| {
            format!(
                "score matrix {name} is {:?}, gallery has {n} identities",
                e.shape
            )
        });
    }
    Ok(ScoreMatrix::new(
        ids.to_vec(),
        ids.to_vec(),
        e.payload,
        Polarity::Distance,
    )?)
}

/// Writes the CSV reports and returns the rank table text.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<String> {
    let manifest = load_manifest(cfg)?;
    let ids = manifest.subject_ids();
    let ids_path = cfg
        .store
        .join(EntryKind::ScoreMatrix.dir_name())
        .join(IDS_FILE);
    let stored = fs::read_to_string(&ids_path)
        .with_context(|| format!("reading {} (run match first)", ids_path.display()))?;
    let stored: Vec<&str> = stored.lines().collect();
    if stored != ids.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(FusionError::IdMismatch)
            .context("manifest identities differ from those the score matrices were computed for; rerun match");
    }

    let granularity = cfg.fusion.normalization;
    let speech = to_similarity(&load_matrix(cfg, "speech", &ids)?, granularity);
    let ear = to_similarity(&load_matrix(cfg, "ear", &ids)?, granularity);
    let fused = fuse(&speech, &ear, cfg.fusion.w_speech, cfg.fusion.w_ear)?;

    let truth = identity_truth(&ids);
    let twins = manifest.twin_map();
    let systems = [
        ("Speech", "speech", &speech),
        ("Ear", "ear", &ear),
        ("Speech + Ear (matching score fusion)", "fused", &fused),
    ];
    let curves = systems
        .iter()
        .map(|(_, _, m)| cmc(m, &truth))
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = rank_table(
        &systems
            .iter()
            .zip(&curves)
            .map(|((label, _, _), c)| (*label, c))
            .collect::<Vec<_>>(),
    );
    for (label, m) in [
        ("Speech (only twins one-one)", &speech),
        ("Ear (only twins one-one)", &ear),
        ("Speech + Ear (only twins one-one)", &fused),
    ] {
        table.push_one_one(label, twin_one_one(m, &truth, &twins)?);
    }

    let out = cfg.reports_dir();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let write = |name: &str, text: &str| -> Result<()> {
        let p = out.join(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    };
    for ((_, short, m), c) in systems.iter().zip(&curves) {
        write(&format!("cmc_{short}.csv"), &c.to_csv(short))?;
        write(&format!("scores_{short}.csv"), &m.to_csv())?;
    }
    let text = table.to_text();
    write("rank_table.txt", &text)?;
    write("rank_table.csv", &table.to_csv())?;
    Ok(text)
}
