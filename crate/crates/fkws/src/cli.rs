//! Command-line pipeline driver: corpus synthesis, feature extraction,
//! the two training stages, per-clip scoring, and the detection-error
//! report, each as one idempotent subcommand.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{ExperimentConfig, ResolvedPaths};
use crate::detect::KeywordSpec;
use crate::dsp::{
    compute_fbank_with, read_feature_cache, write_feature_cache, FeatureMatrix, FRAME_HOP,
    SAMPLE_RATE,
};
use crate::error::{Error, Result};
use crate::eval::{
    clip_posteriors, default_grid, det_points, fr_at_fa, negative_triggers, positive_score, sweep,
    ScoredSet,
};
use crate::ingest::{
    generate_corpus, load_clip, make_windows, read_manifest, Domain, ManifestEntry, Polarity,
    TrainingWindow,
};
use crate::models::{
    extract_domain_embedding, load_domain_net, load_keyword_net, save_domain_net,
    save_keyword_net, DomainEmbedding, DomainNet, KeywordNet,
};
use crate::train::{
    fit_domain_classifier, fit_keyword_classifier, CheckpointPlan, KeywordFitSpec,
    UtteranceSample,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DOMAIN_CKPT: &str = "domain.ckpt";
pub const KEYWORD_CKPT: &str = "keyword.ckpt";
pub const SUMMARY_JSON: &str = "summary.json";

#[derive(Debug, Parser)]
#[command(name = "fkws", version, about = "Far-field keyword spotting pipeline")]
pub struct Cli {
    /// Experiment configuration file (TOML); defaults apply without one.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Overrides the model variant: baseline, emb1, emb2, or mtl.
    #[arg(long, global = true)]
    pub variant: Option<String>,

    /// Picks an alignment strategy (s1..s5) and with it the coral loss.
    #[arg(long, global = true)]
    pub strategy: Option<String>,

    /// Overrides the auxiliary-loss weight.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,

    /// Base directory for all pipeline artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Also dump per-clip posterior traces while scoring.
    #[arg(long, global = true)]
    pub dump_scores: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Generate the synthetic three-domain corpus.
    Synth,
    /// Compute and cache log-Mel features for every corpus clip.
    Features,
    /// Train the recurrent domain classifier and freeze it.
    TrainDomain,
    /// Train the keyword classifier under the configured regime.
    TrainKws,
    /// Score every test clip with the trained keyword classifier.
    Score,
    /// Sweep thresholds and report the miss rate at 1 false alarm/hour.
    Evaluate,
}

/// Runs the parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg: String = e
                .message()
                .chars()
                .map(|c| if c == '\n' { ' ' } else { c })
                .collect();
            eprintln!("error: {}: {}", e.kind(), msg);
            e.exit_code()
        }
    }
}

/// Removes this run's outputs when it fails partway, so a failed
/// subcommand never leaves half-written artifacts behind.
struct OutputGuard {
    outputs: Vec<PathBuf>,
    armed: bool,
}

impl OutputGuard {
    fn new() -> Self {
        OutputGuard { outputs: Vec::new(), armed: true }
    }

    /// Registers a file about to be written.
    fn file(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Creates a directory, registering it for cleanup only when this
    /// run actually created it.
    fn create_dir(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            fs::create_dir_all(path)?;
            self.outputs.push(path.to_path_buf());
        }
        Ok(())
    }

    fn disarm(mut self) {
        self.armed = false;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if !self.armed {
            return;
        }
        // reverse order so files go before the directories holding them
        for path in self.outputs.iter().rev() {
            if path.is_dir() {
                let _ = fs::remove_dir_all(path);
            } else {
                let _ = fs::remove_file(path);
            }
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let (mut config, base) = match &cli.config {
        Some(path) => {
            let config = ExperimentConfig::from_file(path)?;
            let base = cli
                .out
                .clone()
                .unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).to_path_buf());
            (config, base)
        }
        None => {
            let base = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            (ExperimentConfig::default(), base)
        }
    };
    apply_overrides(&mut config, cli)?;
    config.validate()?;
    let paths = config.resolve_paths(&base);

    let mut guard = OutputGuard::new();
    match cli.command {
        Command::Synth => cmd_synth(&config, &paths, &mut guard)?,
        Command::Features => cmd_features(&config, &paths, &mut guard)?,
        Command::TrainDomain => cmd_train_domain(&config, &paths, &mut guard)?,
        Command::TrainKws => cmd_train_kws(&config, &paths, &mut guard)?,
        Command::Score => cmd_score(&config, &paths, cli.dump_scores, &mut guard)?,
        Command::Evaluate => cmd_evaluate(&config, &paths, &mut guard)?,
    }
    guard.disarm();
    Ok(())
}

/// Folds command-line overrides into the loaded document. The variant
/// and strategy flags also switch the loss mode they imply, so
/// `--variant mtl` or `--strategy s3` work without an edited config.
fn apply_overrides(config: &mut ExperimentConfig, cli: &Cli) -> Result<()> {
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(variant) = &cli.variant {
        config.model.variant = variant.clone();
        match variant.as_str() {
            "mtl" => {
                config.loss.mode = "mtl".to_string();
                config.loss.strategy = None;
            }
            _ => {
                if config.loss.mode == "mtl" {
                    config.loss.mode = "ce".to_string();
                }
            }
        }
    }
    if let Some(strategy) = &cli.strategy {
        config.loss.mode = "coral".to_string();
        config.loss.strategy = Some(strategy.clone());
    }
    if let Some(lambda) = cli.lambda {
        config.loss.lambda = Some(lambda);
    }
    Ok(())
}

fn manifest_path(paths: &ResolvedPaths, split: &str) -> PathBuf {
    paths.corpus_dir.join(split).join("manifest.jsonl")
}

fn read_split(paths: &ResolvedPaths, split: &str) -> Result<(PathBuf, Vec<ManifestEntry>)> {
    let manifest = manifest_path(paths, split);
    if !manifest.exists() {
        return Err(Error::Validation(format!(
            "manifest {} missing; run `fkws synth` first",
            manifest.display()
        )));
    }
    let entries = read_manifest(&manifest)?;
    Ok((manifest, entries))
}

fn feature_path(paths: &ResolvedPaths, split: &str, entry: &ManifestEntry) -> PathBuf {
    paths
        .feature_dir
        .join(split)
        .join(Path::new(&entry.path).with_extension("feat"))
}

fn load_features(
    paths: &ResolvedPaths,
    split: &str,
    entries: &[ManifestEntry],
) -> Result<Vec<FeatureMatrix>> {
    let mut features = Vec::with_capacity(entries.len());
    for entry in entries {
        let path = feature_path(paths, split, entry);
        if !path.exists() {
            return Err(Error::Validation(format!(
                "feature cache {} missing; run `fkws features` first",
                path.display()
            )));
        }
        features.push(read_feature_cache(&path)?);
    }
    Ok(features)
}

fn cmd_synth(config: &ExperimentConfig, paths: &ResolvedPaths, guard: &mut OutputGuard) -> Result<()> {
    guard.create_dir(&paths.corpus_dir)?;
    for split in ["train", "test"] {
        guard.create_dir(&paths.corpus_dir.join(split))?;
    }
    let counts = config.synth_counts();
    generate_corpus(&paths.corpus_dir, &counts, config.seed)?;
    println!(
        "synth: corpus under {} (train {}+{} clips, test {}+{} clips, x3 domains)",
        paths.corpus_dir.display(),
        counts.train_positives,
        counts.train_negatives,
        counts.test_positives,
        counts.test_negatives,
    );
    Ok(())
}

fn cmd_features(
    config: &ExperimentConfig,
    paths: &ResolvedPaths,
    guard: &mut OutputGuard,
) -> Result<()> {
    let params = config.frontend_params();
    let mut total = 0usize;
    for split in ["train", "test"] {
        let (manifest, entries) = read_split(paths, split)?;
        guard.create_dir(&paths.feature_dir.join(split))?;
        for entry in &entries {
            let clip = load_clip(&manifest, entry)?;
            let feats = compute_fbank_with(&clip.samples, &params)?;
            let cache = feature_path(paths, split, entry);
            guard.file(&cache);
            write_feature_cache(&cache, &feats)?;
            total += 1;
        }
    }
    println!(
        "features: cached {} clips under {}",
        total,
        paths.feature_dir.display()
    );
    Ok(())
}

fn cmd_train_domain(
    config: &ExperimentConfig,
    paths: &ResolvedPaths,
    guard: &mut OutputGuard,
) -> Result<()> {
    let (_, entries) = read_split(paths, "train")?;
    let features = load_features(paths, "train", &entries)?;
    let samples: Vec<UtteranceSample> = entries
        .iter()
        .zip(features)
        .map(|(entry, feats)| UtteranceSample {
            clip_id: entry.path.clone(),
            domain: entry.domain,
            features: feats,
        })
        .collect();

    let (net, log) = fit_domain_classifier(&samples, &config.train_config())?;

    guard.create_dir(&paths.checkpoint_dir)?;
    let ckpt = paths.checkpoint_dir.join(DOMAIN_CKPT);
    guard.file(&ckpt);
    save_domain_net(&ckpt, &net)?;

    guard.create_dir(&paths.report_dir)?;
    let log_path = paths.report_dir.join("domain_train_log.csv");
    guard.file(&log_path);
    fs::write(&log_path, log.to_csv())?;

    println!(
        "train-domain: {} utterances, {} epochs, saved {}",
        samples.len(),
        log.epochs.len(),
        ckpt.display()
    );
    Ok(())
}

/// Builds the labeled training windows for every clip of the split, in
/// manifest order, with one seeded stream driving the filler draws.
fn build_windows(
    config: &ExperimentConfig,
    entries: &[ManifestEntry],
    features: &[FeatureMatrix],
) -> (Vec<TrainingWindow>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x57AB_1E_F1_11E5);
    let mut windows = Vec::new();
    let mut skipped = 0usize;
    for (i, entry) in entries.iter().enumerate() {
        let set = make_windows(
            &features[i],
            i,
            entry.domain,
            entry.polarity,
            &entry.ends,
            config.train.fillers_per_clip,
            &mut rng,
        );
        if set.too_short {
            skipped += 1;
        }
        windows.extend(set.windows);
    }
    (windows, skipped)
}

fn cmd_train_kws(
    config: &ExperimentConfig,
    paths: &ResolvedPaths,
    guard: &mut OutputGuard,
) -> Result<()> {
    let (_, entries) = read_split(paths, "train")?;
    let features = load_features(paths, "train", &entries)?;
    let (windows, skipped) = build_windows(config, &entries, &features);
    if skipped > 0 {
        println!("train-kws: {skipped} clips too short to window");
    }

    let variant = config.variant()?;
    let domain_net = match (variant.needs_embedding(), &paths.domain_net) {
        (true, Some(path)) => {
            if !path.exists() {
                return Err(Error::Validation(format!(
                    "domain-net checkpoint {} missing; run `fkws train-domain` first",
                    path.display()
                )));
            }
            Some(load_domain_net(path)?)
        }
        _ => None,
    };

    guard.create_dir(&paths.checkpoint_dir)?;
    let fit = KeywordFitSpec {
        variant,
        dims: config.net_dims(),
        num_words: config.model.num_words,
        loss: config.loss_config()?,
        domain_net: domain_net.as_ref(),
        checkpoints: config.train.checkpoint_every.map(|every| CheckpointPlan {
            dir: paths.checkpoint_dir.clone(),
            every,
        }),
    };
    let (net, log) = fit_keyword_classifier(&windows, Some(&features), &fit, &config.train_config())?;

    let ckpt = paths.checkpoint_dir.join(KEYWORD_CKPT);
    guard.file(&ckpt);
    save_keyword_net(&ckpt, &net)?;

    guard.create_dir(&paths.report_dir)?;
    let log_path = paths.report_dir.join("train_log.csv");
    guard.file(&log_path);
    fs::write(&log_path, log.to_csv())?;

    println!(
        "train-kws: variant {}, {} windows, {} epochs, saved {}",
        variant.name(),
        windows.len(),
        log.epochs.len(),
        ckpt.display()
    );
    Ok(())
}

/// The trained keyword net plus whatever the embedding variants need to
/// score a clip.
struct Scorer {
    net: KeywordNet,
    domain_net: Option<DomainNet>,
}

impl Scorer {
    fn load(config: &ExperimentConfig, paths: &ResolvedPaths) -> Result<Self> {
        let ckpt = paths.checkpoint_dir.join(KEYWORD_CKPT);
        if !ckpt.exists() {
            return Err(Error::Validation(format!(
                "keyword checkpoint {} missing; run `fkws train-kws` first",
                ckpt.display()
            )));
        }
        let net = load_keyword_net(&ckpt)?;
        let domain_net = match (net.variant.needs_embedding(), &paths.domain_net) {
            (true, Some(path)) => Some(load_domain_net(path)?),
            (true, None) => {
                return Err(Error::Config(format!(
                    "checkpointed variant {} needs paths.domain_net",
                    net.variant.name()
                )));
            }
            (false, _) => None,
        };
        let _ = config; // widths come from the checkpoint itself
        Ok(Scorer { net, domain_net })
    }

    fn embedding(&self, feats: &FeatureMatrix) -> Result<Option<DomainEmbedding>> {
        match &self.domain_net {
            Some(dn) => Ok(Some(extract_domain_embedding(dn, feats)?)),
            None => Ok(None),
        }
    }
}

#[derive(Serialize)]
struct ScoreRecord<'a> {
    path: &'a str,
    domain: &'a str,
    polarity: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    triggers: Option<Vec<f64>>,
}

fn cmd_score(
    config: &ExperimentConfig,
    paths: &ResolvedPaths,
    dump: bool,
    guard: &mut OutputGuard,
) -> Result<()> {
    let (_, entries) = read_split(paths, "test")?;
    let features = load_features(paths, "test", &entries)?;
    let scorer = Scorer::load(config, paths)?;
    let spec = KeywordSpec::in_class_order(config.model.num_words)?;
    let det = config.detector_config();

    guard.create_dir(&paths.report_dir)?;
    let dump_dir = paths.report_dir.join("posteriors");
    if dump {
        guard.create_dir(&dump_dir)?;
    }

    let mut lines = String::new();
    for (entry, feats) in entries.iter().zip(&features) {
        let embedding = scorer.embedding(feats)?;
        let posteriors = clip_posteriors(&scorer.net, feats, embedding.as_ref())?;
        let record = match entry.polarity {
            Polarity::Positive => ScoreRecord {
                path: &entry.path,
                domain: entry.domain.label(),
                polarity: "positive",
                score: Some(positive_score(&posteriors, &det, &spec)?),
                triggers: None,
            },
            Polarity::Negative => ScoreRecord {
                path: &entry.path,
                domain: entry.domain.label(),
                polarity: "negative",
                score: None,
                triggers: Some(negative_triggers(&posteriors, &det, &spec)?),
            },
        };
        lines.push_str(&serde_json::to_string(&record).expect("record serializes"));
        lines.push('\n');

        if dump {
            let dump_path = dump_dir.join(Path::new(&entry.path).with_extension("csv"));
            guard.file(&dump_path);
            fs::write(&dump_path, posterior_csv(&posteriors))?;
        }
    }

    let out = paths.report_dir.join("scores.jsonl");
    guard.file(&out);
    fs::write(&out, lines)?;
    println!("score: {} clips -> {}", entries.len(), out.display());
    Ok(())
}

fn posterior_csv(p: &crate::detect::PosteriorSequence) -> String {
    let classes = p.classes();
    let mut header = String::from("frame");
    for c in 0..classes {
        header.push_str(&format!(",p{c}"));
    }
    header.push('\n');
    let mut out = header;
    for t in 0..p.frames() {
        out.push_str(&t.to_string());
        for &v in p.row(t) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct DomainSummary {
    positives: usize,
    negative_clips: usize,
    negative_hours: f64,
    threshold: f64,
    fr_at_fa1: f64,
    fa_per_hour: f64,
    saturated: bool,
}

fn cmd_evaluate(
    config: &ExperimentConfig,
    paths: &ResolvedPaths,
    guard: &mut OutputGuard,
) -> Result<()> {
    let (_, entries) = read_split(paths, "test")?;
    let features = load_features(paths, "test", &entries)?;
    let scorer = Scorer::load(config, paths)?;
    let spec = KeywordSpec::in_class_order(config.model.num_words)?;
    let det = config.detector_config();

    guard.create_dir(&paths.report_dir)?;
    let grid = default_grid();
    let mut summary: BTreeMap<&'static str, DomainSummary> = BTreeMap::new();

    for domain in Domain::ALL {
        let mut scored = ScoredSet {
            positives: Vec::new(),
            negatives: Vec::new(),
            negative_audio_hours: 0.0,
        };
        for (entry, feats) in entries.iter().zip(&features) {
            if entry.domain != domain {
                continue;
            }
            let embedding = scorer.embedding(feats)?;
            let posteriors = clip_posteriors(&scorer.net, feats, embedding.as_ref())?;
            match entry.polarity {
                Polarity::Positive => {
                    let h = positive_score(&posteriors, &det, &spec)?;
                    scored.positives.push((entry.path.clone(), h));
                }
                Polarity::Negative => {
                    let triggers = negative_triggers(&posteriors, &det, &spec)?;
                    scored.negatives.push((entry.path.clone(), triggers));
                    // clip duration from its frame count at the 10 ms hop
                    scored.negative_audio_hours +=
                        (feats.num_frames() * FRAME_HOP) as f64 / SAMPLE_RATE as f64 / 3600.0;
                }
            }
        }
        if scored.positives.is_empty() || scored.negatives.is_empty() {
            return Err(Error::Validation(format!(
                "test split has no {} scoring material for domain {}",
                if scored.positives.is_empty() { "positive" } else { "negative" },
                domain.label()
            )));
        }

        let points = sweep(&scored, &grid)?;
        let det_path = paths
            .report_dir
            .join(format!("det_{}.csv", domain.slug()));
        guard.file(&det_path);
        fs::write(&det_path, det_points(&points))?;

        let pick = fr_at_fa(&points, 1.0)?;
        summary.insert(
            domain.label(),
            DomainSummary {
                positives: scored.positives.len(),
                negative_clips: scored.negatives.len(),
                negative_hours: scored.negative_audio_hours,
                threshold: pick.chosen.threshold,
                fr_at_fa1: pick.chosen.fr_rate,
                fa_per_hour: pick.chosen.fa_per_hour,
                saturated: pick.saturated,
            },
        );
    }

    let out = paths.report_dir.join(SUMMARY_JSON);
    guard.file(&out);
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    fs::write(&out, text)?;

    for (label, s) in &summary {
        println!(
            "evaluate: {} -> miss {:.4} at {:.3}/h (threshold {:.3}{})",
            label,
            s.fr_at_fa1,
            s.fa_per_hour,
            s.threshold,
            if s.saturated { ", saturated" } else { "" }
        );
    }
    println!("evaluate: summary at {}", out.display());
    Ok(())
}
