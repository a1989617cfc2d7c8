//! Experiment configuration: one TOML document drives the whole
//! pipeline. Every field has a default, so a bare run reproduces the
//! standard recipe; loading then re-emitting materializes those defaults
//! into an equivalent document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detect::DetectorConfig;
use crate::dsp::FrontendParams;
use crate::error::{Error, Result};
use crate::ingest::SynthCounts;
use crate::losses::{CoralStrategy, LossConfig, LossMode, CORAL_LAMBDA_DEFAULT, MTL_LAMBDA_DEFAULT};
use crate::models::{NetDims, Variant};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendSection {
    pub pre_emphasis: f64,
    pub fft_len: usize,
    pub mel_low_hz: f64,
    pub mel_high_hz: f64,
    pub log_floor: f64,
}

impl Default for FrontendSection {
    fn default() -> Self {
        let p = FrontendParams::default();
        FrontendSection {
            pre_emphasis: p.pre_emphasis,
            fft_len: p.fft_len,
            mel_low_hz: p.mel_low_hz,
            mel_high_hz: p.mel_high_hz,
            log_floor: p.log_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: String,
    pub channels: [usize; 3],
    pub fc1: usize,
    pub embedding: usize,
    pub num_words: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = NetDims::default();
        ModelSection {
            variant: Variant::Baseline.name().to_string(),
            channels: d.channels,
            fc1: d.fc1,
            embedding: d.embedding,
            num_words: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection { mode: "ce".to_string(), strategy: None, lambda: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr0: f64,
    pub momentum: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub plateau_min_delta: f64,
    pub early_stop_patience: usize,
    pub fillers_per_clip: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            lr0: t.lr0,
            momentum: t.momentum,
            batch: t.batch,
            max_epochs: t.max_epochs,
            plateau_patience: t.plateau_patience,
            plateau_factor: t.plateau_factor,
            plateau_min_delta: t.plateau_min_delta,
            early_stop_patience: t.early_stop_patience,
            fillers_per_clip: 2,
            checkpoint_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub smoothing: usize,
    pub window: usize,
    pub threshold: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let d = DetectorConfig::default();
        DetectorSection { smoothing: d.smoothing, window: d.window, threshold: d.threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub train_positives: usize,
    pub train_negatives: usize,
    pub test_positives: usize,
    pub test_negatives: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            train_positives: 500,
            train_negatives: 500,
            test_positives: 200,
            test_negatives: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub corpus_dir: String,
    pub feature_dir: String,
    pub checkpoint_dir: String,
    pub report_dir: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain_net: Option<String>,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            corpus_dir: "corpus".to_string(),
            feature_dir: "features".to_string(),
            checkpoint_dir: "checkpoints".to_string(),
            report_dir: "reports".to_string(),
            domain_net: None,
        }
    }
}

/// The whole experiment in one document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub frontend: FrontendSection,
    pub model: ModelSection,
    pub loss: LossSection,
    pub train: TrainSection,
    pub detector: DetectorSection,
    pub synth: SynthSection,
    pub paths: PathsSection,
}

/// Section paths resolved against a base directory.
#[derive(Debug, Clone)]
pub struct ResolvedPaths {
    pub corpus_dir: PathBuf,
    pub feature_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
    pub domain_net: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.normalize();
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Emits the effective document, every default materialized.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Fills mode-dependent blanks (the penalty weight).
    fn normalize(&mut self) {
        if self.lambda_default().is_some() && self.loss.lambda.is_none() {
            self.loss.lambda = self.lambda_default();
        }
    }

    fn lambda_default(&self) -> Option<f64> {
        match self.loss.mode.as_str() {
            "coral" => Some(CORAL_LAMBDA_DEFAULT),
            "mtl" => Some(MTL_LAMBDA_DEFAULT),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        // inner validators speak in validation errors; everything caught
        // at load time is a configuration problem
        let as_config = |e: Error| Error::Config(e.to_string());
        self.frontend_params().validate().map_err(as_config)?;
        let variant = self.variant()?;
        self.net_dims().validate().map_err(as_config)?;
        if self.model.num_words == 0 {
            return Err(Error::Config("num_words must be positive".into()));
        }
        let loss = self.loss_config()?;
        loss.validate()?;
        // the variant/mode compatibility matrix, enforced before any
        // training starts
        match (variant, loss.mode) {
            (Variant::Mtl, LossMode::Mtl) => {}
            (Variant::Mtl, _) | (_, LossMode::Mtl) => {
                return Err(Error::Config(
                    "the mtl variant and the mtl loss mode go together".into(),
                ));
            }
            (Variant::Baseline, _) => {}
            (_, LossMode::Coral(_)) => {
                return Err(Error::Config(
                    "correlation alignment applies to the baseline variant".into(),
                ));
            }
            (_, LossMode::CeOnly) => {}
        }
        if variant.needs_embedding() && self.paths.domain_net.is_none() {
            return Err(Error::Config(format!(
                "variant {} needs paths.domain_net",
                variant.name()
            )));
        }
        if !variant.needs_embedding() && self.paths.domain_net.is_some() {
            return Err(Error::Config(format!(
                "variant {} takes no domain-net checkpoint",
                variant.name()
            )));
        }
        self.train_config().validate()?;
        if self.train.fillers_per_clip == 0 {
            return Err(Error::Config("fillers_per_clip must be positive".into()));
        }
        if let Some(every) = self.train.checkpoint_every {
            if every == 0 {
                return Err(Error::Config("checkpoint_every must be positive".into()));
            }
        }
        self.detector_config()
            .validate(self.model.num_words)
            .map_err(as_config)?;
        for (name, value) in [
            ("corpus_dir", &self.paths.corpus_dir),
            ("feature_dir", &self.paths.feature_dir),
            ("checkpoint_dir", &self.paths.checkpoint_dir),
            ("report_dir", &self.paths.report_dir),
        ] {
            if value.is_empty() {
                return Err(Error::Config(format!("paths.{name} is empty")));
            }
        }
        Ok(())
    }

    pub fn frontend_params(&self) -> FrontendParams {
        FrontendParams {
            pre_emphasis: self.frontend.pre_emphasis,
            fft_len: self.frontend.fft_len,
            mel_low_hz: self.frontend.mel_low_hz,
            mel_high_hz: self.frontend.mel_high_hz,
            log_floor: self.frontend.log_floor,
        }
    }

    pub fn variant(&self) -> Result<Variant> {
        Variant::parse(&self.model.variant)
    }

    pub fn net_dims(&self) -> NetDims {
        NetDims {
            channels: self.model.channels,
            fc1: self.model.fc1,
            embedding: self.model.embedding,
        }
    }

    pub fn loss_config(&self) -> Result<LossConfig> {
        let mode = match self.loss.mode.as_str() {
            "ce" => {
                if self.loss.strategy.is_some() {
                    return Err(Error::Config(
                        "loss.strategy is only meaningful with mode = \"coral\"".into(),
                    ));
                }
                LossMode::CeOnly
            }
            "coral" => {
                let name = self.loss.strategy.as_deref().ok_or_else(|| {
                    Error::Config("mode = \"coral\" needs loss.strategy".into())
                })?;
                LossMode::Coral(CoralStrategy::parse(name)?)
            }
            "mtl" => {
                if self.loss.strategy.is_some() {
                    return Err(Error::Config(
                        "loss.strategy is only meaningful with mode = \"coral\"".into(),
                    ));
                }
                LossMode::Mtl
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown loss mode {other:?} (expected ce, coral, or mtl)"
                )));
            }
        };
        let lambda = self.loss.lambda.or(self.lambda_default()).unwrap_or(0.0);
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!("lambda {lambda} must be finite and >= 0")));
        }
        Ok(LossConfig { mode, lambda })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr0: self.train.lr0,
            momentum: self.train.momentum,
            batch: self.train.batch,
            max_epochs: self.train.max_epochs,
            plateau_patience: self.train.plateau_patience,
            plateau_factor: self.train.plateau_factor,
            plateau_min_delta: self.train.plateau_min_delta,
            early_stop_patience: self.train.early_stop_patience,
            seed: self.seed,
        }
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            smoothing: self.detector.smoothing,
            window: self.detector.window,
            threshold: self.detector.threshold,
        }
    }

    pub fn synth_counts(&self) -> SynthCounts {
        SynthCounts {
            train_positives: self.synth.train_positives,
            train_negatives: self.synth.train_negatives,
            test_positives: self.synth.test_positives,
            test_negatives: self.synth.test_negatives,
        }
    }

    /// Joins the path entries onto `base` (the config file's directory,
    /// or the working directory for a default config).
    pub fn resolve_paths(&self, base: &Path) -> ResolvedPaths {
        ResolvedPaths {
            corpus_dir: base.join(&self.paths.corpus_dir),
            feature_dir: base.join(&self.paths.feature_dir),
            checkpoint_dir: base.join(&self.paths.checkpoint_dir),
            report_dir: base.join(&self.paths.report_dir),
            domain_net: self.paths.domain_net.as_ref().map(|p| base.join(p)),
        }
    }
}
