//! Run configuration: TOML file, then `KGIC_BACKEND`, then flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use kgic_core::backend::{BackendConfig, Transport, BACKEND_ENV};
use kgic_core::genlp::{FieldMask, DEFAULT_BEAM_WIDTH};
use kgic_core::ingest::{DatasetConfig, SplitRatios};
use kgic_core::kge::{CorruptionMode, KgeConfig, ModelKind};
use kgic_core::pipeline::{StageOneMethod, StageOneOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageTwoMethod {
    Transe,
    Rotate,
    GenerativeLocalMock,
    GenerativeRemote,
}

impl StageTwoMethod {
    pub fn kge_model(self) -> Option<ModelKind> {
        match self {
            StageTwoMethod::Transe => Some(ModelKind::TransE),
            StageTwoMethod::Rotate => Some(ModelKind::RotatE),
            _ => None,
        }
    }
}

impl fmt::Display for StageTwoMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageTwoMethod::Transe => "transe",
            StageTwoMethod::Rotate => "rotate",
            StageTwoMethod::GenerativeLocalMock => "generative-local-mock",
            StageTwoMethod::GenerativeRemote => "generative-remote",
        })
    }
}

impl FromStr for StageTwoMethod {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "transe" => StageTwoMethod::Transe,
            "rotate" => StageTwoMethod::Rotate,
            "generative-local-mock" => StageTwoMethod::GenerativeLocalMock,
            "generative-remote" => StageTwoMethod::GenerativeRemote,
            _ => bail!("unknown stage-two method `{s}` (transe, rotate, generative-local-mock, generative-remote)"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Triple files, concatenated in order.
    pub triples: Vec<PathBuf>,
    pub metadata: Option<PathBuf>,
    /// Relation whose tails become leading entity types.
    pub type_relation: Option<String>,
    pub split: [f64; 3],
}

impl Default for DatasetSection {
    fn default() -> Self {
        let r = SplitRatios::default();
        Self {
            triples: Vec::new(),
            metadata: None,
            type_relation: None,
            split: [r.train, r.valid, r.test],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageOneSection {
    pub method: StageOneMethod,
    /// Fixed selection threshold; tuned on the validation part when unset.
    pub threshold: Option<f64>,
    pub k: usize,
    pub alpha: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub max_features: Option<usize>,
}

impl Default for StageOneSection {
    fn default() -> Self {
        let d = StageOneOptions::default();
        Self {
            method: StageOneMethod::Recoin,
            threshold: None,
            k: d.k,
            alpha: d.alpha,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            max_features: d.max_features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageTwoSection {
    pub method: StageTwoMethod,
    pub k_max: usize,
    pub beam_width: usize,
    /// Decoding length limit in tokens; longest label + 1 when unset.
    pub max_len: Option<usize>,
    /// Skip tails already known from train and valid for the same pair.
    pub exclude_known: bool,
}

impl Default for StageTwoSection {
    fn default() -> Self {
        Self {
            method: StageTwoMethod::Transe,
            k_max: 10,
            beam_width: DEFAULT_BEAM_WIDTH,
            max_len: None,
            exclude_known: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KgeSection {
    pub dim: usize,
    pub norm: u8,
    /// Model default (5 for TransE, 12 for RotatE) when unset.
    pub margin: Option<f64>,
    pub adversarial_temperature: f64,
    pub negatives: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub corruption: CorruptionMode,
    pub filter_negatives: bool,
}

impl Default for KgeSection {
    fn default() -> Self {
        let d = KgeConfig::new(ModelKind::TransE);
        Self {
            dim: d.dim,
            norm: d.norm,
            margin: None,
            adversarial_temperature: d.adversarial_temperature,
            negatives: d.negatives,
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            corruption: d.corruption,
            filter_negatives: d.filter_negatives,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    /// `tcp:HOST:PORT` or `stdio:PROGRAM ARGS...`.
    pub transport: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            transport: None,
            timeout_secs: 30.0,
            max_retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub jobs: usize,
    pub dataset: DatasetSection,
    pub stage_one: StageOneSection,
    pub stage_two: StageTwoSection,
    pub kge: KgeSection,
    pub backend: BackendSection,
    pub mask: FieldMask,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("kgic-out"),
            jobs: 1,
            dataset: DatasetSection::default(),
            stage_one: StageOneSection::default(),
            stage_two: StageTwoSection::default(),
            kge: KgeSection::default(),
            backend: BackendSection::default(),
            mask: FieldMask::NONE,
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Parses a TOML file; relative paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in &mut cfg.dataset.triples {
            rebase(base, p);
        }
        if let Some(p) = &mut cfg.dataset.metadata {
            rebase(base, p);
        }
        rebase(base, &mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var(BACKEND_ENV) {
            if !v.trim().is_empty() {
                self.backend.transport = Some(v.trim().to_owned());
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.triples.is_empty() {
            bail!("no triple files given (dataset.triples or --triples)");
        }
        self.split_ratios()?;
        if self.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        if let Some(t) = self.stage_one.threshold {
            if !(0.0..=1.0).contains(&t) {
                bail!("threshold {t} outside [0, 1]");
            }
        }
        if self.stage_two.k_max == 0 || self.stage_two.beam_width == 0 {
            bail!("k_max and beam_width must be at least 1");
        }
        if self.stage_two.max_len == Some(0) {
            bail!("max_len must be at least 1");
        }
        self.kge_config(ModelKind::TransE).validate()?;
        if self.kge.dim % 2 == 0 {
            self.kge_config(ModelKind::RotatE).validate()?;
        }
        if !(self.backend.timeout_secs > 0.0 && self.backend.timeout_secs.is_finite()) {
            bail!("backend timeout must be positive");
        }
        if let Some(t) = &self.backend.transport {
            t.parse::<Transport>()?;
        }
        let needs_backend = self.stage_one.method == StageOneMethod::Remote
            || self.stage_two.method == StageTwoMethod::GenerativeRemote;
        if needs_backend && self.backend.transport.is_none() {
            bail!("remote methods need backend.transport, --backend or {BACKEND_ENV}");
        }
        Ok(())
    }

    pub fn split_ratios(&self) -> Result<SplitRatios> {
        let [a, b, c] = self.dataset.split;
        Ok(SplitRatios::new(a, b, c)?)
    }

    pub fn dataset_config(&self) -> Result<DatasetConfig> {
        Ok(DatasetConfig {
            triples_paths: self.dataset.triples.clone(),
            metadata_path: self.dataset.metadata.clone(),
            type_relation: self.dataset.type_relation.clone(),
            split_ratios: self.split_ratios()?,
            seed: self.seed,
        })
    }

    pub fn kge_config(&self, model: ModelKind) -> KgeConfig {
        let base = KgeConfig::new(model);
        let k = &self.kge;
        KgeConfig {
            model,
            dim: k.dim,
            norm: k.norm,
            margin: k.margin.unwrap_or(base.margin),
            adversarial_temperature: k.adversarial_temperature,
            negatives: k.negatives,
            epochs: k.epochs,
            batch_size: k.batch_size,
            learning_rate: k.learning_rate,
            seed: self.seed,
            corruption: k.corruption,
            filter_negatives: k.filter_negatives,
        }
    }

    pub fn stage_one_options(&self, mask: FieldMask) -> StageOneOptions {
        let s = &self.stage_one;
        StageOneOptions {
            k: s.k,
            alpha: s.alpha,
            epochs: s.epochs,
            learning_rate: s.learning_rate,
            max_features: s.max_features,
            seed: self.seed,
            mask,
        }
    }

    pub fn backend_config(&self) -> Result<BackendConfig> {
        let spec = self
            .backend
            .transport
            .as_deref()
            .with_context(|| format!("no backend transport configured (set {BACKEND_ENV} or --backend)"))?;
        Ok(BackendConfig {
            transport: spec.parse()?,
            timeout: Duration::from_secs_f64(self.backend.timeout_secs),
            max_retries: self.backend.max_retries,
        })
    }
}
