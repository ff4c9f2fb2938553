//! Run configuration: a single TOML file with a section per command.
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::augmentation::{AugmentConfig, QuotaPlan};
use crate::corpus::{Combination, NegativeConfig, SplitRatios, Task};
use crate::evaluator::SignificanceMethod;
use crate::gateway::GatewayConfig;
use crate::taxonomy::GuidelineSchema;
use crate::trainer::{BackendSpec, TrainConfig};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default)]
    pub split: u64,
    #[serde(default)]
    pub negatives: u64,
    #[serde(default)]
    pub train: u64,
    #[serde(default)]
    pub review: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotateSection {
    /// Source notes, one JSON object per line.
    pub notes: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    /// Same target for every category unless overridden in `targets`.
    #[serde(default)]
    pub per_class: Option<usize>,
    /// Per-category targets keyed by class id.
    #[serde(default)]
    pub targets: BTreeMap<String, usize>,
    pub max_requests: usize,
}

impl GenerateSection {
    pub fn quota(&self, schema: &GuidelineSchema) -> anyhow::Result<QuotaPlan> {
        let mut targets: BTreeMap<u8, usize> = match self.per_class {
            Some(n) => schema.ids().map(|id| (id, n)).collect(),
            None => BTreeMap::new(),
        };
        for (key, n) in &self.targets {
            let id: u8 = key
                .trim()
                .parse()
                .with_context(|| format!("quota key {key:?} is not a class id"))?;
            targets.insert(id, *n);
        }
        if targets.is_empty() {
            bail!("[generate] needs per_class or targets");
        }
        Ok(QuotaPlan {
            targets,
            max_requests: self.max_requests,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildSection {
    /// Expert-labeled positive sentences.
    pub gold: PathBuf,
    /// Notes the negatives are drawn from.
    pub negative_pool: PathBuf,
    #[serde(default)]
    pub silver: Option<PathBuf>,
    #[serde(default)]
    pub bronze: Option<PathBuf>,
    #[serde(default)]
    pub ratios: SplitRatios,
    #[serde(default)]
    pub negatives: NegativeConfig,
    /// Replaces the shipped English stop-word list.
    #[serde(default)]
    pub stop_words: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub stage_epochs: BTreeMap<String, usize>,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
    #[serde(default = "default_combinations")]
    pub combinations: Vec<Combination>,
    #[serde(default = "BackendSpec::default_toys")]
    pub backends: Vec<BackendSpec>,
}

fn default_preset() -> String {
    "body".into()
}

fn default_tasks() -> Vec<Task> {
    vec![Task::Binary, Task::Multiclass]
}

fn default_combinations() -> Vec<Combination> {
    Combination::ALL.to_vec()
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            preset: default_preset(),
            epochs: None,
            stage_epochs: BTreeMap::new(),
            tasks: default_tasks(),
            combinations: default_combinations(),
            backends: BackendSpec::default_toys(),
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> anyhow::Result<TrainConfig> {
        let mut config = TrainConfig::preset(&self.preset)?;
        if let Some(epochs) = self.epochs {
            config.epochs = epochs;
        }
        config.stage_epochs = self.stage_epochs.clone();
        config.seed = seed;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    #[serde(default)]
    pub significance: SignificanceMethod,
    /// Render from stored metric values (JSON) instead of trained cells.
    #[serde(default)]
    pub values: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewSection {
    /// Labeled sentences to sample from.
    pub dataset: PathBuf,
    #[serde(default = "default_review_size")]
    pub size: usize,
}

fn default_review_size() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Annotation guideline; the shipped one when absent.
    #[serde(default)]
    pub guideline: Option<PathBuf>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub gateway: Option<GatewayConfig>,
    #[serde(default)]
    pub augment: Option<AugmentConfig>,
    #[serde(default)]
    pub annotate: Option<AnnotateSection>,
    #[serde(default)]
    pub generate: Option<GenerateSection>,
    #[serde(default)]
    pub build: Option<BuildSection>,
    #[serde(default)]
    pub train: Option<TrainSection>,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default)]
    pub review: Option<ReviewSection>,
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> anyhow::Result<Self> {
        let mut config: RunConfig = toml::from_str(text).context("invalid run configuration")?;
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.output_dir);
        if let Some(p) = &mut self.guideline {
            resolve(base, p);
        }
        if let Some(dir) = self.gateway.as_mut().and_then(|g| g.transcript_dir.as_mut()) {
            resolve(base, dir);
        }
        if let Some(a) = &mut self.annotate {
            resolve(base, &mut a.notes);
        }
        if let Some(b) = &mut self.build {
            resolve(base, &mut b.gold);
            resolve(base, &mut b.negative_pool);
            for p in [&mut b.silver, &mut b.bronze, &mut b.stop_words].into_iter().flatten() {
                resolve(base, p);
            }
        }
        if let Some(p) = &mut self.report.values {
            resolve(base, p);
        }
        if let Some(r) = &mut self.review {
            resolve(base, &mut r.dataset);
        }
    }

    pub fn section<'a, T>(&self, section: &'a Option<T>, name: &str) -> anyhow::Result<&'a T> {
        section
            .as_ref()
            .with_context(|| format!("config has no [{name}] section"))
    }
}

/// Fails with a config error naming the first missing path.
pub fn require_paths<'a>(paths: impl IntoIterator<Item = &'a Path>) -> anyhow::Result<()> {
    for p in paths {
        if !p.exists() {
            bail!("configured path does not exist: {}", p.display());
        }
    }
    Ok(())
}
