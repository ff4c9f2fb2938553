//! Dataset construction: normalization, deduplication, stratified splits,
//! negative sampling, descriptive statistics and training-stage assembly.

mod negatives;
mod split;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::Table;
use crate::taxonomy::GuidelineSchema;
use crate::text;

pub use negatives::{is_table_like, sample_negatives, NegativeConfig, StopWords, DEFAULT_STOPWORDS};
pub use split::{split, DatasetSplit, SplitRatios};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("input set is empty")]
    EmptyInput,
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    InvalidRatios([f64; 3]),
    #[error("only {eligible} eligible negative sentences, {required} required")]
    InsufficientPool { eligible: usize, required: usize },
    #[error("combination needs the {0} tier, which was not provided")]
    MissingTier(&'static str),
    #[error("invalid labeled sentence: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Gold,
    Silver,
    Bronze,
    Negative,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Gold => "gold",
            Tier::Silver => "silver",
            Tier::Bronze => "bronze",
            Tier::Negative => "negative",
        }
    }
}

/// Where a sentence came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note_id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub request_tags: Vec<String>,
    /// Pipeline stages the sentence passed, e.g. `annotate`, `verify`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Generated note the sentence was extracted from (bronze only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub text: String,
    /// 0 for negatives, otherwise a schema category id.
    pub class_id: u8,
    pub tier: Tier,
    #[serde(default)]
    pub provenance: Provenance,
}

impl LabeledSentence {
    pub fn new(text: impl Into<String>, class_id: u8, tier: Tier, provenance: Provenance) -> Result<Self, CorpusError> {
        let s = LabeledSentence {
            text: text.into(),
            class_id,
            tier,
            provenance,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.text.trim().is_empty() {
            return Err(CorpusError::Invalid("text is empty".into()));
        }
        if (self.class_id == 0) != (self.tier == Tier::Negative) {
            return Err(CorpusError::Invalid(format!(
                "class_id {} is inconsistent with tier {}",
                self.class_id,
                self.tier.as_str()
            )));
        }
        Ok(())
    }

    pub fn normalized(&self) -> String {
        normalize(&self.text)
    }
}

/// Lowercases and collapses whitespace.
pub fn normalize(text: &str) -> String {
    text::collapse_whitespace(&text.to_lowercase())
}

pub fn token_count(text: &str) -> usize {
    text::tokens(text).len()
}

/// The classification task a dataset is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Multiclass,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::Multiclass => "multiclass",
        }
    }

    pub fn num_classes(self, schema: &GuidelineSchema) -> usize {
        match self {
            Task::Binary => 2,
            Task::Multiclass => schema.len(),
        }
    }

    /// Dense label index: binary 0/1, multiclass `class_id - 1`.
    pub fn label_index(self, class_id: u8) -> usize {
        match self {
            Task::Binary => usize::from(class_id > 0),
            Task::Multiclass => usize::from(class_id).saturating_sub(1),
        }
    }

    /// Inverse of [`Task::label_index`].
    pub fn class_id(self, index: usize) -> u8 {
        match self {
            Task::Binary => index as u8,
            Task::Multiclass => index as u8 + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupConflict {
    pub normalized_text: String,
    pub kept_class: u8,
    pub dropped_class: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DedupOutcome {
    pub items: Vec<LabeledSentence>,
    pub duplicates: usize,
    pub conflicts: Vec<DedupConflict>,
}

/// Keeps the first item per normalized text. Class disagreements are
/// reported and resolved in favour of the first occurrence.
pub fn deduplicate(items: Vec<LabeledSentence>) -> DedupOutcome {
    let mut seen: HashMap<String, u8> = HashMap::with_capacity(items.len());
    let mut out = DedupOutcome::default();
    for item in items {
        let key = item.normalized();
        match seen.get(&key) {
            Some(&kept) => {
                out.duplicates += 1;
                if kept != item.class_id {
                    log::warn!(
                        "conflicting labels {kept} and {} for {key:?}; keeping {kept}",
                        item.class_id
                    );
                    out.conflicts.push(DedupConflict {
                        normalized_text: key,
                        kept_class: kept,
                        dropped_class: item.class_id,
                    });
                }
            }
            None => {
                seen.insert(key, item.class_id);
                out.items.push(item);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub counts: BTreeMap<u8, usize>,
    pub total: usize,
    pub mean_length: f64,
    pub sd_length: f64,
    pub empty: bool,
}

impl DatasetStats {
    pub fn length_summary(&self) -> String {
        format!("{:.2} +/- {:.2}", self.mean_length, self.sd_length)
    }
}

/// Per-category counts and token length mean with sample standard deviation.
pub fn stats(items: &[LabeledSentence]) -> DatasetStats {
    let mut counts = BTreeMap::new();
    for item in items {
        *counts.entry(item.class_id).or_insert(0) += 1;
    }
    let n = items.len();
    if n == 0 {
        return DatasetStats {
            counts,
            total: 0,
            mean_length: 0.0,
            sd_length: 0.0,
            empty: true,
        };
    }
    let lengths: Vec<f64> = items.iter().map(|i| token_count(&i.text) as f64).collect();
    let mean = lengths.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    DatasetStats {
        counts,
        total: n,
        mean_length: mean,
        sd_length: sd,
        empty: false,
    }
}

pub const STATS_LENGTH_ROW: &str = "Avg length +/- SD (tokens)";

/// Category distribution table: one row per category (plus negatives when
/// any column has them), then `Total` and the length summary row.
pub fn stats_table(columns: &[(&str, &DatasetStats)], schema: &GuidelineSchema) -> Table {
    let mut header = vec!["Category".to_string()];
    header.extend(columns.iter().map(|(name, _)| name.to_string()));
    let mut table = Table::new(header);
    let count = |s: &DatasetStats, id: u8| s.counts.get(&id).copied().unwrap_or(0).to_string();
    for category in schema.categories() {
        let mut row = vec![category.display_label().to_string()];
        row.extend(columns.iter().map(|(_, s)| count(s, category.id)));
        table.push_row(row);
    }
    if columns.iter().any(|(_, s)| s.counts.contains_key(&0)) {
        let mut row = vec!["Negative".to_string()];
        row.extend(columns.iter().map(|(_, s)| count(s, 0)));
        table.push_row(row);
    }
    let mut total = vec!["Total".to_string()];
    total.extend(columns.iter().map(|(_, s)| s.total.to_string()));
    table.push_row(total);
    let mut length = vec![STATS_LENGTH_ROW.to_string()];
    length.extend(columns.iter().map(|(_, s)| s.length_summary()));
    table.push_row(length);
    table
}

/// Which synthetic tiers precede the final gold fine-tuning stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Combination {
    #[serde(rename = "G")]
    Gold,
    #[serde(rename = "G+B")]
    GoldBronze,
    #[serde(rename = "G+S")]
    GoldSilver,
    #[serde(rename = "G+B+S")]
    GoldBronzeSilver,
}

impl Combination {
    pub const ALL: [Combination; 4] = [
        Combination::Gold,
        Combination::GoldBronze,
        Combination::GoldSilver,
        Combination::GoldBronzeSilver,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Combination::Gold => "G",
            Combination::GoldBronze => "G+B",
            Combination::GoldSilver => "G+S",
            Combination::GoldBronzeSilver => "G+B+S",
        }
    }

    pub fn column_title(self) -> &'static str {
        match self {
            Combination::Gold => "Gold Only",
            Combination::GoldBronze => "+ Bronze",
            Combination::GoldSilver => "+ Silver",
            Combination::GoldBronzeSilver => "+ Bronze + Silver",
        }
    }

    /// File-name friendly form.
    pub fn slug(self) -> &'static str {
        match self {
            Combination::Gold => "g",
            Combination::GoldBronze => "g_b",
            Combination::GoldSilver => "g_s",
            Combination::GoldBronzeSilver => "g_b_s",
        }
    }

    pub fn expected_stage_log(self) -> Vec<&'static str> {
        match self {
            Combination::Gold => vec!["gold"],
            Combination::GoldBronze => vec!["bronze", "gold"],
            Combination::GoldSilver => vec!["silver", "gold"],
            Combination::GoldBronzeSilver => vec!["bronze+silver", "gold"],
        }
    }
}

impl std::str::FromStr for Combination {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Combination::ALL
            .into_iter()
            .find(|c| c.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown combination {s:?}"))
    }
}

/// Tier datasets available for assembling training stages. For the binary
/// task the gold split carries negatives alongside the positives.
#[derive(Debug, Clone)]
pub struct TierData {
    pub gold: DatasetSplit,
    pub silver: Option<Vec<LabeledSentence>>,
    pub bronze: Option<Vec<LabeledSentence>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingStage {
    pub name: String,
    pub is_gold: bool,
    pub items: Vec<LabeledSentence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagedTraining {
    pub combination: Combination,
    pub task: Task,
    pub stages: Vec<TrainingStage>,
    pub validation: Vec<LabeledSentence>,
    pub test: Vec<LabeledSentence>,
}

/// Orders training data as `[synthetic, gold]` (or `[gold]`). Validation and
/// test always come from the gold split. For the binary task the synthetic
/// stage is topped up with the gold training negatives, since synthetic
/// tiers only hold positives.
pub fn combine(tiers: &TierData, combination: Combination, task: Task) -> Result<StagedTraining, CorpusError> {
    let bronze = || tiers.bronze.as_ref().ok_or(CorpusError::MissingTier("bronze"));
    let silver = || tiers.silver.as_ref().ok_or(CorpusError::MissingTier("silver"));
    let synthetic: Option<(&str, Vec<LabeledSentence>)> = match combination {
        Combination::Gold => None,
        Combination::GoldBronze => Some(("bronze", bronze()?.clone())),
        Combination::GoldSilver => Some(("silver", silver()?.clone())),
        Combination::GoldBronzeSilver => {
            let mut union = bronze()?.clone();
            union.extend(silver()?.iter().cloned());
            Some(("bronze+silver", deduplicate(union).items))
        }
    };

    let gold_train: Vec<LabeledSentence> = match task {
        Task::Binary => tiers.gold.train.clone(),
        Task::Multiclass => tiers.gold.train.iter().filter(|s| s.class_id > 0).cloned().collect(),
    };
    let keep = |items: &[LabeledSentence]| -> Vec<LabeledSentence> {
        match task {
            Task::Binary => items.to_vec(),
            Task::Multiclass => items.iter().filter(|s| s.class_id > 0).cloned().collect(),
        }
    };

    let mut stages = Vec::new();
    if let Some((name, mut items)) = synthetic {
        if task == Task::Binary {
            items.extend(gold_train.iter().filter(|s| s.class_id == 0).cloned());
        }
        stages.push(TrainingStage {
            name: name.to_string(),
            is_gold: false,
            items,
        });
    }
    stages.push(TrainingStage {
        name: "gold".to_string(),
        is_gold: true,
        items: gold_train,
    });
    Ok(StagedTraining {
        combination,
        task,
        stages,
        validation: keep(&tiers.gold.validation),
        test: keep(&tiers.gold.test),
    })
}
