use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{round_half_up, EvalError};
use crate::corpus::{LabeledSentence, Tier};
use crate::jsonl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorType {
    OverInference,
    NegationMiss,
    Other,
}

/// One sheet row. Reviewers fill `correct`, and `error_type` for incorrect
/// items; `comment` is free text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item: usize,
    pub sentence: String,
    pub class_id: u8,
    pub tier: Tier,
    pub correct: Option<bool>,
    pub error_type: Option<ErrorType>,
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewSheet {
    pub seed: u64,
    pub items: Vec<ReviewItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSummary {
    pub reviewed: usize,
    pub correct: usize,
    /// Fraction correct, two decimals.
    pub accuracy: f64,
    pub errors: BTreeMap<ErrorType, usize>,
}

/// Uniform sample of `n` items without replacement, kept in dataset order.
pub fn sample_for_review(dataset: &[LabeledSentence], n: usize, seed: u64) -> Result<ReviewSheet, EvalError> {
    if n > dataset.len() {
        return Err(EvalError::InsufficientData {
            requested: n,
            available: dataset.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, dataset.len(), n).into_vec();
    picked.sort_unstable();
    let items = picked
        .into_iter()
        .enumerate()
        .map(|(item, i)| ReviewItem {
            item,
            sentence: dataset[i].text.clone(),
            class_id: dataset[i].class_id,
            tier: dataset[i].tier,
            correct: None,
            error_type: None,
            comment: None,
        })
        .collect();
    Ok(ReviewSheet { seed, items })
}

pub fn review_accuracy(sheet: &ReviewSheet) -> Result<ReviewSummary, EvalError> {
    let mut correct = 0;
    let mut errors = BTreeMap::new();
    for item in &sheet.items {
        match (item.correct, item.error_type) {
            (None, _) | (Some(false), None) => return Err(EvalError::IncompleteSheet(item.item.to_string())),
            (Some(true), _) => correct += 1,
            (Some(false), Some(kind)) => *errors.entry(kind).or_insert(0) += 1,
        }
    }
    let reviewed = sheet.items.len();
    let accuracy = if reviewed == 0 {
        0.0
    } else {
        round_half_up(correct as f64 / reviewed as f64, 2)
    };
    Ok(ReviewSummary {
        reviewed,
        correct,
        accuracy,
        errors,
    })
}

/// Writes the sheet as JSON lines: a `{"seed": ..}` header line, then one
/// item per line.
pub fn write_sheet(path: &Path, sheet: &ReviewSheet) -> std::io::Result<()> {
    let header = serde_json::json!({ "seed": sheet.seed });
    let mut out = serde_json::to_string(&header)? + "\n";
    out.push_str(&jsonl::to_jsonl(&sheet.items));
    std::fs::write(path, out)
}

pub fn read_sheet(path: &Path) -> anyhow::Result<ReviewSheet> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: serde_json::Value = serde_json::from_str(lines.next().unwrap_or("{}"))?;
    let seed = header.get("seed").and_then(serde_json::Value::as_u64).unwrap_or(0);
    let items = lines
        .map(serde_json::from_str)
        .collect::<Result<Vec<ReviewItem>, _>>()?;
    Ok(ReviewSheet { seed, items })
}
