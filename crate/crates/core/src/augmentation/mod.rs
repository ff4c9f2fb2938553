//! The two synthesis pipelines.
//!
//! * Silver (data-to-label): annotate supplied notes with the guideline, then
//!   ask the model to check each annotation and keep only confirmed ones.
//! * Bronze (label-to-data): have the model write annotated notes from the
//!   guideline alone until per-category quotas are filled.
//!
//! Both pipelines are pure functions of their inputs and the gateway's
//! transcript store, so replayed runs produce identical output.

mod bronze;
mod phi;
mod segment;
mod silver;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;
use crate::prompt::{ParseReport, PromptError, PromptOptions};

pub use bronze::{run_bronze, QuotaPlan};
pub use phi::{PhiConfig, PhiScreen};
pub use segment::segment_text;
pub use silver::{annotate_notes, chunk_note, run_silver, verify_annotations};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceNote {
    pub note_id: String,
    pub text: String,
    #[serde(default)]
    pub origin: String,
}

pub fn segment_sentences(note: &SourceNote) -> Vec<&str> {
    segment_text(&note.text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Annotate,
    Verify,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub note_id: String,
    /// Index of the note chunk the sentence was annotated in.
    pub chunk: usize,
    pub sentence: String,
    pub class_id: u8,
    pub verified: Option<bool>,
    pub reason: Option<String>,
    pub source_stage: Stage,
    pub request_tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub model_id: String,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub annotate_temperature: f64,
    #[serde(default = "default_generate_temperature")]
    pub generate_temperature: f64,
    /// Notes longer than this many words are annotated in sentence-aligned
    /// chunks.
    #[serde(default = "default_chunk_words")]
    pub chunk_words: usize,
    /// Generation requests issued per bronze iteration.
    #[serde(default = "default_generation_batch")]
    pub generation_batch: usize,
    #[serde(default)]
    pub prompt: PromptOptions,
    #[serde(default)]
    pub phi: PhiConfig,
}

fn default_max_output_tokens() -> u32 {
    2048
}

fn default_generate_temperature() -> f64 {
    0.7
}

fn default_chunk_words() -> usize {
    1500
}

fn default_generation_batch() -> usize {
    1
}

impl AugmentConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        AugmentConfig {
            model_id: model_id.into(),
            max_output_tokens: default_max_output_tokens(),
            annotate_temperature: 0.0,
            generate_temperature: default_generate_temperature(),
            chunk_words: default_chunk_words(),
            generation_batch: default_generation_batch(),
            prompt: PromptOptions::default(),
            phi: PhiConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub request_tag: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestReport {
    pub request_tag: String,
    #[serde(flatten)]
    pub report: ParseReport,
}

/// Counters for one pipeline run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub notes: usize,
    pub requests: usize,
    pub annotated: usize,
    pub verified_true: usize,
    pub verified_false: usize,
    pub unreconciled: usize,
    /// Records dropped because their note's verification output was unusable.
    pub verify_dropped: usize,
    pub parse_skips: usize,
    pub gateway_failures: usize,
    pub rejected_items: usize,
    pub unanchored: usize,
    pub duplicates: usize,
    pub overflow: usize,
    pub phi_drops: usize,
    pub accepted: usize,
    /// Remaining per-category deficit when the bronze loop ran out of
    /// requests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quota_unmet: Option<BTreeMap<u8, usize>>,
    pub skipped: Vec<SkipRecord>,
    pub parse_reports: Vec<RequestReport>,
}

impl RunReport {
    /// The quota shortfall as an error, if the bronze loop left one.
    pub fn quota_error(&self) -> Option<AugmentError> {
        self.quota_unmet.clone().map(AugmentError::QuotaUnmet)
    }

    fn record_parse(&mut self, tag: &str, report: &ParseReport) {
        self.rejected_items += report.rejected.len();
        self.unanchored += report.unanchored;
        self.parse_reports.push(RequestReport {
            request_tag: tag.to_string(),
            report: report.clone(),
        });
    }

    fn skip(&mut self, tag: &str, reason: impl std::fmt::Display) {
        let reason = reason.to_string();
        log::warn!("skipping {tag}: {reason}");
        self.skipped.push(SkipRecord {
            request_tag: tag.to_string(),
            reason,
        });
    }
}

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid quota plan: {0}")]
    InvalidQuota(String),
    #[error("request budget exhausted with quotas unmet: {0:?}")]
    QuotaUnmet(BTreeMap<u8, usize>),
}

/// Maps `f` over `items` on up to `workers` threads, returning results in
/// input order.
pub(crate) fn run_concurrently<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|p| p.into_inner())
        .into_iter()
        .map(|r| r.expect("every slot is filled"))
        .collect()
}
