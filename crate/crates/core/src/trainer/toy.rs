//! Dependency-free reference backend: class-conditional token frequency
//! scoring with additive smoothing (multinomial naive Bayes).
//!
//! The first epoch of every stage adds the stage's counts. Later epochs
//! revisit the stage in a seeded order and add counts only for examples the
//! model currently gets wrong, so validation accuracy moves between epochs.
//! Optimizer settings in [`TrainConfig`] do not apply to this backend.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifierBackend, EpochContext, Example, MemberModel, TrainConfig, TrainError};
use crate::text;

const PREFIX_LEN: usize = 4;
const SMOOTHING: f64 = 1.0;
const MAX_SEQUENCE_LENGTH: usize = 512;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    #[default]
    Unigram,
    /// Unigrams plus adjacent word pairs.
    Bigram,
    /// Word prefixes of up to four characters.
    Prefix,
}

#[derive(Debug, Clone)]
pub struct ToyBackend {
    id: String,
    features: FeatureKind,
}

impl ToyBackend {
    pub fn new(id: impl Into<String>, features: FeatureKind) -> Self {
        ToyBackend {
            id: id.into(),
            features,
        }
    }
}

impl ClassifierBackend for ToyBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn max_sequence_length(&self) -> usize {
        MAX_SEQUENCE_LENGTH
    }

    fn init(&self, num_classes: usize, _seed: u64) -> Result<Box<dyn MemberModel>, TrainError> {
        if num_classes < 2 {
            return Err(TrainError::Config(format!("{}: need at least 2 classes", self.id)));
        }
        Ok(Box::new(ToyModel {
            features: self.features,
            state: ToyState {
                counts: BTreeMap::new(),
                class_totals: vec![0.0; num_classes],
                class_docs: vec![0.0; num_classes],
            },
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ToyState {
    counts: BTreeMap<String, Vec<f64>>,
    class_totals: Vec<f64>,
    class_docs: Vec<f64>,
}

struct ToyModel {
    features: FeatureKind,
    state: ToyState,
}

fn features(kind: FeatureKind, text: &str) -> Vec<String> {
    let words: Vec<String> = text::tokens(text)
        .into_iter()
        .filter(|t| text::is_word(t))
        .take(MAX_SEQUENCE_LENGTH)
        .map(str::to_lowercase)
        .collect();
    match kind {
        FeatureKind::Unigram => words,
        FeatureKind::Bigram => {
            let pairs: Vec<String> = words.windows(2).map(|w| format!("{} {}", w[0], w[1])).collect();
            words.into_iter().chain(pairs).collect()
        }
        FeatureKind::Prefix => words
            .into_iter()
            .map(|w| w.chars().take(PREFIX_LEN).collect())
            .collect(),
    }
}

impl ToyModel {
    fn num_classes(&self) -> usize {
        self.state.class_totals.len()
    }

    fn add(&mut self, feats: &[String], label: usize) {
        let k = self.num_classes();
        for f in feats {
            self.state.counts.entry(f.clone()).or_insert_with(|| vec![0.0; k])[label] += 1.0;
        }
        self.state.class_totals[label] += feats.len() as f64;
        self.state.class_docs[label] += 1.0;
    }

    fn classify(&self, feats: &[String]) -> usize {
        let k = self.num_classes();
        let vocab = self.state.counts.len().max(1) as f64;
        let docs: f64 = self.state.class_docs.iter().sum();
        let mut best = (0, f64::NEG_INFINITY);
        for c in 0..k {
            let mut score = ((self.state.class_docs[c] + 1.0) / (docs + k as f64)).ln();
            let denom = self.state.class_totals[c] + SMOOTHING * vocab;
            for f in feats {
                if let Some(row) = self.state.counts.get(f) {
                    score += ((row[c] + SMOOTHING) / denom).ln();
                }
            }
            if score > best.1 {
                best = (c, score);
            }
        }
        best.0
    }
}

impl MemberModel for ToyModel {
    fn train_epoch(
        &mut self,
        examples: &[Example],
        ctx: EpochContext,
        _config: &TrainConfig,
    ) -> Result<(), TrainError> {
        let k = self.num_classes();
        if let Some(bad) = examples.iter().find(|e| e.label >= k) {
            return Err(TrainError::BackendFailure {
                backend: "toy".into(),
                message: format!("label {} out of range for {k} classes", bad.label),
            });
        }
        let featurized: Vec<(Vec<String>, usize)> = examples
            .iter()
            .map(|e| (features(self.features, &e.text), e.label))
            .collect();
        if ctx.epoch == 0 {
            for (f, label) in &featurized {
                self.add(f, *label);
            }
            return Ok(());
        }
        let mut order: Vec<usize> = (0..featurized.len()).collect();
        let stream = ((ctx.stage_index as u64) << 32) | ctx.epoch as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        for i in order {
            let (f, label) = &featurized[i];
            if self.classify(f) != *label {
                self.add(f, *label);
            }
        }
        Ok(())
    }

    fn predict(&self, texts: &[&str]) -> Result<Vec<usize>, TrainError> {
        Ok(texts
            .iter()
            .map(|t| self.classify(&features(self.features, t)))
            .collect())
    }

    fn checkpoint(&self) -> serde_json::Value {
        serde_json::to_value(&self.state).expect("toy state serializes")
    }

    fn restore(&mut self, state: &serde_json::Value) -> Result<(), TrainError> {
        let state: ToyState = serde_json::from_value(state.clone())?;
        if state.class_totals.len() != self.num_classes() {
            return Err(TrainError::BackendFailure {
                backend: "toy".into(),
                message: "checkpoint class count does not match".into(),
            });
        }
        self.state = state;
        Ok(())
    }
}
