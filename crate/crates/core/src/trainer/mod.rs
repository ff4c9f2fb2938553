//! Staged fine-tuning of pluggable classifier backends and majority-vote
//! ensembling.

mod checkpoint;
mod command;
mod toy;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Combination, LabeledSentence, StagedTraining, Task, TrainingStage};
use crate::taxonomy::GuidelineSchema;

pub use checkpoint::{load_ensemble, save_ensemble, MemberMetadata};
pub use command::CommandBackend;
pub use toy::{FeatureKind, ToyBackend};

pub const ENSEMBLE_SIZE: usize = 3;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training stages")]
    NoStages,
    #[error("training stage {0:?} is empty")]
    EmptyStage(String),
    #[error("the final training stage must be gold, got {0:?}")]
    LastStageNotGold(String),
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("backend {backend} failed: {message}")]
    BackendFailure { backend: String, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub warmup_steps: u32,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-6,
            warmup_steps: 200,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub seed: u64,
    /// Per-stage epoch overrides keyed by stage name.
    #[serde(default)]
    pub stage_epochs: BTreeMap<String, usize>,
}

impl TrainConfig {
    /// Learning rate 1e-4, batch size 32.
    pub fn body() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 1e-4,
            batch_size: 32,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            stage_epochs: BTreeMap::new(),
        }
    }

    /// Learning rate 1e-3; batch size kept at 32.
    pub fn appendix() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            ..Self::body()
        }
    }

    pub fn preset(name: &str) -> Result<Self, TrainError> {
        match name {
            "body" => Ok(Self::body()),
            "appendix" => Ok(Self::appendix()),
            other => Err(TrainError::Config(format!("unknown training preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.stage_epochs.values().any(|e| *e == 0) {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn epochs_for(&self, stage: &str) -> usize {
        self.stage_epochs.get(stage).copied().unwrap_or(self.epochs)
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::body()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub num_classes: usize,
    pub max_sequence_length: usize,
}

/// One training example with a dense label index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub text: String,
    pub label: usize,
}

/// Where an epoch sits in the staged schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochContext {
    pub stage_index: usize,
    /// Zero-based epoch within the stage.
    pub epoch: usize,
    pub seed: u64,
}

/// A trainable model instance owned by a single training job.
pub trait MemberModel: Send + Sync {
    fn train_epoch(&mut self, examples: &[Example], ctx: EpochContext, config: &TrainConfig) -> Result<(), TrainError>;
    fn predict(&self, texts: &[&str]) -> Result<Vec<usize>, TrainError>;
    fn checkpoint(&self) -> serde_json::Value;
    fn restore(&mut self, state: &serde_json::Value) -> Result<(), TrainError>;
}

/// Factory for member models. Implementations are configuration (toy,
/// external command), not hard-wired encoders.
pub trait ClassifierBackend: Send + Sync {
    fn backend_id(&self) -> &str;
    fn max_sequence_length(&self) -> usize {
        512
    }
    fn init(&self, num_classes: usize, seed: u64) -> Result<Box<dyn MemberModel>, TrainError>;
}

/// Backend selection as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Toy {
        id: String,
        #[serde(default)]
        features: FeatureKind,
    },
    Command {
        id: String,
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
}

impl BackendSpec {
    pub fn id(&self) -> &str {
        match self {
            BackendSpec::Toy { id, .. } | BackendSpec::Command { id, .. } => id,
        }
    }

    pub fn build(&self) -> Arc<dyn ClassifierBackend> {
        match self {
            BackendSpec::Toy { id, features } => Arc::new(ToyBackend::new(id.clone(), *features)),
            BackendSpec::Command { id, program, args } => {
                Arc::new(CommandBackend::new(id.clone(), program.clone(), args.clone()))
            }
        }
    }

    /// Three toy backends with different feature sets.
    pub fn default_toys() -> Vec<BackendSpec> {
        [
            ("toy-unigram", FeatureKind::Unigram),
            ("toy-bigram", FeatureKind::Bigram),
            ("toy-prefix", FeatureKind::Prefix),
        ]
        .into_iter()
        .map(|(id, features)| BackendSpec::Toy {
            id: id.into(),
            features,
        })
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: String,
    pub epoch: usize,
    pub validation_accuracy: Option<f64>,
}

pub struct TrainedMember {
    pub backend_id: String,
    pub stage_log: Vec<String>,
    /// Zero-based gold-stage epoch of the selected checkpoint.
    pub best_epoch: usize,
    pub validation_accuracy: f64,
    pub history: Vec<EpochRecord>,
    pub model: Box<dyn MemberModel>,
}

impl std::fmt::Debug for TrainedMember {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrainedMember")
            .field("backend_id", &self.backend_id)
            .field("stage_log", &self.stage_log)
            .field("best_epoch", &self.best_epoch)
            .field("validation_accuracy", &self.validation_accuracy)
            .finish_non_exhaustive()
    }
}

fn examples(items: &[LabeledSentence], task: Task) -> Vec<Example> {
    items
        .iter()
        .map(|s| Example {
            text: s.text.clone(),
            label: task.label_index(s.class_id),
        })
        .collect()
}

fn accuracy(predicted: &[usize], expected: &[Example]) -> f64 {
    let hits = predicted.iter().zip(expected).filter(|(p, e)| **p == e.label).count();
    hits as f64 / expected.len() as f64
}

/// Trains one backend through the stages in order. After each gold-stage
/// epoch the model is scored on `validation`; the best-scoring checkpoint
/// (earliest on ties) is restored before returning.
pub fn fine_tune_stages(
    backend: &dyn ClassifierBackend,
    stages: &[TrainingStage],
    validation: &[LabeledSentence],
    task: Task,
    num_classes: usize,
    config: &TrainConfig,
) -> Result<TrainedMember, TrainError> {
    config.validate()?;
    let last = stages.last().ok_or(TrainError::NoStages)?;
    if !last.is_gold {
        return Err(TrainError::LastStageNotGold(last.name.clone()));
    }
    if let Some(empty) = stages.iter().find(|s| s.items.is_empty()) {
        return Err(TrainError::EmptyStage(empty.name.clone()));
    }
    if validation.is_empty() {
        return Err(TrainError::EmptyValidation);
    }
    let val = examples(validation, task);
    let val_texts: Vec<&str> = val.iter().map(|e| e.text.as_str()).collect();

    let mut model = backend.init(num_classes, config.seed)?;
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, serde_json::Value)> = None;
    for (stage_index, stage) in stages.iter().enumerate() {
        let train = examples(&stage.items, task);
        let is_final = stage_index + 1 == stages.len();
        for epoch in 0..config.epochs_for(&stage.name) {
            let ctx = EpochContext {
                stage_index,
                epoch,
                seed: config.seed,
            };
            model.train_epoch(&train, ctx, config)?;
            let mut record = EpochRecord {
                stage: stage.name.clone(),
                epoch,
                validation_accuracy: None,
            };
            if is_final {
                let acc = accuracy(&model.predict(&val_texts)?, &val);
                log::debug!(
                    "{} {} epoch {epoch}: val acc {acc:.4}",
                    backend.backend_id(),
                    stage.name
                );
                record.validation_accuracy = Some(acc);
                if best.as_ref().is_none_or(|(_, b, _)| acc > *b) {
                    best = Some((epoch, acc, model.checkpoint()));
                }
            }
            history.push(record);
        }
    }
    let (best_epoch, validation_accuracy, state) = best.expect("gold stage has at least one epoch");
    model.restore(&state)?;
    Ok(TrainedMember {
        backend_id: backend.backend_id().to_string(),
        stage_log: stages.iter().map(|s| s.name.clone()).collect(),
        best_epoch,
        validation_accuracy,
        history,
        model,
    })
}

#[derive(Debug)]
pub struct EnsembleModel {
    pub task: Task,
    pub combination: Combination,
    pub stage_log: Vec<String>,
    pub members: Vec<TrainedMember>,
}

/// Trains the three backends on identical staged data, concurrently.
pub fn train_ensemble(
    backends: &[Arc<dyn ClassifierBackend>],
    data: &StagedTraining,
    schema: &GuidelineSchema,
    config: &TrainConfig,
) -> Result<EnsembleModel, TrainError> {
    if backends.len() != ENSEMBLE_SIZE {
        return Err(TrainError::Config(format!(
            "an ensemble needs exactly {ENSEMBLE_SIZE} backends, got {}",
            backends.len()
        )));
    }
    let num_classes = data.task.num_classes(schema);
    let results: Vec<Result<TrainedMember, TrainError>> = std::thread::scope(|s| {
        let handles: Vec<_> = backends
            .iter()
            .map(|b| {
                s.spawn(|| {
                    fine_tune_stages(
                        b.as_ref(),
                        &data.stages,
                        &data.validation,
                        data.task,
                        num_classes,
                        config,
                    )
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(TrainError::Config("training thread panicked".into())))
            })
            .collect()
    });
    let members = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(EnsembleModel {
        task: data.task,
        combination: data.combination,
        stage_log: data.stages.iter().map(|s| s.name.clone()).collect(),
        members,
    })
}

/// Class with at least two of three votes; otherwise the first voter's
/// choice.
pub fn majority_vote(votes: [usize; 3]) -> usize {
    let [a, b, c] = votes;
    if b == c {
        b
    } else {
        a
    }
}

/// Predicted class ids for each sentence.
pub fn ensemble_predict(model: &EnsembleModel, sentences: &[&str]) -> Result<Vec<u8>, TrainError> {
    if model.members.len() != ENSEMBLE_SIZE {
        return Err(TrainError::Config("ensemble does not have three members".into()));
    }
    let votes: Vec<Vec<usize>> = model
        .members
        .iter()
        .map(|m| m.model.predict(sentences))
        .collect::<Result<_, _>>()?;
    Ok((0..sentences.len())
        .map(|i| {
            model
                .task
                .class_id(majority_vote([votes[0][i], votes[1][i], votes[2][i]]))
        })
        .collect())
}
