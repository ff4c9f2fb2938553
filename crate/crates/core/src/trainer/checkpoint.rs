//! On-disk ensemble layout:
//!
//! ```text
//! <dir>/ensemble.json
//! <dir>/<backend_id>/metadata.json
//! <dir>/<backend_id>/model.json
//! ```

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ClassifierBackend, EnsembleModel, EpochRecord, TrainError, TrainedMember};
use crate::corpus::{Combination, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberMetadata {
    pub backend_id: String,
    pub task: Task,
    pub combination: Combination,
    pub stage_log: Vec<String>,
    pub best_epoch: usize,
    pub validation_accuracy: f64,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EnsembleManifest {
    task: Task,
    combination: Combination,
    stage_log: Vec<String>,
    num_classes: usize,
    members: Vec<String>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), TrainError> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, TrainError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn save_ensemble(model: &EnsembleModel, num_classes: usize, dir: &Path) -> Result<(), TrainError> {
    fs::create_dir_all(dir)?;
    for member in &model.members {
        let member_dir = dir.join(&member.backend_id);
        fs::create_dir_all(&member_dir)?;
        let meta = MemberMetadata {
            backend_id: member.backend_id.clone(),
            task: model.task,
            combination: model.combination,
            stage_log: member.stage_log.clone(),
            best_epoch: member.best_epoch,
            validation_accuracy: member.validation_accuracy,
            history: member.history.clone(),
        };
        write_json(&member_dir.join("metadata.json"), &meta)?;
        write_json(&member_dir.join("model.json"), &member.model.checkpoint())?;
    }
    let manifest = EnsembleManifest {
        task: model.task,
        combination: model.combination,
        stage_log: model.stage_log.clone(),
        num_classes,
        members: model.members.iter().map(|m| m.backend_id.clone()).collect(),
    };
    write_json(&dir.join("ensemble.json"), &manifest)
}

/// Restores a saved ensemble. `backends` must provide every saved member id;
/// members keep their saved order.
pub fn load_ensemble(dir: &Path, backends: &[Arc<dyn ClassifierBackend>]) -> Result<EnsembleModel, TrainError> {
    let manifest: EnsembleManifest = read_json(&dir.join("ensemble.json"))?;
    let mut members = Vec::with_capacity(manifest.members.len());
    for id in &manifest.members {
        let backend = backends
            .iter()
            .find(|b| b.backend_id() == id)
            .ok_or_else(|| TrainError::Config(format!("no configured backend for saved member {id}")))?;
        let member_dir = dir.join(id);
        let meta: MemberMetadata = read_json(&member_dir.join("metadata.json"))?;
        let state: serde_json::Value = read_json(&member_dir.join("model.json"))?;
        let mut model = backend.init(manifest.num_classes, 0)?;
        model.restore(&state)?;
        members.push(TrainedMember {
            backend_id: meta.backend_id,
            stage_log: meta.stage_log,
            best_epoch: meta.best_epoch,
            validation_accuracy: meta.validation_accuracy,
            history: meta.history,
            model,
        });
    }
    Ok(EnsembleModel {
        task: manifest.task,
        combination: manifest.combination,
        stage_log: manifest.stage_log,
        members,
    })
}
