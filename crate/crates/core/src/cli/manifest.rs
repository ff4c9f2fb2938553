use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{RunConfig, Seeds};

pub const LOCK_FILE: &str = ".adsynth.lock";

/// Everything needed to rerun a command: the config it ran with, its seeds
/// and digests of every input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seeds: Seeds,
    pub config: RunConfig,
    /// Input path -> SHA-256 of its contents (directories hash every file
    /// below them in path order).
    pub inputs: BTreeMap<String, String>,
}

fn hash_into(hasher: &mut Sha256, path: &Path) -> io::Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        entries.sort();
        for entry in entries {
            hasher.update(entry.file_name().map(|n| n.as_encoded_bytes()).unwrap_or_default());
            hash_into(hasher, &entry)?;
        }
    } else {
        hasher.update(fs::read(path)?);
    }
    Ok(())
}

pub fn digest(path: &Path) -> io::Result<String> {
    let mut hasher = Sha256::new();
    hash_into(&mut hasher, path)?;
    Ok(hex::encode(hasher.finalize()))
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig, inputs: &[&Path]) -> anyhow::Result<Self> {
        let mut digests = BTreeMap::new();
        for path in inputs {
            let d = digest(path).with_context(|| format!("cannot hash input {}", path.display()))?;
            digests.insert(path.display().to_string(), d);
        }
        Ok(Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: config.seeds.clone(),
            config: config.clone(),
            inputs: digests,
        })
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(output_dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(output_dir)
            .with_context(|| format!("cannot create output directory {}", output_dir.display()))?;
        let path = output_dir.join(LOCK_FILE);
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .with_context(|| {
                format!(
                    "output directory {} is locked by another run (remove {} if stale)",
                    output_dir.display(),
                    path.display()
                )
            })?;
        writeln!(file, "{}", std::process::id())?;
        Ok(OutputLock { path })
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
