//! Regenerates the replay transcript stores under `tests/fixtures` from the
//! scripted responses in each fixture's `script.json`.
//!
//! Run with `cargo run --example record_fixtures` after changing a prompt
//! template or a script.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;

use adsynth::augmentation::{run_bronze, run_silver, AugmentConfig, QuotaPlan, SourceNote};
use adsynth::gateway::testing::ScriptedProvider;
use adsynth::gateway::{Gateway, GatewayConfig};
use adsynth::jsonl::read_jsonl;
use adsynth::taxonomy::default_guideline;

const MODEL_ID: &str = "fixture-model";

fn scripted(path: &Path) -> anyhow::Result<ScriptedProvider> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let script: BTreeMap<String, String> = serde_json::from_str(&text)?;
    let mut provider = ScriptedProvider::new();
    for (tag, response) in script {
        provider.insert(tag, response);
    }
    Ok(provider)
}

fn recording_gateway(dir: &Path) -> anyhow::Result<Gateway> {
    let transcripts = dir.join("transcripts");
    if transcripts.exists() {
        fs::remove_dir_all(&transcripts)?;
    }
    let provider = scripted(&dir.join("script.json"))?;
    Ok(Gateway::new(
        GatewayConfig::record(transcripts),
        Some(Arc::new(provider)),
    )?)
}

fn main() -> anyhow::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let schema = default_guideline();
    let config = AugmentConfig::new(MODEL_ID);

    let silver_dir = fixtures.join("silver");
    let notes: Vec<SourceNote> = read_jsonl(&silver_dir.join("notes.jsonl"))?;
    let (silver, report) = run_silver(&notes, &schema, &recording_gateway(&silver_dir)?, &config)?;
    println!("silver: {} kept of {} annotated", silver.len(), report.annotated);

    let bronze_dir = fixtures.join("bronze");
    let quota: QuotaPlan = serde_json::from_str(&fs::read_to_string(bronze_dir.join("quota.json"))?)?;
    let (bronze, report) = run_bronze(&schema, &recording_gateway(&bronze_dir)?, &quota, &config)?;
    println!("bronze: {} accepted in {} requests", bronze.len(), report.requests);
    Ok(())
}
