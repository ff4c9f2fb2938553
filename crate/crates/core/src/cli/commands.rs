use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use super::config::{require_paths, RunConfig};
use super::manifest::{Manifest, OutputLock};
use super::Outcome;
use crate::augmentation::{run_bronze, run_silver, AugmentConfig, RunReport, SourceNote};
use crate::corpus::{
    combine, deduplicate, sample_negatives, split, stats, stats_table, Combination, DatasetSplit, LabeledSentence,
    NegativeConfig, StopWords, Task, Tier, TierData,
};
use crate::evaluator::{
    confusion, metrics, read_sheet, render_report, review_accuracy, sample_for_review, significance_test, write_sheet,
    ReportCell,
};
use crate::gateway::{Gateway, GatewayConfig, GatewayMode};
use crate::jsonl::{read_jsonl, write_jsonl};
use crate::table::Table;
use crate::taxonomy::{default_guideline, load_guideline, GuidelineSchema};
use crate::trainer::{ensemble_predict, save_ensemble, train_ensemble, ClassifierBackend, ENSEMBLE_SIZE};

const SPLIT_PARTS: [&str; 3] = ["train", "validation", "test"];

fn schema(config: &RunConfig) -> anyhow::Result<GuidelineSchema> {
    match &config.guideline {
        None => Ok(default_guideline()),
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read guideline {}", path.display()))?;
            Ok(load_guideline(&text)?)
        }
    }
}

fn guideline_inputs(config: &RunConfig) -> Vec<&Path> {
    config.guideline.iter().map(PathBuf::as_path).collect()
}

fn gateway(config: &RunConfig) -> anyhow::Result<Gateway> {
    let gw: &GatewayConfig = config.section(&config.gateway, "gateway")?;
    if gw.mode == GatewayMode::Replay {
        if let Some(dir) = &gw.transcript_dir {
            require_paths([dir.as_path()])?;
        }
    }
    Ok(Gateway::from_env(gw.clone())?)
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn write_table(dir: &Path, stem: &str, table: &Table) -> anyhow::Result<()> {
    write_text(&dir.join(format!("{stem}.tsv")), &table.to_delimited('\t'))?;
    write_text(&dir.join(format!("{stem}.txt")), &table.to_aligned())
}

fn print_run_report(name: &str, report: &RunReport) {
    println!(
        "{name}: requests {} | annotated {} | verified-true {} | verified-false {} | unreconciled {} | \
         parse-skips {} | gateway-failures {} | overflow {} | phi-drops {} | accepted {}",
        report.requests,
        report.annotated,
        report.verified_true,
        report.verified_false,
        report.unreconciled,
        report.parse_skips,
        report.gateway_failures,
        report.overflow,
        report.phi_drops,
        report.accepted
    );
}

fn write_tier(
    dir: &Path,
    name: &str,
    title: &str,
    items: &[LabeledSentence],
    report: &RunReport,
    schema: &GuidelineSchema,
) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    write_jsonl(&dir.join(format!("{name}.jsonl")), items)?;
    write_json(&dir.join("report.json"), report)?;
    let s = stats(items);
    write_json(&dir.join("stats.json"), &s)?;
    write_table(dir, "stats", &stats_table(&[(title, &s)], schema))
}

fn augment_config(config: &RunConfig) -> anyhow::Result<&AugmentConfig> {
    config.section(&config.augment, "augment")
}

pub fn annotate(config: &RunConfig) -> anyhow::Result<Outcome> {
    let section = config.section(&config.annotate, "annotate")?;
    let mut inputs = vec![section.notes.as_path()];
    inputs.extend(guideline_inputs(config));
    require_paths(inputs.iter().copied())?;
    let _lock = OutputLock::acquire(&config.output_dir)?;
    let schema = schema(config)?;
    let notes: Vec<SourceNote> =
        read_jsonl(&section.notes).with_context(|| format!("reading {}", section.notes.display()))?;
    let gateway = gateway(config)?;
    let transcript_dir = config.gateway.as_ref().and_then(|g| g.transcript_dir.clone());
    if let Some(dir) = transcript_dir.as_deref().filter(|d| d.exists()) {
        inputs.push(dir);
    }
    let manifest = Manifest::new("annotate", config, &inputs)?;
    let (silver, report) = run_silver(&notes, &schema, &gateway, augment_config(config)?)?;
    let dir = config.output_dir.join("silver");
    write_tier(&dir, "silver", "Silver", &silver, &report, &schema)?;
    manifest.write(&dir)?;
    print_run_report("silver", &report);
    Ok(Outcome::Complete)
}

pub fn generate(config: &RunConfig) -> anyhow::Result<Outcome> {
    let section = config.section(&config.generate, "generate")?;
    let mut inputs = guideline_inputs(config);
    require_paths(inputs.iter().copied())?;
    let _lock = OutputLock::acquire(&config.output_dir)?;
    let schema = schema(config)?;
    let quota = section.quota(&schema)?;
    let gateway = gateway(config)?;
    let transcript_dir = config.gateway.as_ref().and_then(|g| g.transcript_dir.clone());
    if let Some(dir) = transcript_dir.as_deref().filter(|d| d.exists()) {
        inputs.push(dir);
    }
    let manifest = Manifest::new("generate", config, &inputs)?;
    let (bronze, report) = run_bronze(&schema, &gateway, &quota, augment_config(config)?)?;
    let dir = config.output_dir.join("bronze");
    write_tier(&dir, "bronze", "Bronze", &bronze, &report, &schema)?;
    manifest.write(&dir)?;
    print_run_report("bronze", &report);
    match &report.quota_unmet {
        None => Ok(Outcome::Complete),
        Some(unmet) => {
            eprintln!("quota unmet: {unmet:?}");
            Ok(Outcome::QuotaUnmet)
        }
    }
}

fn read_labeled(path: &Path, tier: Tier) -> anyhow::Result<Vec<LabeledSentence>> {
    let items: Vec<LabeledSentence> = read_jsonl(path).with_context(|| format!("reading {}", path.display()))?;
    for (i, item) in items.iter().enumerate() {
        item.validate()
            .with_context(|| format!("{} line {}", path.display(), i + 1))?;
        if item.tier != tier {
            bail!(
                "{} line {}: expected tier {}, found {}",
                path.display(),
                i + 1,
                tier.as_str(),
                item.tier.as_str()
            );
        }
    }
    Ok(items)
}

fn write_split(dir: &Path, split: &DatasetSplit) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    for (part, items) in SPLIT_PARTS.iter().zip([&split.train, &split.validation, &split.test]) {
        write_jsonl(&dir.join(format!("{part}.jsonl")), items)?;
    }
    Ok(())
}

fn read_split(dir: &Path, seed: u64) -> anyhow::Result<DatasetSplit> {
    let mut parts = SPLIT_PARTS.iter().map(|part| -> anyhow::Result<Vec<LabeledSentence>> {
        let path = dir.join(format!("{part}.jsonl"));
        read_jsonl(&path).with_context(|| format!("reading {}", path.display()))
    });
    Ok(DatasetSplit {
        train: parts.next().unwrap()?,
        validation: parts.next().unwrap()?,
        test: parts.next().unwrap()?,
        seed,
    })
}

fn dedup_logged(items: Vec<LabeledSentence>, name: &str) -> Vec<LabeledSentence> {
    let outcome = deduplicate(items);
    if outcome.duplicates > 0 || !outcome.conflicts.is_empty() {
        log::info!(
            "{name}: removed {} duplicates ({} with conflicting classes)",
            outcome.duplicates,
            outcome.conflicts.len()
        );
    }
    outcome.items
}

pub fn build(config: &RunConfig) -> anyhow::Result<Outcome> {
    let section = config.section(&config.build, "build")?;
    let mut inputs = vec![section.gold.as_path(), section.negative_pool.as_path()];
    inputs.extend(
        [&section.silver, &section.bronze, &section.stop_words]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path),
    );
    inputs.extend(guideline_inputs(config));
    require_paths(inputs.iter().copied())?;
    let _lock = OutputLock::acquire(&config.output_dir)?;
    let schema = schema(config)?;
    let manifest = Manifest::new("build", config, &inputs)?;

    let gold = dedup_logged(read_labeled(&section.gold, Tier::Gold)?, "gold");
    let gold_split = split(&gold, section.ratios, config.seeds.split)?;

    let pool: Vec<SourceNote> = read_jsonl(&section.negative_pool)?;
    let stop_words = match &section.stop_words {
        Some(path) => StopWords::parse(&fs::read_to_string(path)?),
        None => StopWords::default(),
    };
    let negative_config = NegativeConfig {
        seed: config.seeds.negatives,
        ..section.negatives.clone()
    };
    let negatives = sample_negatives(&pool, &gold, &negative_config, &stop_words)?;
    let negative_split = split(&negatives, section.ratios, config.seeds.split)?;

    let dir = config.output_dir.join("build");
    write_split(&dir.join("gold"), &gold_split)?;
    write_split(&dir.join("negatives"), &negative_split)?;

    let mut columns = vec![("Gold", stats(&gold))];
    for (name, title, path, tier) in [
        ("silver", "Silver", &section.silver, Tier::Silver),
        ("bronze", "Bronze", &section.bronze, Tier::Bronze),
    ] {
        if let Some(path) = path {
            let items = dedup_logged(read_labeled(path, tier)?, name);
            write_jsonl(&dir.join(format!("{name}.jsonl")), &items)?;
            columns.push((title, stats(&items)));
        }
    }
    let refs: Vec<(&str, &_)> = columns.iter().map(|(t, s)| (*t, s)).collect();
    let table = stats_table(&refs, &schema);
    write_table(&dir, "stats", &table)?;
    write_json(
        &dir.join("stats.json"),
        &columns
            .iter()
            .map(|(t, s)| (t.to_string(), s.clone()))
            .collect::<BTreeMap<_, _>>(),
    )?;
    manifest.write(&dir)?;
    println!(
        "gold {} / {} / {} | negatives {} / {} / {}",
        gold_split.train.len(),
        gold_split.validation.len(),
        gold_split.test.len(),
        negative_split.train.len(),
        negative_split.validation.len(),
        negative_split.test.len()
    );
    print!("{}", table.to_aligned());
    Ok(Outcome::Complete)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSummary {
    pub backend_id: String,
    pub best_epoch: usize,
    pub validation_accuracy: f64,
}

/// Test-set predictions of one (task, combination) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPredictions {
    pub task: Task,
    pub combination: Combination,
    pub stage_log: Vec<String>,
    pub members: Vec<MemberSummary>,
    pub golds: Vec<u8>,
    pub predictions: Vec<u8>,
}

pub fn cell_name(task: Task, combination: Combination) -> String {
    format!("{}-{}", task.as_str(), combination.slug())
}

fn load_tiers(build_dir: &Path, seed: u64) -> anyhow::Result<TierData> {
    let gold = read_split(&build_dir.join("gold"), seed)?;
    let negatives = read_split(&build_dir.join("negatives"), seed)?;
    let optional = |name: &str| -> anyhow::Result<Option<Vec<LabeledSentence>>> {
        let path = build_dir.join(format!("{name}.jsonl"));
        Ok(if path.exists() { Some(read_jsonl(&path)?) } else { None })
    };
    Ok(TierData {
        gold: gold.merged(negatives),
        silver: optional("silver")?,
        bronze: optional("bronze")?,
    })
}

pub fn train(config: &RunConfig) -> anyhow::Result<Outcome> {
    let section = config.train.clone().unwrap_or_default();
    let build_dir = config.output_dir.join("build");
    let mut inputs = vec![build_dir.as_path()];
    inputs.extend(guideline_inputs(config));
    require_paths(inputs.iter().copied()).context("run `build` first")?;
    if section.backends.len() != ENSEMBLE_SIZE {
        bail!(
            "[train] needs exactly {ENSEMBLE_SIZE} backends, got {}",
            section.backends.len()
        );
    }
    let _lock = OutputLock::acquire(&config.output_dir)?;
    let schema = schema(config)?;
    let manifest = Manifest::new("train", config, &inputs)?;
    let train_config = section.train_config(config.seeds.train)?;
    let tiers = load_tiers(&build_dir, config.seeds.split)?;
    let backends: Vec<Arc<dyn ClassifierBackend>> = section.backends.iter().map(|b| b.build()).collect();

    let mut summary = Vec::new();
    for &task in &section.tasks {
        for &combination in &section.combinations {
            let name = cell_name(task, combination);
            let staged = combine(&tiers, combination, task)?;
            log::info!("training {name}");
            let ensemble = train_ensemble(&backends, &staged, &schema, &train_config)
                .with_context(|| format!("training cell {name}"))?;
            if ensemble.stage_log != combination.expected_stage_log() {
                bail!(
                    "{name}: stage log {:?} does not match {}",
                    ensemble.stage_log,
                    combination.code()
                );
            }
            save_ensemble(
                &ensemble,
                task.num_classes(&schema),
                &config.output_dir.join("checkpoints").join(&name),
            )?;
            let texts: Vec<&str> = staged.test.iter().map(|s| s.text.as_str()).collect();
            let golds: Vec<u8> = staged
                .test
                .iter()
                .map(|s| task.class_id(task.label_index(s.class_id)))
                .collect();
            let cell = CellPredictions {
                task,
                combination,
                stage_log: ensemble.stage_log.clone(),
                members: ensemble
                    .members
                    .iter()
                    .map(|m| MemberSummary {
                        backend_id: m.backend_id.clone(),
                        best_epoch: m.best_epoch,
                        validation_accuracy: m.validation_accuracy,
                    })
                    .collect(),
                golds,
                predictions: ensemble_predict(&ensemble, &texts)?,
            };
            write_json(
                &config.output_dir.join("predictions").join(format!("{name}.json")),
                &cell,
            )?;
            println!("{name}: stages {:?}", cell.stage_log);
            summary.push(cell);
        }
    }
    let dir = config.output_dir.join("train");
    write_json(
        &dir.join("summary.json"),
        &summary
            .iter()
            .map(|c| (cell_name(c.task, c.combination), (&c.stage_log, &c.members)))
            .collect::<BTreeMap<_, _>>(),
    )?;
    manifest.write(&dir)?;
    Ok(Outcome::Complete)
}

pub type ReportValues = BTreeMap<Task, BTreeMap<Combination, ReportCell>>;

/// Metric cells computed from stored test predictions.
pub fn cells_from_predictions(
    predictions: &[CellPredictions],
    schema: &GuidelineSchema,
    method: crate::evaluator::SignificanceMethod,
) -> anyhow::Result<ReportValues> {
    let mut out = ReportValues::new();
    let mut by_task: BTreeMap<Task, Vec<&CellPredictions>> = BTreeMap::new();
    for p in predictions {
        by_task.entry(p.task).or_default().push(p);
    }
    for (task, cells) in by_task {
        let k = task.num_classes(schema);
        let index = |ids: &[u8]| -> Vec<usize> { ids.iter().map(|c| task.label_index(*c)).collect() };
        let baseline = cells.iter().find(|c| c.combination == Combination::Gold).copied();
        let mut row = BTreeMap::new();
        for cell in &cells {
            let golds = index(&cell.golds);
            let preds = index(&cell.predictions);
            let m = metrics(&confusion(&preds, &golds, k)?)?;
            let significant = match baseline {
                Some(base) if cell.combination != Combination::Gold => {
                    if base.golds != cell.golds {
                        bail!(
                            "{} and the gold-only cell were scored on different test sets",
                            cell_name(task, cell.combination)
                        );
                    }
                    significance_test(&index(&base.predictions), &preds, &golds, method)?.significant
                }
                _ => false,
            };
            row.insert(cell.combination, ReportCell::from_metrics(&m, task, significant));
        }
        out.insert(task, row);
    }
    Ok(out)
}

pub fn report(config: &RunConfig) -> anyhow::Result<Outcome> {
    let mut inputs = guideline_inputs(config);
    let predictions_dir = config.output_dir.join("predictions");
    match &config.report.values {
        Some(path) => inputs.push(path),
        None => inputs.push(&predictions_dir),
    }
    require_paths(inputs.iter().copied())?;
    let _lock = OutputLock::acquire(&config.output_dir)?;
    let schema = schema(config)?;
    let manifest = Manifest::new("report", config, &inputs)?;

    let values: ReportValues = match &config.report.values {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)
            .with_context(|| format!("reading report values {}", path.display()))?,
        None => {
            let mut files: Vec<PathBuf> = fs::read_dir(&predictions_dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            files.retain(|p| p.extension().is_some_and(|e| e == "json"));
            files.sort();
            let mut predictions = Vec::new();
            for f in files {
                predictions.push(serde_json::from_str::<CellPredictions>(&fs::read_to_string(&f)?)?);
            }
            cells_from_predictions(&predictions, &schema, config.report.significance)?
        }
    };

    let dir = config.output_dir.join("report");
    for (task, cells) in &values {
        let rendered = render_report(cells, *task, &schema).with_context(|| format!("{} report", task.as_str()))?;
        write_table(&dir, task.as_str(), &rendered.table)?;
        write_json(&dir.join(format!("{}.json", task.as_str())), &(cells, &rendered.deltas))?;
        println!("{} classification", task.as_str());
        print!("{}", rendered.table.to_aligned());
    }
    manifest.write(&dir)?;
    Ok(Outcome::Complete)
}

pub fn review_sample(
    config: &RunConfig,
    dataset: Option<PathBuf>,
    size: Option<usize>,
    seed: Option<u64>,
) -> anyhow::Result<Outcome> {
    let section = config.review.as_ref();
    let dataset = dataset
        .or_else(|| section.map(|s| s.dataset.clone()))
        .context("no dataset given (use --dataset or [review] dataset)")?;
    let size = size.or_else(|| section.map(|s| s.size)).unwrap_or(100);
    let seed = seed.unwrap_or(config.seeds.review);
    require_paths([dataset.as_path()])?;
    let _lock = OutputLock::acquire(&config.output_dir)?;
    let manifest = Manifest::new("review-sample", config, &[dataset.as_path()])?;
    let items: Vec<LabeledSentence> = read_jsonl(&dataset)?;
    let sheet = sample_for_review(&items, size, seed)?;
    let dir = config.output_dir.join("review");
    fs::create_dir_all(&dir)?;
    let path = dir.join("sheet.jsonl");
    write_sheet(&path, &sheet)?;
    manifest.write(&dir)?;
    println!("wrote {} items to {}", sheet.items.len(), path.display());
    Ok(Outcome::Complete)
}

pub fn review_ingest(config: &RunConfig, sheet_path: &Path) -> anyhow::Result<Outcome> {
    require_paths([sheet_path])?;
    let _lock = OutputLock::acquire(&config.output_dir)?;
    let sheet = read_sheet(sheet_path)?;
    let summary = review_accuracy(&sheet)?;
    let dir = config.output_dir.join("review");
    write_json(&dir.join("summary.json"), &summary)?;
    Manifest::new("review-ingest", config, &[sheet_path])?.write(&dir.join("ingest"))?;
    println!(
        "accuracy {:.2} ({} of {})",
        summary.accuracy, summary.correct, summary.reviewed
    );
    for (kind, n) in &summary.errors {
        println!("  {kind:?}: {n}");
    }
    Ok(Outcome::Complete)
}
