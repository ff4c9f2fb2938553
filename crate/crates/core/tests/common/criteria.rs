//! End-to-end checks, each returning a one-line summary on success.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::Value;

use adsynth::augmentation::{run_bronze, run_silver, AugmentConfig, QuotaPlan, RunReport, SourceNote};
use adsynth::cli::ReportValues;
use adsynth::corpus::{
    combine, is_table_like, sample_negatives, split, stats, stats_table, token_count, Combination, LabeledSentence,
    NegativeConfig, Provenance, SplitRatios, StopWords, Task, Tier, TierData,
};
use adsynth::evaluator::{
    confusion, mcnemar, mcnemar_exact, metrics, render_report, significance_test, ConfusionMatrix, ReportCell,
    SignificanceMethod, ACCURACY_ROW,
};
use adsynth::gateway::{Gateway, GatewayConfig};
use adsynth::jsonl::{read_jsonl, to_jsonl};
use adsynth::prompt::{parse_annotation_output, parse_generation_output, parse_verification_output, PromptError};
use adsynth::taxonomy::{default_guideline, load_guideline, render_guideline, GuidelineSchema};
use adsynth::trainer::{
    ensemble_predict, majority_vote, train_ensemble, BackendSpec, ClassifierBackend, EnsembleModel, TrainConfig,
};

use super::{fixtures, props, reference, synthetic, FIXTURE_MODEL};

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, budget: Duration, what: &str) -> Result<(), String> {
    ensure!(elapsed < budget, "{what} took {elapsed:?}, budget {budget:?}");
    Ok(())
}

// ---- delta reproduction ----

#[derive(Deserialize)]
struct PublishedDeltas {
    columns: Vec<Combination>,
    significant_columns: Vec<Combination>,
    rows: BTreeMap<Task, BTreeMap<String, Vec<f64>>>,
}

pub fn delta_reproduction() -> Outcome {
    let started = Instant::now();
    let dir = fixtures().join("report");
    let values: ReportValues =
        serde_json::from_str(&std::fs::read_to_string(dir.join("published_values.json")).unwrap()).unwrap();
    let expected: PublishedDeltas =
        serde_json::from_str(&std::fs::read_to_string(dir.join("published_deltas.json")).unwrap()).unwrap();
    let schema = default_guideline();

    let mut checked = 0;
    let mut exact = 0;
    let mut worst: f64 = 0.0;
    for (task, rows) in &expected.rows {
        let cells = values.get(task).ok_or_else(|| format!("no {task:?} values"))?;
        let rendered = render_report(cells, *task, &schema).map_err(|e| e.to_string())?;
        for (row, published) in rows {
            for (combination, want) in expected.columns.iter().zip(published) {
                let cell = rendered
                    .deltas
                    .iter()
                    .find(|d| &d.row == row && d.combination == *combination)
                    .ok_or_else(|| format!("{task:?} {row} {} missing", combination.code()))?;
                let got = cell.change.rounded();
                let err = (got - want).abs();
                ensure!(
                    err <= 0.01 + 1e-9,
                    "{task:?} {row} {}: {got} vs published {want}",
                    combination.code()
                );
                worst = worst.max(err);
                if err < 1e-9 {
                    exact += 1;
                }
                checked += 1;
            }
        }
        let accuracy = rendered.table.row(ACCURACY_ROW).ok_or("accuracy row missing")?;
        for (combination, text) in expected.columns.iter().zip(&accuracy[2..]) {
            let starred = text.contains('*');
            ensure!(
                starred == expected.significant_columns.contains(combination),
                "{task:?} accuracy {} significance mark mismatch: {text}",
                combination.code()
            );
        }
    }
    let binary = render_report(&values[&Task::Binary], Task::Binary, &schema).unwrap();
    let precision = binary
        .table
        .row("Precision (Positive)")
        .ok_or("precision row missing")?;
    ensure!(precision[2] == "0.88 (20.55%↑)", "rendered {:?}", precision[2]);
    within(started.elapsed(), Duration::from_secs(1), "delta reproduction")?;
    Ok(format!(
        "{checked} deltas within 0.01 pp ({exact} exact, worst {worst:.4}) in {:?}",
        started.elapsed()
    ))
}

// ---- guideline ----

const TITLES: [&str; 9] = [
    "Cognitive impairment",
    "Notice/concern by others",
    "Requires assistance",
    "Physiological changes",
    "Cognitive assessment",
    "Cognitive intervention/therapy",
    "Diagnostic tests of the head or brain that are related to neurocognitive symptoms.",
    "Coping strategy",
    "Neuropsychiatric symptoms",
];

pub fn guideline_fidelity() -> Outcome {
    let started = Instant::now();
    let source =
        std::fs::read_to_string(std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/ad_guideline.txt"))
            .map_err(|e| e.to_string())?;
    let schema = load_guideline(&source).map_err(|e| e.to_string())?;
    ensure!(schema.len() == 9, "{} categories", schema.len());
    for (i, (category, title)) in schema.categories().iter().zip(TITLES).enumerate() {
        ensure!(category.id as usize == i + 1, "category {i} has id {}", category.id);
        ensure!(
            category.title == title,
            "category {} title {:?}",
            category.id,
            category.title
        );
        ensure!(
            !category.definition.trim().is_empty(),
            "category {} has no definition",
            category.id
        );
    }
    let rendered = render_guideline(&schema);
    let reparsed = load_guideline(&rendered).map_err(|e| e.to_string())?;
    ensure!(reparsed == schema, "render then load changed the schema");
    ensure!(render_guideline(&reparsed) == rendered, "second render differs");
    ensure!(
        schema == default_guideline(),
        "shipped file differs from the built-in guideline"
    );
    within(started.elapsed(), Duration::from_secs(1), "guideline checks")?;
    Ok(format!("9 categories, round trip stable, {:?}", started.elapsed()))
}

// ---- parser fixtures ----

#[derive(Debug, Deserialize)]
struct ParserCase {
    file: String,
    kind: String,
    outcome: String,
    #[serde(default)]
    rejected: usize,
    #[serde(default)]
    unanchored: usize,
    #[serde(default)]
    note_text: Option<String>,
    #[serde(default)]
    items: Vec<Value>,
}

fn outcome_name(err: &PromptError) -> &'static str {
    match err {
        PromptError::NoJsonFound => "no_json",
        PromptError::AllItemsInvalid(_) => "all_invalid",
        PromptError::EmptyNote => "empty_note",
        _ => "other",
    }
}

fn check_case(case: &ParserCase, schema: &GuidelineSchema) -> Result<(), String> {
    let raw = std::fs::read_to_string(fixtures().join("llm_outputs").join(&case.file)).map_err(|e| e.to_string())?;
    let result: Result<(Vec<Value>, usize, usize, Option<String>), PromptError> = match case.kind.as_str() {
        "annotation" => parse_annotation_output(&raw, schema).map(|p| {
            let report = p.report;
            (
                p.items.iter().map(|i| serde_json::to_value(i).unwrap()).collect(),
                report.valid,
                report.rejected.len(),
                None,
            )
        }),
        "verification" => parse_verification_output(&raw, schema).map(|p| {
            let report = p.report;
            (
                p.items.iter().map(|i| serde_json::to_value(i).unwrap()).collect(),
                report.valid,
                report.rejected.len(),
                None,
            )
        }),
        "generation" => parse_generation_output(&raw, schema).map(|(note, report)| {
            let items = note
                .annotations
                .iter()
                .map(|a| serde_json::json!({"sentence": a.sentence, "class": a.class_id}))
                .collect();
            (
                items,
                report.valid,
                report.rejected.len(),
                Some(format!("{}\u{0}{}", note.note_text, report.unanchored)),
            )
        }),
        other => return Err(format!("unknown fixture kind {other}")),
    };
    match (case.outcome.as_str(), result) {
        ("ok", Ok((items, valid, rejected, note))) => {
            ensure!(items == case.items, "{}: items {items:?}", case.file);
            ensure!(valid == case.items.len(), "{}: valid {valid}", case.file);
            ensure!(
                rejected == case.rejected,
                "{}: rejected {rejected}, expected {}",
                case.file,
                case.rejected
            );
            if let Some(note) = note {
                let (text, unanchored) = note.split_once('\u{0}').unwrap();
                ensure!(
                    Some(text) == case.note_text.as_deref(),
                    "{}: note text {text:?}",
                    case.file
                );
                ensure!(
                    unanchored == case.unanchored.to_string(),
                    "{}: unanchored {unanchored}",
                    case.file
                );
            }
            Ok(())
        }
        (want, Err(err)) if want == outcome_name(&err) => {
            if let PromptError::AllItemsInvalid(report) = &err {
                ensure!(
                    report.rejected.len() == case.rejected,
                    "{}: rejected {}",
                    case.file,
                    report.rejected.len()
                );
            }
            Ok(())
        }
        (want, Ok(_)) => Err(format!("{}: parsed but expected {want}", case.file)),
        (want, Err(err)) => Err(format!("{}: expected {want}, got {err}", case.file)),
    }
}

pub fn parser_robustness() -> Outcome {
    let schema = default_guideline();
    let cases: Vec<ParserCase> =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("llm_outputs/expectations.json")).unwrap())
            .map_err(|e| e.to_string())?;
    ensure!(cases.len() >= 20, "only {} fixtures", cases.len());
    let on_disk = std::fs::read_dir(fixtures().join("llm_outputs"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "txt"))
        .count();
    ensure!(
        on_disk == cases.len(),
        "{on_disk} fixture files but {} expectations",
        cases.len()
    );
    let mut errors = Vec::new();
    for case in &cases {
        if let Err(e) = check_case(case, &schema) {
            errors.push(e);
        }
    }
    ensure!(errors.is_empty(), "{}", errors.join("; "));
    let valid: usize = cases.iter().map(|c| c.items.len()).sum();
    Ok(format!(
        "{} outputs, {valid} valid items, all fields traced to source",
        cases.len()
    ))
}

// ---- replay determinism ----

fn replay_gateway(dir: &std::path::Path) -> Gateway {
    Gateway::new(GatewayConfig::replay(dir.join("transcripts")), None).expect("replay store exists")
}

fn render_run(items: &[LabeledSentence], report: &RunReport) -> String {
    format!("{}{}", to_jsonl(items), serde_json::to_string(report).unwrap())
}

pub fn replay_silver() -> Result<(Vec<LabeledSentence>, RunReport), String> {
    let dir = fixtures().join("silver");
    let notes: Vec<SourceNote> = read_jsonl(&dir.join("notes.jsonl")).map_err(|e| e.to_string())?;
    run_silver(
        &notes,
        &default_guideline(),
        &replay_gateway(&dir),
        &AugmentConfig::new(FIXTURE_MODEL),
    )
    .map_err(|e| e.to_string())
}

pub fn bronze_quota() -> QuotaPlan {
    serde_json::from_str(&std::fs::read_to_string(fixtures().join("bronze/quota.json")).unwrap()).unwrap()
}

pub fn replay_bronze(max_requests: Option<usize>) -> Result<(Vec<LabeledSentence>, RunReport), String> {
    let dir = fixtures().join("bronze");
    let mut quota = bronze_quota();
    if let Some(m) = max_requests {
        quota.max_requests = m;
    }
    run_bronze(
        &default_guideline(),
        &replay_gateway(&dir),
        &quota,
        &AugmentConfig::new(FIXTURE_MODEL),
    )
    .map_err(|e| e.to_string())
}

pub fn pipeline_determinism() -> Outcome {
    let mut silver_runs = Vec::new();
    let mut bronze_runs = Vec::new();
    for _ in 0..3 {
        let (items, report) = replay_silver()?;
        silver_runs.push(render_run(&items, &report));
        let (items, report) = replay_bronze(None)?;
        bronze_runs.push(render_run(&items, &report));
    }
    ensure!(
        silver_runs.iter().all(|r| r == &silver_runs[0]),
        "silver replay output differs between runs"
    );
    ensure!(
        bronze_runs.iter().all(|r| r == &bronze_runs[0]),
        "bronze replay output differs between runs"
    );

    let (silver, report) = replay_silver()?;
    let expected = reference::silver_counts(&fixtures().join("silver/transcripts"));
    ensure!(
        report.annotated == expected.annotated,
        "annotated {} vs {}",
        report.annotated,
        expected.annotated
    );
    ensure!(
        report.verified_false == expected.decision_false,
        "decision=false {} vs reference {}",
        report.verified_false,
        expected.decision_false
    );
    ensure!(
        report.unreconciled == expected.unreconciled,
        "unreconciled {} vs reference {}",
        report.unreconciled,
        expected.unreconciled
    );
    let kept: BTreeSet<(String, String, u64)> = silver
        .iter()
        .map(|s| (s.provenance.note_id.clone().unwrap(), s.text.clone(), s.class_id as u64))
        .collect();
    ensure!(kept == expected.kept, "surviving set differs from reference");
    ensure!(
        silver.len() == expected.decision_true,
        "{} kept vs {} true",
        silver.len(),
        expected.decision_true
    );
    let removed = expected.decision_false + expected.unreconciled;

    let (bronze, report) = replay_bronze(None)?;
    ensure!(
        report.quota_unmet.is_none(),
        "bronze quota unmet: {:?}",
        report.quota_unmet
    );
    let mut per_class = BTreeMap::new();
    for s in &bronze {
        *per_class.entry(s.class_id).or_insert(0usize) += 1;
    }
    ensure!(per_class == bronze_quota().targets, "bronze counts {per_class:?}");
    let (_, partial) = replay_bronze(Some(2))?;
    ensure!(
        partial.quota_unmet.is_some(),
        "a 2-request budget should leave the quota unmet"
    );
    Ok(format!(
        "3 identical replays each; silver removed {removed} of {} ({} false, {} unreconciled); bronze {} requests",
        expected.annotated, expected.decision_false, expected.unreconciled, report.requests
    ))
}

// ---- corpus properties ----

pub fn corpus_invariants() -> Outcome {
    props::run(props::split_input(), props::check_split).map_err(|e| format!("split: {e}"))?;
    props::run(props::dedup_input(), props::check_dedup).map_err(|e| format!("dedup: {e}"))?;
    props::run(props::negatives_input(), props::check_negatives).map_err(|e| format!("negatives: {e}"))?;

    // fixed exclusion cases
    let sw = StopWords::default();
    ensure!(
        sw.content_tokens("He is at the clinic.") < 5,
        "short sentence counted as long"
    );
    ensure!(
        sw.content_tokens("Patient walked briskly around hospital grounds.") >= 5,
        "long sentence counted short"
    );
    for line in [
        "BP: 120/80 HR: 72 RR: 16",
        "| Item | Score |",
        "☐ Falls ☐ Wandering",
        "Do you drive? Yes/No",
    ] {
        ensure!(is_table_like(line), "{line:?} not excluded as a table line");
    }
    ensure!(
        !is_table_like("Family members report that he repeats stories."),
        "prose flagged as table"
    );
    Ok(format!(
        "split, dedup and negative sampling held over {} cases each",
        props::CASES
    ))
}

// ---- vote and metric oracles ----

fn vote_oracle(votes: [usize; 3]) -> usize {
    for v in votes {
        if votes.iter().filter(|x| **x == v).count() >= 2 {
            return v;
        }
    }
    votes[0]
}

struct FixedMember(Vec<usize>);

impl adsynth::trainer::MemberModel for FixedMember {
    fn train_epoch(
        &mut self,
        _: &[adsynth::trainer::Example],
        _: adsynth::trainer::EpochContext,
        _: &TrainConfig,
    ) -> Result<(), adsynth::trainer::TrainError> {
        Ok(())
    }
    fn predict(&self, texts: &[&str]) -> Result<Vec<usize>, adsynth::trainer::TrainError> {
        Ok(texts.iter().map(|t| self.0[t.parse::<usize>().unwrap()]).collect())
    }
    fn checkpoint(&self) -> Value {
        Value::Null
    }
    fn restore(&mut self, _: &Value) -> Result<(), adsynth::trainer::TrainError> {
        Ok(())
    }
}

fn fixed_ensemble(task: Task, columns: [Vec<usize>; 3]) -> EnsembleModel {
    EnsembleModel {
        task,
        combination: Combination::Gold,
        stage_log: vec!["gold".into()],
        members: columns
            .into_iter()
            .enumerate()
            .map(|(i, c)| adsynth::trainer::TrainedMember {
                backend_id: format!("fixed{i}"),
                stage_log: vec!["gold".into()],
                best_epoch: 1,
                validation_accuracy: 0.0,
                history: Vec::new(),
                model: Box::new(FixedMember(c)),
            })
            .collect(),
    }
}

/// u128 binomial tail: P(X <= k) * 2 for X ~ Bin(n, 1/2), capped at 1.
pub fn exact_pvalue(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let k = b.min(c);
    let mut choose: u128 = 1;
    let mut tail: u128 = 0;
    for i in 0..=k {
        if i > 0 {
            choose = choose * (n - i + 1) as u128 / i as u128;
        }
        tail += choose;
    }
    (2.0 * tail as f64 / 2f64.powi(n as i32)).min(1.0)
}

pub fn vote_metric_oracles() -> Outcome {
    let mut tuples = 0;
    for k in 1..=10usize {
        let mut columns: [Vec<usize>; 3] = Default::default();
        let mut expected = Vec::new();
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    ensure!(majority_vote([a, b, c]) == vote_oracle([a, b, c]), "vote {a},{b},{c}");
                    columns[0].push(a);
                    columns[1].push(b);
                    columns[2].push(c);
                    expected.push(Task::Multiclass.class_id(vote_oracle([a, b, c])));
                    tuples += 1;
                }
            }
        }
        let ensemble = fixed_ensemble(Task::Multiclass, columns);
        let texts: Vec<String> = (0..expected.len()).map(|i| i.to_string()).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let got = ensemble_predict(&ensemble, &refs).map_err(|e| e.to_string())?;
        ensure!(
            got == expected,
            "ensemble_predict disagrees with the vote oracle at K={k}"
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        let k = rng.random_range(2..=10usize);
        let counts: Vec<Vec<u64>> = (0..k)
            .map(|_| {
                (0..k)
                    .map(|_| {
                        if rng.random_bool(0.3) {
                            0
                        } else {
                            rng.random_range(0..50)
                        }
                    })
                    .collect()
            })
            .collect();
        let total: u64 = counts.iter().flatten().sum();
        if total == 0 {
            continue;
        }
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (g, row) in counts.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                pairs.extend(std::iter::repeat_n((p, g), n as usize));
            }
        }
        let m = metrics(&ConfusionMatrix { counts: counts.clone() }).map_err(|e| e.to_string())?;
        let preds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let golds: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        ensure!(
            confusion(&preds, &golds, k).unwrap().counts == counts,
            "trial {trial}: confusion rebuild differs"
        );
        let accuracy = pairs.iter().filter(|(p, g)| p == g).count() as f64 / pairs.len() as f64;
        ensure!((m.accuracy - accuracy).abs() < 1e-9, "trial {trial}: accuracy");
        for c in 0..k {
            let t = props::tally(&pairs, c);
            let got = &m.per_class[c];
            ensure!(
                (got.precision - t.precision).abs() < 1e-9
                    && (got.recall - t.recall).abs() < 1e-9
                    && (got.f1 - t.f1).abs() < 1e-9,
                "trial {trial}, class {c}: metrics differ from tally"
            );
        }
    }

    let mut pairs_checked = 0;
    for b in 0..=60u64 {
        for c in 0..=60u64 {
            let oracle = exact_pvalue(b, c);
            let got = mcnemar_exact(b, c);
            ensure!((got - oracle).abs() < 1e-9, "exact p({b},{c}) = {got}, oracle {oracle}");
            if b + c < adsynth::evaluator::EXACT_LIMIT {
                ensure!((mcnemar(b, c) - oracle).abs() < 1e-9, "dispatch p({b},{c})");
            }
            pairs_checked += 1;
        }
    }
    Ok(format!(
        "{tuples} vote tuples, 100 confusion matrices, {pairs_checked} McNemar pairs"
    ))
}

// ---- training smoke ----

pub struct SmokeResult {
    pub accuracy: BTreeMap<(Task, Combination), f64>,
    pub stage_logs_ok: bool,
    pub reports: BTreeMap<Task, String>,
}

pub fn smoke_tiers(seed: u64) -> Result<TierData, String> {
    let gold = synthetic::gold(seed);
    let pool = synthetic::negative_pool(120, 30, seed + 1);
    let negatives = sample_negatives(
        &pool,
        &gold,
        &NegativeConfig {
            seed: seed + 2,
            ..NegativeConfig::default()
        },
        &StopWords::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        negatives.len() == 5 * gold.len(),
        "{} negatives for {} positives",
        negatives.len(),
        gold.len()
    );
    let ratios = SplitRatios::default();
    let gold_split = split(&gold, ratios, seed).map_err(|e| e.to_string())?;
    let negative_split = split(&negatives, ratios, seed).map_err(|e| e.to_string())?;
    Ok(TierData {
        gold: gold_split.merged(negative_split),
        silver: Some(synthetic::silver(seed + 3)),
        bronze: Some(synthetic::bronze(seed + 4)),
    })
}

pub fn run_smoke(seed: u64) -> Result<SmokeResult, String> {
    let schema = default_guideline();
    let tiers = smoke_tiers(seed)?;
    let backends: Vec<Arc<dyn ClassifierBackend>> = BackendSpec::default_toys().iter().map(|b| b.build()).collect();
    let mut config = TrainConfig::body();
    config.epochs = 3;
    config.seed = seed;

    let mut accuracy = BTreeMap::new();
    let mut stage_logs_ok = true;
    let mut reports = BTreeMap::new();
    for task in [Task::Binary, Task::Multiclass] {
        let k = task.num_classes(&schema);
        let mut predictions: BTreeMap<Combination, Vec<usize>> = BTreeMap::new();
        let mut golds = Vec::new();
        for combination in Combination::ALL {
            let staged = combine(&tiers, combination, task).map_err(|e| e.to_string())?;
            let ensemble = train_ensemble(&backends, &staged, &schema, &config).map_err(|e| e.to_string())?;
            let expected = combination.expected_stage_log();
            stage_logs_ok &= ensemble.stage_log == expected && ensemble.members.iter().all(|m| m.stage_log == expected);
            let texts: Vec<&str> = staged.test.iter().map(|s| s.text.as_str()).collect();
            let preds = ensemble_predict(&ensemble, &texts).map_err(|e| e.to_string())?;
            golds = staged.test.iter().map(|s| task.label_index(s.class_id)).collect();
            let preds: Vec<usize> = preds.iter().map(|c| task.label_index(*c)).collect();
            let m = metrics(&confusion(&preds, &golds, k).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            accuracy.insert((task, combination), m.accuracy);
            predictions.insert(combination, preds);
        }
        let mut cells = BTreeMap::new();
        for (combination, preds) in &predictions {
            let m = metrics(&confusion(preds, &golds, k).unwrap()).unwrap();
            let significant = *combination != Combination::Gold
                && significance_test(
                    &predictions[&Combination::Gold],
                    preds,
                    &golds,
                    SignificanceMethod::McNemar,
                )
                .map_err(|e| e.to_string())?
                .significant;
            cells.insert(*combination, ReportCell::from_metrics(&m, task, significant));
        }
        let rendered = render_report(&cells, task, &schema).map_err(|e| e.to_string())?;
        reports.insert(task, rendered.table.to_aligned());
    }
    Ok(SmokeResult {
        accuracy,
        stage_logs_ok,
        reports,
    })
}

pub fn training_smoke() -> Outcome {
    let started = Instant::now();
    let result = run_smoke(7)?;
    ensure!(result.stage_logs_ok, "a stage log does not match its combination");
    ensure!(result.accuracy.len() == 8, "{} cells trained", result.accuracy.len());
    ensure!(result.reports.len() == 2, "missing report tables");
    let acc = |c| result.accuracy[&(Task::Multiclass, c)];
    let gold = acc(Combination::Gold);
    for c in [Combination::GoldBronze, Combination::GoldBronzeSilver] {
        ensure!(
            acc(c) >= gold,
            "multiclass {} accuracy {:.3} below gold-only {gold:.3}",
            c.code(),
            acc(c)
        );
    }
    within(started.elapsed(), Duration::from_secs(300), "training smoke")?;
    Ok(format!(
        "8 cells in {:.1?}; multiclass accuracy G {:.3}, G+B {:.3}, G+S {:.3}, G+B+S {:.3}",
        started.elapsed(),
        gold,
        acc(Combination::GoldBronze),
        acc(Combination::GoldSilver),
        acc(Combination::GoldBronzeSilver)
    ))
}

// ---- stats ----

pub fn stats_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut lengths = Vec::new();
    let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
    let items: Vec<LabeledSentence> = (0..1000)
        .map(|i| {
            let n = rng.random_range(1..60usize);
            let class_id = rng.random_range(1..=9u8);
            lengths.push(n);
            *counts.entry(class_id).or_default() += 1;
            let mut words: Vec<String> = (0..n - 1).map(|j| format!("w{}", (i * 7 + j) % 97)).collect();
            words.push(format!("s{i}"));
            LabeledSentence::new(words.join(" "), class_id, Tier::Gold, Provenance::default()).unwrap()
        })
        .collect();
    for (item, n) in items.iter().zip(&lengths) {
        ensure!(token_count(&item.text) == *n, "token count of {:?}", item.text);
    }

    // Welford's running mean and variance
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for (i, &n) in lengths.iter().enumerate() {
        let x = n as f64;
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let sd = (m2 / (lengths.len() - 1) as f64).sqrt();

    let s = stats(&items);
    ensure!((s.mean_length - mean).abs() < 1e-9, "mean {} vs {mean}", s.mean_length);
    ensure!((s.sd_length - sd).abs() < 1e-9, "sd {} vs {sd}", s.sd_length);
    ensure!(s.counts == counts && s.total == 1000, "counts differ");

    let schema = default_guideline();
    let table = stats_table(&[("Gold", &s)], &schema);
    let text = table.to_delimited('\t');
    let lines: Vec<Vec<&str>> = text.lines().map(|l| l.split('\t').collect()).collect();
    ensure!(lines[0] == ["Category", "Gold"], "header {:?}", lines[0]);
    ensure!(lines.len() == 12, "{} lines", lines.len());
    for (line, category) in lines[1..10].iter().zip(schema.categories()) {
        ensure!(line[0] == category.display_label(), "row {:?}", line[0]);
        ensure!(
            line[1] == counts.get(&category.id).copied().unwrap_or(0).to_string(),
            "count for {}",
            line[0]
        );
    }
    ensure!(lines[10] == ["Total", "1000"], "total row {:?}", lines[10]);
    let summary = format!("{mean:.2} +/- {sd:.2}");
    ensure!(
        lines[11] == ["Avg length +/- SD (tokens)", summary.as_str()],
        "length row {:?}",
        lines[11]
    );
    Ok(format!(
        "mean {mean:.4}, sd {sd:.4} over 1000 items; table layout matches"
    ))
}
