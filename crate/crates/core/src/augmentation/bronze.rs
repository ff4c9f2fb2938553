use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{run_concurrently, AugmentConfig, AugmentError, PhiScreen, RunReport};
use crate::corpus::{normalize, LabeledSentence, Provenance, Tier};
use crate::gateway::{CompletionRequest, Gateway};
use crate::prompt::{build_generation_prompt, parse_generation_output};
use crate::taxonomy::GuidelineSchema;

/// Per-category bronze targets and the request budget for reaching them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotaPlan {
    pub targets: BTreeMap<u8, usize>,
    pub max_requests: usize,
}

impl QuotaPlan {
    /// Same target for every category of the schema.
    pub fn uniform(schema: &GuidelineSchema, per_class: usize, max_requests: usize) -> Self {
        QuotaPlan {
            targets: schema.ids().map(|id| (id, per_class)).collect(),
            max_requests,
        }
    }

    pub fn validate(&self, schema: &GuidelineSchema) -> Result<(), AugmentError> {
        if self.max_requests == 0 {
            return Err(AugmentError::InvalidQuota("max_requests must be positive".into()));
        }
        if let Some(id) = self.targets.keys().find(|id| !schema.contains(i64::from(**id))) {
            return Err(AugmentError::InvalidQuota(format!(
                "category {id} is not in the guideline"
            )));
        }
        Ok(())
    }

    fn deficits(&self, counts: &BTreeMap<u8, usize>) -> BTreeMap<u8, usize> {
        self.targets
            .iter()
            .filter_map(|(id, target)| {
                let have = counts.get(id).copied().unwrap_or(0);
                (have < *target).then_some((*id, target - have))
            })
            .collect()
    }
}

const STEERING_CATEGORIES: usize = 3;

/// Names the most-deficient categories (largest gap first, then lower id).
/// The sample number keeps repeated requests distinct.
fn steering_text(sample: usize, deficits: &BTreeMap<u8, usize>, schema: &GuidelineSchema) -> String {
    let mut ranked: Vec<(u8, usize)> = deficits.iter().map(|(id, d)| (*id, *d)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let names: Vec<String> = ranked
        .iter()
        .take(STEERING_CATEGORIES)
        .filter_map(|(id, _)| schema.category_by_id(i64::from(*id)).ok())
        .map(|c| format!("{}. {}", c.id, c.title))
        .collect();
    format!(
        "Sample {sample}. Write a new note that includes sentences for these categories: {}.",
        names.join("; ")
    )
}

/// Generates annotated synthetic notes until every quota is met or the
/// request budget runs out. A shortfall is reported in
/// `RunReport::quota_unmet`; the partial output is still returned.
pub fn run_bronze(
    schema: &GuidelineSchema,
    gateway: &Gateway,
    quota: &QuotaPlan,
    config: &AugmentConfig,
) -> Result<(Vec<LabeledSentence>, RunReport), AugmentError> {
    quota.validate(schema)?;
    let screen = PhiScreen::new(&config.phi);
    let mut report = RunReport::default();
    let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    let mut issued = 0;

    loop {
        let deficits = quota.deficits(&counts);
        if deficits.is_empty() || issued >= quota.max_requests {
            break;
        }
        let batch = config.generation_batch.max(1).min(quota.max_requests - issued);
        let mut requests = Vec::with_capacity(batch);
        for sample in issued..issued + batch {
            let steering = steering_text(sample, &deficits, schema);
            requests.push(CompletionRequest {
                prompt: build_generation_prompt(schema, Some(&steering), &config.prompt)?,
                model_id: config.model_id.clone(),
                max_output_tokens: config.max_output_tokens,
                temperature: config.generate_temperature,
                request_tag: format!("generate:{sample}"),
            });
        }
        let responses = run_concurrently(&requests, gateway.config().max_in_flight, |r| gateway.complete(r));
        issued += batch;
        report.requests += batch;

        for (request, response) in requests.iter().zip(responses) {
            let tag = &request.request_tag;
            let response = match response {
                Ok(r) => r,
                Err(e) if e.is_config() => return Err(e.into()),
                Err(e) => {
                    report.gateway_failures += 1;
                    report.skip(tag, e);
                    continue;
                }
            };
            let (note, parse_report) = match parse_generation_output(&response.text, schema) {
                Ok(p) => p,
                Err(e) => {
                    report.parse_skips += 1;
                    report.skip(tag, e);
                    continue;
                }
            };
            report.record_parse(tag, &parse_report);
            report.notes += 1;
            let source_text = screen.redact(&note.note_text);
            for annotation in note.annotations.into_iter().filter(|a| a.anchored) {
                report.annotated += 1;
                if let Some(kind) = screen.check(&annotation.sentence) {
                    log::info!("{tag}: dropped sentence matching PHI rule {kind}");
                    report.phi_drops += 1;
                    continue;
                }
                let key = normalize(&annotation.sentence);
                if seen.contains(&key) {
                    report.duplicates += 1;
                    continue;
                }
                let target = quota.targets.get(&annotation.class_id).copied().unwrap_or(0);
                let have = counts.entry(annotation.class_id).or_insert(0);
                if *have >= target {
                    report.overflow += 1;
                    continue;
                }
                *have += 1;
                seen.insert(key);
                let provenance = Provenance {
                    note_id: Some(tag.clone()),
                    request_tags: vec![tag.clone()],
                    stages: vec!["generate".into()],
                    reason: None,
                    source_text: Some(source_text.clone()),
                };
                out.push(
                    LabeledSentence::new(annotation.sentence, annotation.class_id, Tier::Bronze, provenance)
                        .map_err(|e| AugmentError::InvalidInput(e.to_string()))?,
                );
            }
        }
    }

    let remaining = quota.deficits(&counts);
    if !remaining.is_empty() {
        log::warn!("bronze quotas unmet after {issued} requests: {remaining:?}");
        report.quota_unmet = Some(remaining);
    }
    report.accepted = out.len();
    Ok((out, report))
}
