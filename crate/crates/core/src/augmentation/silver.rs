use std::collections::{BTreeMap, HashMap, HashSet};

use super::{
    run_concurrently, segment_text, AnnotationRecord, AugmentConfig, AugmentError, RunReport, SourceNote, Stage,
};
use crate::corpus::{LabeledSentence, Provenance, Tier};
use crate::gateway::{CompletionRequest, Gateway, GatewayError};
use crate::prompt::{
    build_annotation_prompt, build_verification_prompt, parse_annotation_output, parse_verification_output,
    AnnotationItem,
};
use crate::taxonomy::GuidelineSchema;
use crate::text::collapse_whitespace;

fn annotate_tag(note_id: &str, chunk: usize) -> String {
    format!("annotate:{note_id}:{chunk}")
}

fn verify_tag(note_id: &str, chunk: usize) -> String {
    format!("verify:{note_id}:{chunk}")
}

/// Splits a note into sentence-aligned slices of at most `chunk_words`
/// words each (a single over-long sentence forms its own chunk). Notes
/// within the budget come back whole.
pub fn chunk_note(text: &str, chunk_words: usize) -> Vec<&str> {
    if text.split_whitespace().count() <= chunk_words.max(1) {
        return if text.trim().is_empty() {
            Vec::new()
        } else {
            vec![text.trim()]
        };
    }
    let base = text.as_ptr() as usize;
    let mut chunks = Vec::new();
    let mut start: Option<usize> = None;
    let mut end = 0;
    let mut words = 0;
    for sentence in segment_text(text) {
        let s = sentence.as_ptr() as usize - base;
        let n = sentence.split_whitespace().count();
        if let Some(cs) = start {
            if words + n > chunk_words {
                chunks.push(&text[cs..end]);
                start = None;
                words = 0;
            }
        }
        start.get_or_insert(s);
        end = s + sentence.len();
        words += n;
    }
    if let Some(cs) = start {
        chunks.push(&text[cs..end]);
    }
    chunks
}

fn check_notes(notes: &[SourceNote]) -> Result<(), AugmentError> {
    let mut ids = HashSet::new();
    for note in notes {
        if !ids.insert(note.note_id.as_str()) {
            return Err(AugmentError::InvalidInput(format!(
                "duplicate note_id {}",
                note.note_id
            )));
        }
        if note.text.trim().is_empty() {
            return Err(AugmentError::InvalidInput(format!(
                "note {} has empty text",
                note.note_id
            )));
        }
    }
    Ok(())
}

struct ChunkJob<'a> {
    note_id: &'a str,
    chunk: usize,
    text: &'a str,
}

fn chunk_jobs<'a>(notes: &'a [SourceNote], config: &AugmentConfig) -> Vec<ChunkJob<'a>> {
    let mut jobs = Vec::new();
    for note in notes {
        for (chunk, text) in chunk_note(&note.text, config.chunk_words).into_iter().enumerate() {
            jobs.push(ChunkJob {
                note_id: &note.note_id,
                chunk,
                text,
            });
        }
    }
    jobs
}

/// Request-level failures become skips; configuration and store problems
/// abort the run.
fn absorb(err: GatewayError, tag: &str, report: &mut RunReport) -> Result<(), AugmentError> {
    if err.is_config() {
        return Err(err.into());
    }
    report.gateway_failures += 1;
    report.skip(tag, err);
    Ok(())
}

fn sort_records(records: &mut [AnnotationRecord]) {
    // stable, so appearance order within a chunk is kept
    records.sort_by(|a, b| (a.note_id.as_str(), a.chunk).cmp(&(b.note_id.as_str(), b.chunk)));
}

/// Runs the annotation prompt over every note (chunk) and returns one record
/// per valid, distinct annotation, ordered by note id then appearance.
pub fn annotate_notes(
    notes: &[SourceNote],
    schema: &GuidelineSchema,
    gateway: &Gateway,
    config: &AugmentConfig,
    report: &mut RunReport,
) -> Result<Vec<AnnotationRecord>, AugmentError> {
    check_notes(notes)?;
    report.notes += notes.len();
    let jobs = chunk_jobs(notes, config);
    let mut requests = Vec::with_capacity(jobs.len());
    for job in &jobs {
        requests.push(CompletionRequest {
            prompt: build_annotation_prompt(job.text, schema, &config.prompt)?,
            model_id: config.model_id.clone(),
            max_output_tokens: config.max_output_tokens,
            temperature: config.annotate_temperature,
            request_tag: annotate_tag(job.note_id, job.chunk),
        });
    }
    let responses = run_concurrently(&requests, gateway.config().max_in_flight, |r| gateway.complete(r));
    report.requests += requests.len();

    let mut records = Vec::new();
    for ((job, request), response) in jobs.iter().zip(&requests).zip(responses) {
        let tag = &request.request_tag;
        let response = match response {
            Ok(r) => r,
            Err(e) => {
                absorb(e, tag, report)?;
                continue;
            }
        };
        let parsed = match parse_annotation_output(&response.text, schema) {
            Ok(p) => p,
            Err(e) => {
                report.parse_skips += 1;
                report.skip(tag, e);
                continue;
            }
        };
        report.record_parse(tag, &parsed.report);
        let mut seen = HashSet::new();
        for item in parsed.items {
            if !seen.insert((collapse_whitespace(&item.sentence), item.class_id)) {
                report.duplicates += 1;
                continue;
            }
            records.push(AnnotationRecord {
                note_id: job.note_id.to_string(),
                chunk: job.chunk,
                sentence: item.sentence,
                class_id: item.class_id,
                verified: None,
                reason: None,
                source_stage: Stage::Annotate,
                request_tags: vec![tag.clone()],
            });
        }
    }
    sort_records(&mut records);
    report.annotated += records.len();
    Ok(records)
}

/// Asks the model to confirm each note's annotations and keeps only the
/// confirmed ones. Records without a matching verdict, rejected records and
/// records of notes whose verification failed are dropped and counted.
pub fn verify_annotations(
    records: Vec<AnnotationRecord>,
    notes: &[SourceNote],
    schema: &GuidelineSchema,
    gateway: &Gateway,
    config: &AugmentConfig,
    report: &mut RunReport,
) -> Result<Vec<AnnotationRecord>, AugmentError> {
    let jobs = chunk_jobs(notes, config);
    let text_of: HashMap<(&str, usize), &str> = jobs.iter().map(|j| ((j.note_id, j.chunk), j.text)).collect();

    let mut groups: BTreeMap<(String, usize), Vec<AnnotationRecord>> = BTreeMap::new();
    for record in records {
        groups
            .entry((record.note_id.clone(), record.chunk))
            .or_default()
            .push(record);
    }

    let mut requests = Vec::with_capacity(groups.len());
    for ((note_id, chunk), group) in &groups {
        let Some(text) = text_of.get(&(note_id.as_str(), *chunk)) else {
            return Err(AugmentError::InvalidInput(format!(
                "record refers to unknown note {note_id} chunk {chunk}"
            )));
        };
        let items: Vec<AnnotationItem> = group
            .iter()
            .map(|r| AnnotationItem {
                sentence: r.sentence.clone(),
                class_id: r.class_id,
            })
            .collect();
        requests.push(CompletionRequest {
            prompt: build_verification_prompt(text, schema, &items, &config.prompt)?,
            model_id: config.model_id.clone(),
            max_output_tokens: config.max_output_tokens,
            temperature: config.annotate_temperature,
            request_tag: verify_tag(note_id, *chunk),
        });
    }
    let responses = run_concurrently(&requests, gateway.config().max_in_flight, |r| gateway.complete(r));
    report.requests += requests.len();

    let mut kept = Vec::new();
    for ((_, group), (request, response)) in groups.into_iter().zip(requests.iter().zip(responses)) {
        let tag = &request.request_tag;
        let response = match response {
            Ok(r) => r,
            Err(e) => {
                absorb(e, tag, report)?;
                report.verify_dropped += group.len();
                continue;
            }
        };
        let parsed = match parse_verification_output(&response.text, schema) {
            Ok(p) => p,
            Err(e) => {
                report.parse_skips += 1;
                report.verify_dropped += group.len();
                report.skip(tag, e);
                continue;
            }
        };
        report.record_parse(tag, &parsed.report);
        let mut verdicts: HashMap<(String, u8), (bool, String)> = HashMap::new();
        for item in parsed.items {
            verdicts
                .entry((collapse_whitespace(&item.sentence), item.class_id))
                .or_insert((item.decision, item.reason));
        }
        for mut record in group {
            match verdicts.get(&(collapse_whitespace(&record.sentence), record.class_id)) {
                None => report.unreconciled += 1,
                Some((false, _)) => report.verified_false += 1,
                Some((true, reason)) => {
                    report.verified_true += 1;
                    record.verified = Some(true);
                    record.reason = Some(reason.clone());
                    record.source_stage = Stage::Verify;
                    record.request_tags.push(tag.clone());
                    kept.push(record);
                }
            }
        }
    }
    sort_records(&mut kept);
    Ok(kept)
}

/// Annotate, verify and convert the survivors to silver sentences.
pub fn run_silver(
    notes: &[SourceNote],
    schema: &GuidelineSchema,
    gateway: &Gateway,
    config: &AugmentConfig,
) -> Result<(Vec<LabeledSentence>, RunReport), AugmentError> {
    let mut report = RunReport::default();
    let records = annotate_notes(notes, schema, gateway, config, &mut report)?;
    let verified = verify_annotations(records, notes, schema, gateway, config, &mut report)?;
    let mut out = Vec::with_capacity(verified.len());
    for record in verified {
        let provenance = Provenance {
            note_id: Some(record.note_id),
            request_tags: record.request_tags,
            stages: vec!["annotate".into(), "verify".into()],
            reason: record.reason,
            source_text: None,
        };
        let sentence = LabeledSentence::new(record.sentence, record.class_id, Tier::Silver, provenance)
            .map_err(|e| AugmentError::InvalidInput(e.to_string()))?;
        out.push(sentence);
    }
    report.accepted = out.len();
    Ok((out, report))
}
