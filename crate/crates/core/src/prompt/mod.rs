//! Prompt templates for annotation, verification and generation, and
//! tolerant parsing of the JSON the model is asked to return.

mod extract;
mod templates;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::taxonomy::GuidelineSchema;
use crate::text::collapse_whitespace;

pub use extract::{find_json_array, JsonArrayMatch};
pub use templates::{
    block_between, build_annotation_prompt, build_generation_prompt, build_verification_prompt, ANNOTATE_TASK,
    ANNOTATION_END, ANNOTATION_START, GENERATE_TASK, GUIDELINE_END, GUIDELINE_START, TEXT_END, TEXT_START, VERIFY_TASK,
};

/// Per-model prompt adjustments. The default leaves templates untouched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptOptions {
    /// Appended on its own line after the format instruction.
    #[serde(default)]
    pub suffix: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationItem {
    pub sentence: String,
    #[serde(rename = "class")]
    pub class_id: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationItem {
    pub sentence: String,
    #[serde(rename = "class")]
    pub class_id: u8,
    pub decision: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedAnnotation {
    pub sentence: String,
    pub class_id: u8,
    /// False when the sentence does not occur in the generated note text.
    pub anchored: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedNote {
    pub note_text: String,
    pub annotations: Vec<GeneratedAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum RejectReason {
    NotAnObject,
    MissingField(String),
    WrongType(String),
    EmptySentence,
    InvalidClass(String),
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::NotAnObject => write!(f, "element is not an object"),
            RejectReason::MissingField(k) => write!(f, "missing field `{k}`"),
            RejectReason::WrongType(k) => write!(f, "field `{k}` has the wrong type"),
            RejectReason::EmptySentence => write!(f, "sentence is empty"),
            RejectReason::InvalidClass(v) => write!(f, "class {v} is not in the schema"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub index: usize,
    pub reason: RejectReason,
}

/// Counts for one parsed model output.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub valid: usize,
    pub rejected: Vec<Rejection>,
    pub unanchored: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    pub report: ParseReport,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("note text is empty")]
    EmptyNote,
    #[error("guideline has no categories")]
    EmptyGuideline,
    #[error("no annotations to verify")]
    EmptyAnnotationSet,
    #[error("no JSON array of objects found in model output")]
    NoJsonFound,
    #[error("all {} items in the model output were invalid", .0.rejected.len())]
    AllItemsInvalid(ParseReport),
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value, RejectReason> {
    obj.get(key).ok_or_else(|| RejectReason::MissingField(key.into()))
}

fn sentence_field(obj: &Map<String, Value>) -> Result<String, RejectReason> {
    let s = field(obj, "sentence")?
        .as_str()
        .ok_or_else(|| RejectReason::WrongType("sentence".into()))?
        .trim();
    if s.is_empty() {
        return Err(RejectReason::EmptySentence);
    }
    Ok(s.to_string())
}

fn class_field(obj: &Map<String, Value>, schema: &GuidelineSchema) -> Result<u8, RejectReason> {
    let v = field(obj, "class")?;
    let n = match v {
        Value::Number(n) => n.as_i64().ok_or_else(|| RejectReason::WrongType("class".into()))?,
        _ => return Err(RejectReason::WrongType("class".into())),
    };
    if !schema.contains(n) {
        return Err(RejectReason::InvalidClass(n.to_string()));
    }
    Ok(n as u8)
}

fn annotation_from(value: &Value, schema: &GuidelineSchema) -> Result<AnnotationItem, RejectReason> {
    let obj = value.as_object().ok_or(RejectReason::NotAnObject)?;
    Ok(AnnotationItem {
        sentence: sentence_field(obj)?,
        class_id: class_field(obj, schema)?,
    })
}

fn verification_from(value: &Value, schema: &GuidelineSchema) -> Result<VerificationItem, RejectReason> {
    let obj = value.as_object().ok_or(RejectReason::NotAnObject)?;
    let sentence = sentence_field(obj)?;
    let class_id = class_field(obj, schema)?;
    let decision = field(obj, "decision")?
        .as_bool()
        .ok_or_else(|| RejectReason::WrongType("decision".into()))?;
    let reason = field(obj, "reason")?
        .as_str()
        .ok_or_else(|| RejectReason::WrongType("reason".into()))?
        .trim()
        .to_string();
    Ok(VerificationItem {
        sentence,
        class_id,
        decision,
        reason,
    })
}

fn validate_all<T>(
    elements: &[Value],
    schema: &GuidelineSchema,
    convert: impl Fn(&Value, &GuidelineSchema) -> Result<T, RejectReason>,
) -> Result<Parsed<T>, PromptError> {
    let mut items = Vec::new();
    let mut report = ParseReport::default();
    for (index, element) in elements.iter().enumerate() {
        match convert(element, schema) {
            Ok(item) => items.push(item),
            Err(reason) => {
                log::warn!("rejected model output item {index}: {reason}");
                report.rejected.push(Rejection { index, reason });
            }
        }
    }
    report.valid = items.len();
    if items.is_empty() && !report.rejected.is_empty() {
        return Err(PromptError::AllItemsInvalid(report));
    }
    Ok(Parsed { items, report })
}

/// Parses an annotation response. An empty array is a valid "nothing to
/// annotate" answer.
pub fn parse_annotation_output(raw: &str, schema: &GuidelineSchema) -> Result<Parsed<AnnotationItem>, PromptError> {
    let found = find_json_array(raw).ok_or(PromptError::NoJsonFound)?;
    validate_all(&found.elements, schema, annotation_from)
}

pub fn parse_verification_output(raw: &str, schema: &GuidelineSchema) -> Result<Parsed<VerificationItem>, PromptError> {
    let found = find_json_array(raw).ok_or(PromptError::NoJsonFound)?;
    validate_all(&found.elements, schema, verification_from)
}

fn is_trailer_line(line: &str) -> bool {
    let t = line.trim().trim_end_matches(':').trim().to_ascii_lowercase();
    t.is_empty()
        || t.starts_with("```")
        || matches!(
            t.as_str(),
            "annotation" | "annotations" | "json" | "annotation output" | "output"
        )
}

/// Splits a generation response into the narrative before the first JSON
/// array and the annotations in it.
pub fn parse_generation_output(
    raw: &str,
    schema: &GuidelineSchema,
) -> Result<(GeneratedNote, ParseReport), PromptError> {
    let found = find_json_array(raw).ok_or(PromptError::NoJsonFound)?;
    let mut lines: Vec<&str> = raw[..found.start].lines().collect();
    while lines.last().is_some_and(|l| is_trailer_line(l)) {
        lines.pop();
    }
    while lines
        .first()
        .is_some_and(|l| l.trim().starts_with("```") || l.trim().is_empty())
    {
        lines.remove(0);
    }
    let note_text = lines.join("\n").trim().to_string();
    if note_text.is_empty() {
        return Err(PromptError::EmptyNote);
    }
    let parsed = validate_all(&found.elements, schema, annotation_from)?;
    let haystack = collapse_whitespace(&note_text);
    let mut report = parsed.report;
    let annotations: Vec<GeneratedAnnotation> = parsed
        .items
        .into_iter()
        .map(|item| {
            let anchored = haystack.contains(&collapse_whitespace(&item.sentence));
            GeneratedAnnotation {
                sentence: item.sentence,
                class_id: item.class_id,
                anchored,
            }
        })
        .collect();
    report.unanchored = annotations.iter().filter(|a| !a.anchored).count();
    Ok((GeneratedNote { note_text, annotations }, report))
}
