//! Annotation guideline schema.
//!
//! A guideline is a flat list of numbered categories written in a delimited
//! plain-text format:
//!
//! ```text
//! |Start of annotation schema|
//! <free preamble>
//! |Class begin|
//! Class 1:
//! |Title begin| Cognitive impairment |Title end|
//! |Definition begin|
//! ...definition lines, kept verbatim...
//! |Definition end|
//! |Class end|
//! |End of annotation schema|
//! ```
//!
//! Delimiter lines are matched after trimming. Definition text is kept byte
//! for byte so that prompts embed exactly what the experts wrote.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const SCHEMA_START: &str = "|Start of annotation schema|";
const SCHEMA_END: &str = "|End of annotation schema|";
const CLASS_BEGIN: &str = "|Class begin|";
const CLASS_END: &str = "|Class end|";
const TITLE_BEGIN: &str = "|Title begin|";
const TITLE_END: &str = "|Title end|";
const DEFINITION_BEGIN: &str = "|Definition begin|";
const DEFINITION_END: &str = "|Definition end|";

/// The guideline shipped with the toolkit (nine Alzheimer's disease sign and
/// symptom categories).
pub const DEFAULT_GUIDELINE: &str = include_str!("../data/ad_guideline.txt");

/// Short display labels used in dataset and result tables. Matching is always
/// by id; these only affect rendering.
const DISPLAY_LABELS: [(u8, &str); 9] = [
    (1, "Cognitive impairment"),
    (2, "Notice/concern by others"),
    (3, "Requires assistance"),
    (4, "Physiological changes"),
    (5, "Cognitive assessment"),
    (6, "Cognitive intervention/therapy"),
    (7, "Diagnostic tests"),
    (8, "Coping strategy"),
    (9, "Neuropsychiatric symptoms"),
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("malformed guideline at line {line}: {reason}")]
    MalformedGuideline { line: usize, reason: String },
    #[error("class {0} is defined more than once")]
    DuplicateClass(u8),
    #[error("class ids must cover 1..={max} contiguously; missing {missing:?}")]
    MissingClass { max: u8, missing: Vec<u8> },
    #[error("class {0} has an empty title")]
    EmptyTitle(u8),
    #[error("class {0} has an empty definition")]
    EmptyDefinition(u8),
    #[error("unknown category id {0}")]
    UnknownCategory(i64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u8,
    pub title: String,
    pub definition: String,
}

impl Category {
    /// Table label for this category; falls back to the title for ids outside
    /// the built-in alias table.
    pub fn display_label(&self) -> &str {
        DISPLAY_LABELS
            .iter()
            .find(|(id, _)| *id == self.id)
            .map(|(_, label)| *label)
            .unwrap_or(self.title.as_str())
    }
}

/// A parsed guideline. Equality is structural (preamble and categories);
/// the raw source text is carried along but not compared.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuidelineSchema {
    preamble: String,
    categories: Vec<Category>,
    raw_text: String,
}

impl PartialEq for GuidelineSchema {
    fn eq(&self, other: &Self) -> bool {
        self.preamble == other.preamble && self.categories == other.categories
    }
}

impl Eq for GuidelineSchema {}

impl GuidelineSchema {
    /// Builds a schema from categories directly. Ids must be exactly 1..=K.
    pub fn from_categories(preamble: impl Into<String>, mut categories: Vec<Category>) -> Result<Self, TaxonomyError> {
        categories.sort_by_key(|c| c.id);
        validate(&categories)?;
        let mut schema = GuidelineSchema {
            preamble: preamble.into().trim().to_string(),
            categories,
            raw_text: String::new(),
        };
        schema.raw_text = render_guideline(&schema);
        Ok(schema)
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn preamble(&self) -> &str {
        &self.preamble
    }

    pub fn raw_text(&self) -> &str {
        &self.raw_text
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn contains(&self, id: i64) -> bool {
        self.category_by_id(id).is_ok()
    }

    pub fn ids(&self) -> impl Iterator<Item = u8> + '_ {
        self.categories.iter().map(|c| c.id)
    }

    pub fn category_by_id(&self, id: i64) -> Result<&Category, TaxonomyError> {
        // ids are contiguous from 1, so position is id - 1
        usize::try_from(id)
            .ok()
            .and_then(|i| i.checked_sub(1))
            .and_then(|i| self.categories.get(i))
            .ok_or(TaxonomyError::UnknownCategory(id))
    }
}

/// Loads the built-in guideline.
pub fn default_guideline() -> GuidelineSchema {
    load_guideline(DEFAULT_GUIDELINE).expect("bundled guideline is well-formed")
}

pub fn category_by_id(schema: &GuidelineSchema, id: i64) -> Result<&Category, TaxonomyError> {
    schema.category_by_id(id)
}

fn malformed(line: usize, reason: impl Into<String>) -> TaxonomyError {
    TaxonomyError::MalformedGuideline {
        line,
        reason: reason.into(),
    }
}

fn parse_class_header(line: &str) -> Option<u8> {
    let rest = line.trim().strip_prefix("Class")?;
    let rest = rest.trim_start();
    let digits_end = rest.find(|c: char| !c.is_ascii_digit())?;
    if digits_end == 0 {
        return None;
    }
    let (digits, tail) = rest.split_at(digits_end);
    if tail.trim() != ":" {
        return None;
    }
    digits.parse().ok()
}

/// Extracts the text between `begin` and `end` markers, which may span
/// several lines starting at `lines[*pos]`. Advances `pos` past the end line.
fn take_inline_block(lines: &[&str], pos: &mut usize, begin: &str, end: &str) -> Result<String, TaxonomyError> {
    let start_line = *pos;
    let first = lines[*pos].trim();
    let after_begin = first
        .strip_prefix(begin)
        .ok_or_else(|| malformed(start_line + 1, format!("expected {begin}")))?;
    let mut collected = String::new();
    let mut current = after_begin.to_string();
    loop {
        if let Some(idx) = current.find(end) {
            if !current[idx + end.len()..].trim().is_empty() {
                return Err(malformed(*pos + 1, format!("trailing text after {end}")));
            }
            collected.push_str(&current[..idx]);
            *pos += 1;
            return Ok(collected);
        }
        collected.push_str(&current);
        collected.push('\n');
        *pos += 1;
        if *pos >= lines.len() {
            return Err(malformed(start_line + 1, format!("unterminated {begin}")));
        }
        current = lines[*pos].to_string();
    }
}

pub fn load_guideline(source: &str) -> Result<GuidelineSchema, TaxonomyError> {
    let lines: Vec<&str> = source.lines().collect();
    let start = lines
        .iter()
        .position(|l| l.trim() == SCHEMA_START)
        .ok_or_else(|| malformed(1, format!("missing {SCHEMA_START}")))?;
    let end = lines
        .iter()
        .rposition(|l| l.trim() == SCHEMA_END)
        .ok_or_else(|| malformed(lines.len().max(1), format!("missing {SCHEMA_END}")))?;
    if end < start {
        return Err(malformed(end + 1, "schema end precedes schema start"));
    }

    let body = &lines[start + 1..end];
    let offset = start + 2; // 1-based line number of body[0]
    let mut pos = 0;
    let mut preamble = Vec::new();
    while pos < body.len() && body[pos].trim() != CLASS_BEGIN {
        let t = body[pos].trim();
        if is_delimiter(t) {
            return Err(malformed(pos + offset, format!("unexpected delimiter {t}")));
        }
        preamble.push(body[pos]);
        pos += 1;
    }

    let mut categories: Vec<Category> = Vec::new();
    while pos < body.len() {
        let t = body[pos].trim();
        if t.is_empty() {
            pos += 1;
            continue;
        }
        if t != CLASS_BEGIN {
            return Err(malformed(pos + offset, format!("expected {CLASS_BEGIN}, found {t:?}")));
        }
        pos += 1;
        let category = parse_class(body, &mut pos, offset)?;
        if categories.iter().any(|c| c.id == category.id) {
            return Err(TaxonomyError::DuplicateClass(category.id));
        }
        categories.push(category);
    }

    categories.sort_by_key(|c| c.id);
    validate(&categories)?;
    Ok(GuidelineSchema {
        preamble: preamble.join("\n").trim().to_string(),
        categories,
        raw_text: source.to_string(),
    })
}

fn is_delimiter(t: &str) -> bool {
    [
        SCHEMA_START,
        SCHEMA_END,
        CLASS_BEGIN,
        CLASS_END,
        TITLE_BEGIN,
        DEFINITION_BEGIN,
        DEFINITION_END,
    ]
    .iter()
    .any(|d| t.starts_with(d))
}

fn skip_blank(lines: &[&str], pos: &mut usize) {
    while *pos < lines.len() && lines[*pos].trim().is_empty() {
        *pos += 1;
    }
}

fn parse_class(lines: &[&str], pos: &mut usize, offset: usize) -> Result<Category, TaxonomyError> {
    skip_blank(lines, pos);
    let header_line = *pos;
    let id = lines
        .get(*pos)
        .and_then(|l| parse_class_header(l))
        .ok_or_else(|| malformed(header_line + offset, "expected `Class N:` header"))?;
    *pos += 1;

    skip_blank(lines, pos);
    if *pos >= lines.len() || !lines[*pos].trim().starts_with(TITLE_BEGIN) {
        return Err(malformed(*pos + offset, format!("expected {TITLE_BEGIN}")));
    }
    let title = take_inline_block(lines, pos, TITLE_BEGIN, TITLE_END).map_err(|e| shift_line(e, offset))?;
    let title = title.trim().to_string();
    if title.is_empty() {
        return Err(TaxonomyError::EmptyTitle(id));
    }

    skip_blank(lines, pos);
    if *pos >= lines.len() || lines[*pos].trim() != DEFINITION_BEGIN {
        return Err(malformed(*pos + offset, format!("expected {DEFINITION_BEGIN}")));
    }
    *pos += 1;
    let def_start = *pos;
    while *pos < lines.len() && lines[*pos].trim() != DEFINITION_END {
        if lines[*pos].trim() == CLASS_END || lines[*pos].trim() == CLASS_BEGIN {
            return Err(malformed(*pos + offset, format!("missing {DEFINITION_END}")));
        }
        *pos += 1;
    }
    if *pos >= lines.len() {
        return Err(malformed(def_start + offset, format!("missing {DEFINITION_END}")));
    }
    let definition = lines[def_start..*pos].join("\n");
    if definition.trim().is_empty() {
        return Err(TaxonomyError::EmptyDefinition(id));
    }
    *pos += 1;

    skip_blank(lines, pos);
    if *pos >= lines.len() || lines[*pos].trim() != CLASS_END {
        return Err(malformed(*pos + offset, format!("expected {CLASS_END}")));
    }
    *pos += 1;
    Ok(Category { id, title, definition })
}

fn shift_line(err: TaxonomyError, offset: usize) -> TaxonomyError {
    match err {
        TaxonomyError::MalformedGuideline { line, reason } => TaxonomyError::MalformedGuideline {
            line: line + offset - 1,
            reason,
        },
        other => other,
    }
}

fn validate(categories: &[Category]) -> Result<(), TaxonomyError> {
    if categories.is_empty() {
        return Err(malformed(1, "schema contains no classes"));
    }
    for pair in categories.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(TaxonomyError::DuplicateClass(pair[0].id));
        }
    }
    for c in categories {
        if c.title.trim().is_empty() {
            return Err(TaxonomyError::EmptyTitle(c.id));
        }
        if c.definition.trim().is_empty() {
            return Err(TaxonomyError::EmptyDefinition(c.id));
        }
    }
    let max = categories.iter().map(|c| c.id).max().unwrap_or(0);
    let missing: Vec<u8> = (1..=max).filter(|id| !categories.iter().any(|c| c.id == *id)).collect();
    if categories[0].id == 0 {
        return Err(malformed(1, "class ids start at 1"));
    }
    if !missing.is_empty() {
        return Err(TaxonomyError::MissingClass { max, missing });
    }
    Ok(())
}

/// Renders the schema in canonical delimiter form. The output re-loads to a
/// schema equal to the input.
pub fn render_guideline(schema: &GuidelineSchema) -> String {
    let mut out = String::new();
    out.push_str(SCHEMA_START);
    out.push_str("\n\n");
    if !schema.preamble.is_empty() {
        out.push_str(&schema.preamble);
        out.push_str("\n\n");
    }
    for c in &schema.categories {
        let _ = writeln!(out, "{CLASS_BEGIN}");
        let _ = writeln!(out, "Class {}:", c.id);
        let _ = writeln!(out, "{TITLE_BEGIN} {} {TITLE_END}", c.title);
        let _ = writeln!(out, "{DEFINITION_BEGIN}");
        let _ = writeln!(out, "{}", c.definition);
        let _ = writeln!(out, "{DEFINITION_END}");
        let _ = writeln!(out, "{CLASS_END}");
        out.push('\n');
    }
    out.push_str(SCHEMA_END);
    out
}
