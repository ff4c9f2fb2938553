//! Pattern screen for protected health information in generated text.

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhiConfig {
    /// Names that must never appear, matched case-insensitively on word
    /// boundaries.
    #[serde(default)]
    pub name_blocklist: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PhiScreen {
    rules: Vec<(&'static str, Regex)>,
}

const PATTERNS: &[(&str, &str)] = &[
    ("phone", r"(?:\+?1[-. ]?)?\(?\b\d{3}\)?[-. ]\d{3}[-. ]\d{4}\b"),
    ("ssn", r"\b\d{3}-\d{2}-\d{4}\b"),
    ("date-of-birth", r"(?i)\b(?:dob|d\.o\.b|date of birth|born on)\b"),
    ("date", r"\b\d{1,2}/\d{1,2}/\d{2,4}\b"),
    ("date", r"\b(?:19|20)\d{2}-\d{1,2}-\d{1,2}\b"),
    (
        "date",
        r"(?i)\b(?:jan|feb|mar|apr|may|jun|jul|aug|sep|oct|nov|dec)[a-z]*\.?\s+\d{1,2}(?:st|nd|rd|th)?,?\s+(?:19|20)\d{2}\b",
    ),
    ("identifier", r"\b\d{6,}\b"),
    ("identifier", r"(?i)\b(?:mrn|medical record (?:number|no))\b"),
    ("email", r"[\w.+-]+@[\w-]+\.[\w.-]+"),
];

impl PhiScreen {
    pub fn new(config: &PhiConfig) -> Self {
        let mut rules: Vec<(&'static str, Regex)> = PATTERNS
            .iter()
            .map(|(kind, p)| (*kind, Regex::new(p).expect("PHI pattern compiles")))
            .collect();
        for name in config.name_blocklist.iter().map(|n| n.trim()).filter(|n| !n.is_empty()) {
            let re = Regex::new(&format!(r"(?i)\b{}\b", regex::escape(name))).expect("escaped name compiles");
            rules.push(("name", re));
        }
        PhiScreen { rules }
    }

    /// Kind of the first rule that matches, if any.
    pub fn check(&self, text: &str) -> Option<&'static str> {
        self.rules
            .iter()
            .find(|(_, re)| re.is_match(text))
            .map(|(kind, _)| *kind)
    }

    pub fn redact(&self, text: &str) -> String {
        let mut out = text.to_string();
        for (_, re) in &self.rules {
            out = re.replace_all(&out, "[REDACTED]").into_owned();
        }
        out
    }
}
