use std::collections::HashSet;
use std::sync::LazyLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{normalize, CorpusError, LabeledSentence, Provenance, Tier};
use crate::augmentation::{segment_sentences, SourceNote};
use crate::text;

pub const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    /// One word per line; `#` starts a comment line.
    pub fn parse(list: &str) -> Self {
        StopWords(
            list.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(&word.to_lowercase())
    }

    /// Word tokens left after dropping punctuation and stop words.
    pub fn content_tokens(&self, sentence: &str) -> usize {
        text::tokens(sentence)
            .into_iter()
            .filter(|t| text::is_word(t) && !self.contains(t))
            .count()
    }
}

impl Default for StopWords {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeConfig {
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_min_content_tokens")]
    pub min_content_tokens: usize,
}

fn default_ratio() -> f64 {
    5.0
}

fn default_min_content_tokens() -> usize {
    5
}

impl Default for NegativeConfig {
    fn default() -> Self {
        NegativeConfig {
            ratio: default_ratio(),
            seed: 0,
            min_content_tokens: default_min_content_tokens(),
        }
    }
}

static KEY_VALUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:^|\s)[A-Za-z][A-Za-z0-9 /()]{0,24}:\s*[^\s:]+").unwrap());
static YES_NO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(yes|no|y)\s*/\s*(yes|no|n)\b").unwrap());

/// Heuristic for table rows, form fields and questionnaire items.
pub fn is_table_like(line: &str) -> bool {
    const CHECKBOXES: [&str; 8] = ["☐", "☑", "☒", "□", "■", "[ ]", "[x]", "[X]"];
    if CHECKBOXES.iter().any(|c| line.contains(c)) || line.contains("( )") {
        return true;
    }
    if line.matches('|').count() >= 2 || line.contains('\t') {
        return true;
    }
    let visible: Vec<char> = line.chars().filter(|c| !c.is_whitespace()).collect();
    if visible.is_empty() {
        return false;
    }
    let delimiters = visible.iter().filter(|c| "|_=-*#~:".contains(**c)).count();
    if delimiters * 4 >= visible.len() {
        return true;
    }
    KEY_VALUE.find_iter(line).count() >= 3 || YES_NO.is_match(line)
}

/// Draws `round(ratio * |positives|)` negative sentences from the pool notes.
/// Candidates that match a positive (after normalization), fall below the
/// content-token minimum, or look like table/form lines are excluded.
pub fn sample_negatives(
    pool_notes: &[SourceNote],
    positives: &[LabeledSentence],
    config: &NegativeConfig,
    stop_words: &StopWords,
) -> Result<Vec<LabeledSentence>, CorpusError> {
    let required = (config.ratio * positives.len() as f64).round() as usize;
    let positive_texts: HashSet<String> = positives.iter().map(LabeledSentence::normalized).collect();
    let mut seen = HashSet::new();
    let mut eligible: Vec<(String, &str)> = Vec::new();
    for note in pool_notes {
        for sentence in segment_sentences(note) {
            let key = normalize(sentence);
            if positive_texts.contains(&key) || !seen.insert(key) {
                continue;
            }
            if stop_words.content_tokens(sentence) < config.min_content_tokens || is_table_like(sentence) {
                continue;
            }
            eligible.push((sentence.to_string(), note.note_id.as_str()));
        }
    }
    if eligible.len() < required {
        return Err(CorpusError::InsufficientPool {
            eligible: eligible.len(),
            required,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut picked = rand::seq::index::sample(&mut rng, eligible.len(), required).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|i| {
            let (text, note_id) = &eligible[i];
            LabeledSentence {
                text: text.clone(),
                class_id: 0,
                tier: Tier::Negative,
                provenance: Provenance {
                    note_id: Some(note_id.to_string()),
                    stages: vec!["negative-sampling".into()],
                    ..Provenance::default()
                },
            }
        })
        .collect())
}
