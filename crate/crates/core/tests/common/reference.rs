//! Straight-line recount of silver verification outcomes, read directly from
//! the transcript JSON files without going through the library parsers.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde_json::Value;

#[derive(Debug, Default, PartialEq, Eq)]
pub struct SilverCounts {
    pub annotated: usize,
    pub decision_true: usize,
    pub decision_false: usize,
    pub unreconciled: usize,
    /// (note id, collapsed sentence, class) of every surviving annotation.
    pub kept: BTreeSet<(String, String, u64)>,
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Elements of the outermost `[...]` in a response. The fixtures hold one
/// array each, so first `[` to last `]` is enough here.
fn array_in(text: &str) -> Vec<Value> {
    let start = text.find('[').expect("response has an array");
    let end = text.rfind(']').expect("response has an array") + 1;
    match serde_json::from_str(&text[start..end]).expect("fixture array is valid JSON") {
        Value::Array(items) => items,
        _ => unreachable!(),
    }
}

pub fn silver_counts(transcript_dir: &Path) -> SilverCounts {
    let mut responses: BTreeMap<String, String> = BTreeMap::new();
    for entry in std::fs::read_dir(transcript_dir).unwrap() {
        let path = entry.unwrap().path();
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let tag = doc["request"]["request_tag"].as_str().unwrap().to_string();
        let text = doc["response"]["text"].as_str().unwrap().to_string();
        responses.insert(tag, text);
    }

    let mut counts = SilverCounts::default();
    for (tag, text) in &responses {
        let Some(rest) = tag.strip_prefix("annotate:") else {
            continue;
        };
        let note_id = rest.rsplit_once(':').unwrap().0.to_string();
        let mut annotations: Vec<(String, u64)> = Vec::new();
        for item in array_in(text) {
            let key = (
                squash(item["sentence"].as_str().unwrap()),
                item["class"].as_u64().unwrap(),
            );
            if !annotations.contains(&key) {
                annotations.push(key);
            }
        }
        let verify = responses
            .get(&format!("verify:{rest}"))
            .expect("every annotated chunk was verified");
        let mut verdicts: BTreeMap<(String, u64), bool> = BTreeMap::new();
        for item in array_in(verify) {
            let key = (
                squash(item["sentence"].as_str().unwrap()),
                item["class"].as_u64().unwrap(),
            );
            verdicts.entry(key).or_insert(item["decision"].as_bool().unwrap());
        }
        counts.annotated += annotations.len();
        for key in annotations {
            match verdicts.get(&key) {
                Some(true) => {
                    counts.decision_true += 1;
                    counts.kept.insert((note_id.clone(), key.0, key.1));
                }
                Some(false) => counts.decision_false += 1,
                None => counts.unreconciled += 1,
            }
        }
    }
    counts
}
