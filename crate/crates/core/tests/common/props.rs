//! Property checks shared by the proptest suite and the acceptance runner.

use std::collections::{BTreeMap, HashSet};

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use adsynth::augmentation::SourceNote;
use adsynth::corpus::{
    deduplicate, normalize, sample_negatives, split, LabeledSentence, NegativeConfig, Provenance, SplitRatios,
    StopWords, Tier,
};
use adsynth::evaluator::{confusion, metrics, percent_change, significance_test, SignificanceMethod};

pub const CASES: u32 = 1000;

pub fn config() -> Config {
    Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    }
}

/// Runs `check` over `CASES` generated inputs.
pub fn run<S: Strategy>(strategy: S, check: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    TestRunner::new(config())
        .run(&strategy, check)
        .map_err(|e| e.to_string())
}

fn sentence(text: impl Into<String>, class_id: u8) -> LabeledSentence {
    let tier = if class_id == 0 { Tier::Negative } else { Tier::Gold };
    LabeledSentence::new(text, class_id, tier, Provenance::default()).unwrap()
}

// ---- split ----

pub fn split_input() -> impl Strategy<Value = (Vec<u8>, u64)> {
    (vec(0u8..6, 1..200), any::<u64>())
}

pub fn check_split((classes, seed): (Vec<u8>, u64)) -> Result<(), TestCaseError> {
    let items: Vec<LabeledSentence> = classes
        .iter()
        .enumerate()
        .map(|(i, &c)| sentence(format!("s{i}"), c))
        .collect();
    let ratios = SplitRatios::default();
    let out = split(&items, ratios, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let parts = [&out.train, &out.validation, &out.test];

    let mut seen = HashSet::new();
    for part in parts {
        for s in part.iter() {
            prop_assert!(seen.insert(s.text.clone()), "{} appears twice", s.text);
        }
    }
    prop_assert_eq!(seen.len(), items.len());

    let mut per_class: BTreeMap<u8, usize> = BTreeMap::new();
    for c in &classes {
        *per_class.entry(*c).or_default() += 1;
    }
    let fractions = [ratios.train, ratios.validation, ratios.test];
    for (&c, &n) in &per_class {
        for (part, r) in parts.iter().zip(fractions) {
            let got = part.iter().filter(|s| s.class_id == c).count() as f64;
            prop_assert!(
                (got - r * n as f64).abs() <= 1.0 + 1e-9,
                "class {} has {} of {} in a {} split",
                c,
                got,
                n,
                r
            );
        }
    }
    let again = split(&items, ratios, seed).unwrap();
    prop_assert_eq!(again, out);
    Ok(())
}

// ---- dedup ----

const DEDUP_WORDS: [&str; 4] = ["memory", "LOSS", "walks", "Daily"];

pub fn dedup_input() -> impl Strategy<Value = Vec<(Vec<usize>, bool, u8)>> {
    vec((vec(0usize..4, 1..4), any::<bool>(), 1u8..4), 0..60)
}

pub fn check_dedup(spec: Vec<(Vec<usize>, bool, u8)>) -> Result<(), TestCaseError> {
    let items: Vec<LabeledSentence> = spec
        .iter()
        .map(|(words, shout, c)| {
            let text: Vec<String> = words
                .iter()
                .map(|&w| {
                    if *shout {
                        DEDUP_WORDS[w].to_uppercase()
                    } else {
                        DEDUP_WORDS[w].to_string()
                    }
                })
                .collect();
            let sep = if *shout { "  " } else { " " };
            sentence(text.join(sep), *c)
        })
        .collect();
    let once = deduplicate(items.clone());
    prop_assert_eq!(once.items.len() + once.duplicates, items.len());

    // oracle: first item per normalized text, in input order
    let mut keys = HashSet::new();
    let expected: Vec<&LabeledSentence> = items.iter().filter(|s| keys.insert(normalize(&s.text))).collect();
    prop_assert_eq!(once.items.iter().collect::<Vec<_>>(), expected);

    let twice = deduplicate(once.items.clone());
    prop_assert_eq!(twice.duplicates, 0);
    prop_assert!(twice.conflicts.is_empty());
    prop_assert_eq!(twice.items, once.items);
    Ok(())
}

// ---- negatives ----

const CONTENT: [&str; 12] = [
    "zorvak", "melquin", "tarbosh", "quiddle", "frendor", "plinth", "gaskor", "velmire", "hobbin", "crustov", "wembly",
    "taskeen",
];
const STOPS: [&str; 3] = ["of", "and", "to"];

/// (content words, stop words, table row, word offset)
pub type PoolSentence = (usize, usize, bool, usize);

pub fn negatives_input() -> impl Strategy<Value = (Vec<PoolSentence>, Vec<usize>, usize, u64)> {
    (
        vec((0usize..9, 0usize..3, prop::bool::weighted(0.2), 0usize..12), 0..120),
        vec(any::<usize>(), 0..4),
        0usize..3,
        any::<u64>(),
    )
}

fn pool_sentence(&(content, stops, table, offset): &PoolSentence) -> String {
    let words: Vec<&str> = (0..content)
        .map(|k| CONTENT[(offset + 5 * k) % CONTENT.len()])
        .collect();
    let fillers: Vec<&str> = (0..stops).map(|k| STOPS[k]).collect();
    if table {
        format!("The | {} | {} |.", words.join(" "), fillers.join(" "))
    } else {
        let mut all = fillers;
        all.extend(words);
        format!("The {}.", all.join(" "))
    }
}

pub fn check_negatives(
    (pool, picks, external, seed): (Vec<PoolSentence>, Vec<usize>, usize, u64),
) -> Result<(), TestCaseError> {
    let texts: Vec<String> = pool.iter().map(pool_sentence).collect();
    let notes: Vec<SourceNote> = texts
        .chunks(7)
        .enumerate()
        .map(|(i, chunk)| SourceNote {
            note_id: format!("note{i}"),
            text: chunk.join("\n"),
            origin: "prop".into(),
        })
        .collect();

    let mut positives: Vec<LabeledSentence> = Vec::new();
    if !texts.is_empty() {
        for (n, p) in picks.iter().enumerate() {
            let t = &texts[p % texts.len()];
            // alternate exact and re-cased copies so matching goes through normalization
            let t = if n % 2 == 0 { t.clone() } else { t.to_uppercase() };
            positives.push(sentence(t, 1));
        }
    }
    for i in 0..external {
        positives.push(sentence(format!("External positive sentence {i}."), 2));
    }

    // oracle: eligible = distinct, not a positive, >= 5 content words, not a table row
    let positive_keys: HashSet<String> = positives.iter().map(|p| normalize(&p.text)).collect();
    let mut eligible: HashSet<String> = HashSet::new();
    for (spec, text) in pool.iter().zip(&texts) {
        let key = normalize(text);
        if spec.0 >= 5 && !spec.2 && !positive_keys.contains(&key) {
            eligible.insert(key);
        }
    }
    let required = (5.0 * positives.len() as f64).round() as usize;

    let config = NegativeConfig {
        seed,
        ..NegativeConfig::default()
    };
    match sample_negatives(&notes, &positives, &config, &StopWords::default()) {
        Ok(negatives) => {
            prop_assert!(eligible.len() >= required);
            prop_assert_eq!(negatives.len(), required);
            let mut drawn = HashSet::new();
            for n in &negatives {
                let key = normalize(&n.text);
                prop_assert_eq!(n.class_id, 0);
                prop_assert!(
                    !positive_keys.contains(&key),
                    "negative overlaps a positive: {}",
                    n.text
                );
                prop_assert!(eligible.contains(&key), "ineligible negative: {}", n.text);
                prop_assert!(drawn.insert(key));
            }
        }
        Err(_) => prop_assert!(
            eligible.len() < required,
            "{} eligible for {} required",
            eligible.len(),
            required
        ),
    }
    Ok(())
}

// ---- metrics ----

pub fn metrics_input() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..=10).prop_flat_map(|k| (Just(k), vec((0..k, 0..k), 1..=200)))
}

pub struct Tally {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Brute-force one-vs-rest tally straight from the label pairs.
pub fn tally(pairs: &[(usize, usize)], c: usize) -> Tally {
    let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
    for &(p, g) in pairs {
        if p == c && g == c {
            tp += 1.0;
        } else if p == c {
            fp += 1.0;
        } else if g == c {
            fneg += 1.0;
        }
    }
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
    let f1 = if tp > 0.0 {
        2.0 * tp / (2.0 * tp + fp + fneg)
    } else {
        0.0
    };
    Tally { precision, recall, f1 }
}

pub fn check_metrics((k, pairs): (usize, Vec<(usize, usize)>)) -> Result<(), TestCaseError> {
    let preds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let golds: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let m = metrics(&confusion(&preds, &golds, k).unwrap()).unwrap();
    let accuracy = pairs.iter().filter(|(p, g)| p == g).count() as f64 / pairs.len() as f64;
    prop_assert!((m.accuracy - accuracy).abs() < 1e-9);
    for c in 0..k {
        let t = tally(&pairs, c);
        let got = &m.per_class[c];
        prop_assert!((got.precision - t.precision).abs() < 1e-9);
        prop_assert!((got.recall - t.recall).abs() < 1e-9);
        prop_assert!((got.f1 - t.f1).abs() < 1e-9, "class {}: f1 {} vs {}", c, got.f1, t.f1);
    }
    Ok(())
}

// ---- percent change ----

pub fn percent_input() -> impl Strategy<Value = (f64, f64)> {
    (0.01f64..1.0, -0.99f64..0.99)
}

pub fn check_percent((baseline, delta): (f64, f64)) -> Result<(), TestCaseError> {
    let up = percent_change(baseline, baseline + delta).unwrap().percent;
    let down = percent_change(baseline, baseline - delta).unwrap().percent;
    prop_assert!((up + down).abs() < 1e-9, "{} vs {}", up, down);
    prop_assert_eq!(percent_change(baseline, baseline).unwrap().percent, 0.0);
    // sign follows value - baseline
    let value = baseline + delta;
    let pc = percent_change(baseline, value).unwrap().percent;
    prop_assert_eq!(pc > 0.0, value > baseline);
    prop_assert_eq!(pc < 0.0, value < baseline);
    Ok(())
}

// ---- significance ----

pub fn relabel_input() -> impl Strategy<Value = Vec<(usize, usize, usize, usize)>> {
    vec((0usize..4, 0usize..4, 0usize..4, 0usize..4), 1..120)
}

/// Items where both systems agree on correctness can be relabelled freely
/// without changing the test outcome.
pub fn check_relabel(items: Vec<(usize, usize, usize, usize)>) -> Result<(), TestCaseError> {
    let a: Vec<usize> = items.iter().map(|i| i.0).collect();
    let b: Vec<usize> = items.iter().map(|i| i.1).collect();
    let g: Vec<usize> = items.iter().map(|i| i.2).collect();
    let base = significance_test(&a, &b, &g, SignificanceMethod::McNemar).unwrap();

    let (mut a2, mut b2, mut g2) = (a.clone(), b.clone(), g.clone());
    for (i, item) in items.iter().enumerate() {
        let (ca, cb) = (a[i] == g[i], b[i] == g[i]);
        if ca == cb {
            let shift = item.3 + 1;
            g2[i] = g[i] + 10 * shift;
            a2[i] = if ca { g2[i] } else { g2[i] + 1 };
            b2[i] = if cb { g2[i] } else { g2[i] + 2 };
        }
    }
    let moved = significance_test(&a2, &b2, &g2, SignificanceMethod::McNemar).unwrap();
    prop_assert_eq!(base, moved);
    Ok(())
}
