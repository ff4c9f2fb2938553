//! Seeded synthetic corpora with disjoint per-category keyword vocabularies.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use adsynth::augmentation::SourceNote;
use adsynth::corpus::{LabeledSentence, Provenance, Tier};

const STEMS: [&str; 9] = ["memo", "fami", "assi", "phys", "asse", "ther", "scan", "copi", "mood"];
const SYLLABLES: [&str; 12] = ["ra", "li", "to", "ne", "ka", "su", "mo", "pe", "di", "vo", "ga", "bu"];
const SHARED: [&str; 10] = [
    "patient", "today", "visit", "reported", "noted", "clinic", "during", "review", "seen", "family",
];
const NEUTRAL: [&str; 24] = [
    "ambulating",
    "breakfast",
    "hallway",
    "window",
    "blanket",
    "sunny",
    "garden",
    "lunch",
    "shower",
    "radio",
    "coffee",
    "parking",
    "weather",
    "telephone",
    "newspaper",
    "kitchen",
    "chair",
    "television",
    "weekend",
    "vehicle",
    "appointment",
    "pharmacy",
    "cafeteria",
    "elevator",
];

/// Keyword `j` of category `class_id` (1..=9); 144 per category.
pub fn keyword(class_id: u8, j: usize) -> String {
    let stem = STEMS[class_id as usize - 1];
    let a = SYLLABLES[j % SYLLABLES.len()];
    let b = SYLLABLES[(j / SYLLABLES.len()) % SYLLABLES.len()];
    format!("{stem}{a}{b}")
}

fn labeled(text: String, class_id: u8, tier: Tier) -> LabeledSentence {
    LabeledSentence::new(text, class_id, tier, Provenance::default()).expect("synthetic sentence is valid")
}

fn sentence(rng: &mut ChaCha8Rng, keywords: &[String], serial: usize) -> String {
    let mut words: Vec<String> = keywords.to_vec();
    for _ in 0..3 {
        words.push(SHARED.choose(rng).unwrap().to_string());
    }
    let cut = rng.random_range(0..words.len());
    words.rotate_left(cut);
    format!("{} item{serial}.", words.join(" "))
}

/// `per_class` sentences per category, each carrying two keywords drawn
/// from the first `vocabulary` keywords of its category.
pub fn tier(per_class: usize, vocabulary: usize, tier: Tier, seed: u64, serial_offset: usize) -> Vec<LabeledSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for class_id in 1..=9u8 {
        for i in 0..per_class {
            let kws: Vec<String> = (0..2)
                .map(|_| keyword(class_id, rng.random_range(0..vocabulary)))
                .collect();
            let serial = serial_offset + class_id as usize * 1000 + i;
            out.push(labeled(sentence(&mut rng, &kws, serial), class_id, tier));
        }
    }
    out
}

/// Gold positives: 60 per category over a vocabulary wide enough that the
/// gold training split leaves some keywords unseen.
pub fn gold(seed: u64) -> Vec<LabeledSentence> {
    tier(60, 144, Tier::Gold, seed, 0)
}

/// Synthetic tiers covering the full vocabulary.
pub fn bronze(seed: u64) -> Vec<LabeledSentence> {
    tier(80, 144, Tier::Bronze, seed, 100_000)
}

pub fn silver(seed: u64) -> Vec<LabeledSentence> {
    tier(80, 144, Tier::Silver, seed, 200_000)
}

/// Notes of neutral sentences, each with at least six content words.
pub fn negative_pool(notes: usize, sentences_per_note: usize, seed: u64) -> Vec<SourceNote> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..notes)
        .map(|n| {
            let text = (0..sentences_per_note)
                .map(|s| {
                    let words: Vec<&str> = (0..6).map(|_| *NEUTRAL.choose(&mut rng).unwrap()).collect();
                    format!("The {} entry{n}x{s}.", words.join(" "))
                })
                .collect::<Vec<_>>()
                .join(" ");
            SourceNote {
                note_id: format!("pool{n}"),
                text,
                origin: "synthetic".into(),
            }
        })
        .collect()
}
