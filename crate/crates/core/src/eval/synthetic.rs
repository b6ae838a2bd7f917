//! Generated keyword corpus for offline end-to-end runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::Document;

/// Class names and their vocabularies. The vocabularies are disjoint.
pub const SYNTHETIC_CLASSES: [(&str, [&str; 12]); 4] = [
    (
        "World",
        [
            "election", "minister", "treaty", "border", "parliament", "diplomat", "embassy", "summit", "refugee",
            "ceasefire", "sanctions", "president",
        ],
    ),
    (
        "Sports",
        [
            "match", "goal", "striker", "league", "coach", "stadium", "tournament", "referee", "season", "playoff",
            "medal", "athlete",
        ],
    ),
    (
        "Business",
        [
            "market", "profit", "shares", "investor", "merger", "revenue", "earnings", "stock", "dividend", "startup",
            "acquisition", "quarterly",
        ],
    ),
    (
        "Sci/Tech",
        [
            "software", "chip", "processor", "satellite", "robot", "algorithm", "laboratory", "genome", "quantum",
            "telescope", "browser", "encryption",
        ],
    ),
];

const FILLER: [&str; 10] = ["the", "a", "of", "in", "on", "with", "and", "to", "for", "at"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub docs_per_class: usize,
    /// Distinct class words per document.
    pub words_per_doc: usize,
    /// Chance that a document also carries one word of another class.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            docs_per_class: 160,
            words_per_doc: 5,
            noise_rate: 0.1,
            seed: 0,
        }
    }
}

/// Documents for every class in [`SYNTHETIC_CLASSES`], grouped by class.
pub fn synthetic_corpus(spec: &SyntheticSpec) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.words_per_doc.clamp(1, 12);
    let mut docs = Vec::with_capacity(spec.docs_per_class * SYNTHETIC_CLASSES.len());
    for (ci, (label, vocab)) in SYNTHETIC_CLASSES.iter().enumerate() {
        let slug = label.to_lowercase().replace('/', "");
        for i in 0..spec.docs_per_class {
            let mut words: Vec<&str> = vocab.choose_multiple(&mut rng, k).copied().collect();
            if rng.gen_bool(spec.noise_rate.clamp(0.0, 1.0)) {
                let other = (ci + rng.gen_range(1..SYNTHETIC_CLASSES.len())) % SYNTHETIC_CLASSES.len();
                words.push(SYNTHETIC_CLASSES[other].1.choose(&mut rng).copied().expect("non-empty"));
            }
            let mut text = Vec::with_capacity(words.len() * 2);
            for w in words {
                text.push(*FILLER.choose(&mut rng).expect("non-empty"));
                text.push(w);
            }
            docs.push(Document::labeled(format!("{slug}-{i}"), text.join(" "), *label));
        }
    }
    docs
}
