use std::path::Path;

use absa_core::corpus::{
    dataset_path, write_dataset, CorpusError, Dataset, DatasetGroup, DatasetKey, Polarity, SentimentTuple, Split,
    Subtask, IMPLICIT,
};
use absa_core::Example;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Published split sizes: (group, dataset, train, validation, test).
pub const PUBLISHED_SPLITS: [(DatasetGroup, &str, usize, Option<usize>, usize); 13] = [
    (DatasetGroup::D17, "L14", 3048, None, 800),
    (DatasetGroup::D17, "R14", 3044, None, 800),
    (DatasetGroup::D17, "R15", 1315, None, 685),
    (DatasetGroup::D19, "L14", 1158, None, 343),
    (DatasetGroup::D19, "R14", 1627, None, 500),
    (DatasetGroup::D19, "R15", 754, None, 325),
    (DatasetGroup::D19, "R16", 1079, None, 329),
    (DatasetGroup::D20, "L14", 920, Some(228), 339),
    (DatasetGroup::D20, "R14", 1300, Some(323), 496),
    (DatasetGroup::D20, "R15", 593, Some(148), 318),
    (DatasetGroup::D20, "R16", 842, Some(210), 320),
    (DatasetGroup::D21, "R15", 834, Some(209), 537),
    (DatasetGroup::D21, "R16", 1264, Some(316), 544),
];

const LAPTOP_ASPECTS: &[&str] = &[
    "battery life",
    "screen",
    "keyboard",
    "trackpad",
    "price",
    "Windows 8",
    "hard drive",
    "customer service",
    "\"retina\" display",
    "fan noise",
    "USB ports",
    "touch-pad",
    "boot time",
    "speakers",
    "Mac's OS",
];
const RESTAURANT_ASPECTS: &[&str] = &[
    "burger",
    "orange juice",
    "staff",
    "service",
    "wine list",
    "sushi",
    "décor",
    "fish & chips",
    "chef's special",
    "\"house\" salad",
    "waiter",
    "prices",
    "atmosphere",
    "crème brûlée",
    "pad thai",
];
const CATEGORIES: &[&str] = &[
    "food quality",
    "service general",
    "ambience general",
    "restaurant prices",
    "drinks quality",
    "food style_options",
];
const POSITIVE: &[&str] =
    &["delicious", "great", "friendly", "amazing", "fast", "well-made", "to die for", "top notch"];
const NEGATIVE: &[&str] =
    &["not good", "rude", "slow", "overpriced", "bland", "awful", "so-so, at best", "disappointing"];
const NEUTRAL: &[&str] = &["okay", "average", "standard", "as expected", "fine"];
const FILLERS: &[&str] =
    &["Honestly", "Overall", "I think", "To be fair", "Last night", "We went twice and", "My friend said", "Sadly"];

/// One sentence with its fully specified quadruples; every subtask's gold is
/// a projection of these.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub sentence: String,
    pub quads: Vec<SentimentTuple>,
}

impl Annotation {
    /// Gold for `subtask`, using the sentence-level schema for ALSC and AOE.
    pub fn gold(&self, subtask: Subtask) -> Vec<SentimentTuple> {
        let elements = match subtask {
            Subtask::Alsc | Subtask::Aoe => subtask.sentence_level_elements(),
            other => other.output_elements(),
        };
        let mut out: Vec<SentimentTuple> = Vec::new();
        for q in &self.quads {
            if subtask != Subtask::Asqp && q.aspect.as_deref() == Some(IMPLICIT) {
                continue;
            }
            let t = q.project(elements);
            if !out.contains(&t) {
                out.push(t);
            }
        }
        out
    }
}

/// A random sentence with 0 to 3 opinions (always at least one unless
/// `allow_empty`). Aspects within one sentence are distinct.
pub fn annotated_sentence(rng: &mut impl Rng, restaurant: bool, allow_empty: bool, implicit: bool) -> Annotation {
    let aspects = if restaurant { RESTAURANT_ASPECTS } else { LAPTOP_ASPECTS };
    let n = if allow_empty { rng.random_range(0..=3) } else { rng.random_range(1..=3) };
    let mut chosen: Vec<&str> = Vec::new();
    while chosen.len() < n {
        let a = *aspects.choose(rng).unwrap();
        if !chosen.contains(&a) {
            chosen.push(a);
        }
    }
    let mut clauses = Vec::new();
    let mut quads = Vec::new();
    for (i, aspect) in chosen.iter().enumerate() {
        let polarity = *Polarity::ALL.choose(rng).unwrap();
        let words = match polarity {
            Polarity::Positive => POSITIVE,
            Polarity::Negative => NEGATIVE,
            Polarity::Neutral => NEUTRAL,
        };
        let opinion = *words.choose(rng).unwrap();
        let category = *CATEGORIES.choose(rng).unwrap();
        let hidden = implicit && i == 0 && rng.random_bool(0.2);
        if hidden {
            clauses.push(format!("it was {opinion}"));
            quads.push(SentimentTuple::asqp(IMPLICIT, category, opinion, polarity));
        } else {
            clauses.push(format!("the {aspect} was {opinion}"));
            quads.push(SentimentTuple::asqp(aspect, category, opinion, polarity));
        }
    }
    let filler = *FILLERS.choose(rng).unwrap();
    let tag: u32 = rng.random_range(0..1_000_000);
    let sentence = if clauses.is_empty() {
        format!("{filler}, nothing more to say about visit #{tag} .")
    } else {
        format!("{filler}, {} (visit #{tag}) !", clauses.join(" but "))
    };
    Annotation { sentence, quads }
}

/// Size and seed of a synthetic catalogue. `scale` multiplies every split
/// size of the published table (rounded up, at least 2).
#[derive(Debug, Clone, Copy)]
pub struct SyntheticCorpus {
    pub scale: f64,
    pub seed: u64,
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        Self { scale: 1.0, seed: 7 }
    }
}

impl SyntheticCorpus {
    fn size(&self, n: usize) -> usize {
        if self.scale >= 1.0 {
            n
        } else {
            ((n as f64 * self.scale).ceil() as usize).max(2)
        }
    }
}

/// Every (dataset, subtask, split) of the catalogue, with subtasks of one
/// dataset annotating the same sentences.
pub fn synthetic_datasets(config: SyntheticCorpus) -> Vec<Dataset> {
    let mut out = Vec::new();
    for (group, name, train, validation, test) in PUBLISHED_SPLITS {
        let key = DatasetKey::new(group, name);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ absa_core::seed::derive_seed(0, &key.to_string()));
        let restaurant = name.starts_with('R');
        let splits = [(Split::Train, Some(train)), (Split::Validation, validation), (Split::Test, Some(test))];
        for (split, count) in splits {
            let Some(count) = count else { continue };
            let annotations: Vec<Annotation> = (0..config.size(count))
                .map(|_| {
                    annotated_sentence(&mut rng, restaurant, group == DatasetGroup::D17, group == DatasetGroup::D21)
                })
                .collect();
            for &subtask in group.serves() {
                let examples = annotations
                    .iter()
                    .enumerate()
                    .map(|(i, a)| Example {
                        id: format!("{}-{}-{}-{i}", group.id().to_lowercase(), name.to_lowercase(), split.as_str()),
                        subtask,
                        sentence: a.sentence.clone(),
                        given_aspect: None,
                        gold: a.gold(subtask),
                    })
                    .collect();
                out.push(Dataset { key: key.clone(), split, subtask, examples });
            }
        }
    }
    out
}

/// Writes [`synthetic_datasets`] in the canonical layout under `root`.
pub fn write_synthetic_corpus(root: &Path, config: SyntheticCorpus) -> Result<Vec<Dataset>, CorpusError> {
    let datasets = synthetic_datasets(config);
    for d in &datasets {
        write_dataset(&dataset_path(root, &d.key, d.subtask, d.split), &d.examples)?;
    }
    Ok(datasets)
}
