use std::collections::{BTreeSet, HashSet};

use log::warn;
use rand::seq::{index, SliceRandom};
use serde::Serialize;

use super::{CorpusError, Dataset, DatasetKey, Example, Split, Subtask, TaggedExample};
use crate::seed;
use crate::text::sentence_key;

/// Training-data fractions used by the low-resource experiments.
pub const LOW_RESOURCE_FRACTIONS: [f64; 4] = [0.01, 0.05, 0.10, 0.20];

/// Set of `(normalized sentence, subtask)` keys drawn from test splits.
#[derive(Debug, Clone, Default)]
pub struct LeakGuard {
    keys: HashSet<(String, Subtask)>,
}

impl LeakGuard {
    pub fn from_datasets<'a>(datasets: impl IntoIterator<Item = &'a Dataset>) -> Self {
        let keys = datasets
            .into_iter()
            .filter(|d| d.split == Split::Test)
            .flat_map(|d| d.examples.iter().map(move |e| (sentence_key(&e.sentence), d.subtask)))
            .collect();
        LeakGuard { keys }
    }

    pub fn overlaps(&self, example: &Example) -> bool {
        self.keys.contains(&(sentence_key(&example.sentence), example.subtask))
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Errors on the first tagged example that overlaps a test sentence.
    pub fn check(&self, examples: &[TaggedExample]) -> Result<(), CorpusError> {
        match examples.iter().find(|t| self.overlaps(&t.example)) {
            Some(t) => Err(CorpusError::Leak { dataset: t.dataset.clone(), id: t.example.id.clone() }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MergedSplit {
    pub train: Vec<TaggedExample>,
    pub validation: Vec<TaggedExample>,
    /// Pool size before overlap removal.
    pub pooled: usize,
    /// Pooled examples dropped because they overlap a test sentence.
    pub removed: usize,
}

/// Builds the multi-task training pool: every train and validation example
/// across `all_datasets` (aspect-conditioned records expanded into queries),
/// minus anything whose `(normalized sentence, subtask)` occurs in a test
/// split, shuffled with `seed` and cut 9:1. Train receives `round(0.9·n)`.
pub fn merge_multitask(all_datasets: &[Dataset], seed: u64) -> Result<MergedSplit, CorpusError> {
    let mut ordered: Vec<&Dataset> = all_datasets.iter().collect();
    ordered.sort_by(|a, b| (&a.key, a.subtask, a.split).cmp(&(&b.key, b.subtask, b.split)));

    let tested: HashSet<(&DatasetKey, Subtask)> =
        ordered.iter().filter(|d| d.split == Split::Test).map(|d| (&d.key, d.subtask)).collect();
    if let Some(d) = ordered.iter().find(|d| d.split != Split::Test && !tested.contains(&(&d.key, d.subtask))) {
        return Err(CorpusError::MissingTestSplit { dataset: d.key.clone(), subtask: d.subtask });
    }

    let guard = LeakGuard::from_datasets(ordered.iter().copied());
    let mut pool = Vec::new();
    let mut pooled = 0;
    for ds in ordered.iter().filter(|d| d.split != Split::Test) {
        for example in expand_examples(ds)? {
            pooled += 1;
            if !guard.overlaps(&example) {
                pool.push(TaggedExample { dataset: ds.key.clone(), example });
            }
        }
    }
    let removed = pooled - pool.len();

    pool.shuffle(&mut seed::rng(seed));
    let n_train = (9 * pool.len() + 5) / 10;
    let validation = pool.split_off(n_train);
    Ok(MergedSplit { train: pool, validation, pooled, removed })
}

/// Returns the examples of `dataset` as prompt-ready queries: aspect-conditioned
/// datasets are expanded, everything else is passed through.
pub fn expand_examples(dataset: &Dataset) -> Result<Vec<Example>, CorpusError> {
    if dataset.subtask.aspect_conditioned() {
        expand_aspect_conditioned(dataset)
    } else {
        Ok(dataset.examples.clone())
    }
}

/// One query per `(sentence, gold aspect)` pair, with gold restricted to that
/// aspect and projected onto the subtask's output elements. Records that are
/// already queries pass through unchanged; records without aspects are skipped.
pub fn expand_aspect_conditioned(dataset: &Dataset) -> Result<Vec<Example>, CorpusError> {
    let subtask = dataset.subtask;
    if !subtask.aspect_conditioned() {
        return Err(CorpusError::NotAspectConditioned(subtask));
    }
    let mut out = Vec::new();
    for example in &dataset.examples {
        if example.given_aspect.is_some() {
            out.push(example.clone());
            continue;
        }
        let mut aspects: Vec<&str> = Vec::new();
        for tuple in &example.gold {
            if let Some(a) = tuple.aspect.as_deref() {
                if !aspects.contains(&a) {
                    aspects.push(a);
                }
            }
        }
        if aspects.is_empty() {
            warn!("{}: example {} has no aspects, skipped", dataset.key, example.id);
            continue;
        }
        for (i, aspect) in aspects.iter().enumerate() {
            let mut gold = Vec::new();
            for tuple in example.gold.iter().filter(|t| t.aspect.as_deref() == Some(*aspect)) {
                let projected = tuple.project(subtask.output_elements());
                if !gold.contains(&projected) {
                    gold.push(projected);
                }
            }
            out.push(Example {
                id: format!("{}#{}", example.id, i),
                subtask,
                sentence: example.sentence.clone(),
                given_aspect: Some(aspect.to_string()),
                gold,
            });
        }
    }
    Ok(out)
}

/// Uniform sample without replacement of `ceil(fraction·N)` examples, kept in
/// their original order.
pub fn sample_low_resource(dataset: &Dataset, fraction: f64, seed: u64) -> Result<Dataset, CorpusError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CorpusError::FractionOutOfRange(fraction));
    }
    if dataset.split != Split::Train {
        return Err(CorpusError::WrongSplit { expected: Split::Train, found: dataset.split });
    }
    let n = dataset.len();
    // The epsilon keeps products like 0.07·100 from rounding up to 8.
    let amount = ((fraction * n as f64) - 1e-9).ceil().clamp(0.0, n as f64) as usize;
    let mut picked = index::sample(&mut seed::rng(seed), n, amount).into_vec();
    picked.sort_unstable();
    Ok(Dataset {
        key: dataset.key.clone(),
        split: dataset.split,
        subtask: dataset.subtask,
        examples: picked.into_iter().map(|i| dataset.examples[i].clone()).collect(),
    })
}

/// Two-stage low-resource plan: full training data of related subtasks first,
/// then a sampled fraction of the target subtask.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StagedTrainingPlan {
    pub target: Subtask,
    pub fraction: f64,
    pub seed: u64,
    pub warmup_subtasks: Vec<Subtask>,
    pub warmup_sets: Vec<Dataset>,
    /// One sampled train set per target dataset supplied.
    pub target_sets: Vec<Dataset>,
}

impl StagedTrainingPlan {
    /// ASTE targets warm up on the single-element subtasks, AE targets on the
    /// compound ones.
    pub fn warmup_for(target: Subtask) -> Result<&'static [Subtask], CorpusError> {
        match target {
            Subtask::Aste => Ok(&[Subtask::Ae, Subtask::Oe, Subtask::Alsc, Subtask::Aoe]),
            Subtask::Ae => Ok(&[Subtask::Aesc, Subtask::Aope, Subtask::Aste, Subtask::Asqp]),
            other => Err(CorpusError::UnsupportedWarmupTarget(other)),
        }
    }

    pub fn covered_warmup_subtasks(&self) -> BTreeSet<Subtask> {
        self.warmup_sets.iter().map(|d| d.subtask).collect()
    }
}

pub fn build_warmup(
    target: Subtask,
    fraction: f64,
    datasets: &[Dataset],
    seed: u64,
) -> Result<StagedTrainingPlan, CorpusError> {
    let warmup_subtasks = StagedTrainingPlan::warmup_for(target)?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CorpusError::FractionOutOfRange(fraction));
    }
    let train = |subtask: Subtask| {
        let mut sets: Vec<&Dataset> =
            datasets.iter().filter(|d| d.split == Split::Train && d.subtask == subtask).collect();
        sets.sort_by(|a, b| a.key.cmp(&b.key));
        sets
    };

    let mut warmup_sets = Vec::new();
    for &subtask in warmup_subtasks {
        let sets = train(subtask);
        if sets.is_empty() {
            return Err(CorpusError::NoData { subtask, split: Split::Train });
        }
        warmup_sets.extend(sets.into_iter().cloned());
    }

    let targets = train(target);
    if targets.is_empty() {
        return Err(CorpusError::NoData { subtask: target, split: Split::Train });
    }
    let target_sets = targets
        .into_iter()
        .map(|d| sample_low_resource(d, fraction, seed::derive_seed(seed, &format!("warmup/{}/{}", d.key, target))))
        .collect::<Result<_, _>>()?;

    Ok(StagedTrainingPlan {
        target,
        fraction,
        seed,
        warmup_subtasks: warmup_subtasks.to_vec(),
        warmup_sets,
        target_sets,
    })
}
