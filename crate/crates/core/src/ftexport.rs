//! Instruction-tuning corpora: `{instruction, input, output}` JSON lines with
//! a sidecar metadata file, for multi-task, in-context and staged training.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{expand_examples, CorpusError, Example, LeakGuard, StagedTrainingPlan, Subtask, TaggedExample};
use crate::prompt::{render_output, PromptError, PromptTemplates};
use crate::retrieval::{
    embed_pool, Bm25Params, DemoOrder, DemoPool, EmbedItem, Embedder, RetrievalError, SelectionConfig, Strategy,
};
use crate::seed::derive_seed;
use crate::TOOLKIT_VERSION;

#[derive(Debug, Error)]
pub enum FtExportError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("{dataset}/{subtask} has a single training example, so it has no demonstrations to offer")]
    PoolTooSmall { dataset: String, subtask: Subtask },
    #[error("in-context fine-tuning needs at least one demonstration")]
    ZeroShots,
    #[error("{0} selection needs an embedding backend")]
    NoEmbedder(Strategy),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FtSample {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FtMeta {
    pub subtask: Subtask,
    pub dataset: String,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FtRecord {
    pub sample: FtSample,
    pub meta: FtMeta,
}

/// One sample for `tagged`, with `demos` rendered in the input.
pub fn build_sample(
    templates: &PromptTemplates,
    tagged: &TaggedExample,
    demos: &[&Example],
) -> Result<FtRecord, FtExportError> {
    let example = &tagged.example;
    let bundle = templates.build_prompt(example.subtask, demos, example)?;
    Ok(FtRecord {
        sample: FtSample {
            instruction: bundle.instruction.text.clone(),
            input: bundle.body().to_string(),
            output: render_output(&example.gold, example.subtask),
        },
        meta: FtMeta { subtask: example.subtask, dataset: tagged.dataset.to_string(), id: example.id.clone() },
    })
}

/// Path of the metadata file written next to `path` (`x.jsonl` → `x.meta.jsonl`).
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.jsonl")
}

/// Writes the samples to `path` and their metadata to [`meta_path`].
pub fn write_records(path: &Path, records: &[FtRecord]) -> Result<(), FtExportError> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| FtExportError::Io { path: p.clone(), source }
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
    }
    let meta = meta_path(path);
    let mut samples = BufWriter::new(File::create(path).map_err(io(path))?);
    let mut metas = BufWriter::new(File::create(&meta).map_err(io(&meta))?);
    for r in records {
        writeln!(samples, "{}", serde_json::to_string(&r.sample).expect("sample serializes")).map_err(io(path))?;
        writeln!(metas, "{}", serde_json::to_string(&r.meta).expect("meta serializes")).map_err(io(&meta))?;
    }
    samples.flush().map_err(io(path))?;
    metas.flush().map_err(io(&meta))
}

/// One sample per merged example, in merged order. Fails if any example
/// shares a sentence with a test set of the same subtask.
pub fn export_multitask(
    templates: &PromptTemplates,
    examples: &[TaggedExample],
    guard: &LeakGuard,
    path: &Path,
) -> Result<usize, FtExportError> {
    guard.check(examples)?;
    let records = examples.iter().map(|t| build_sample(templates, t, &[])).collect::<Result<Vec<_>, _>>()?;
    write_records(path, &records)?;
    Ok(records.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcftConfig {
    pub strategy: Strategy,
    pub shots: usize,
    pub seed: u64,
    pub bm25: Bm25Params,
}

/// Samples whose inputs carry `shots` gold-labelled demonstrations drawn from
/// the same (dataset, subtask) pool, never the sample itself. Output order
/// follows `examples`.
pub fn build_in_context(
    templates: &PromptTemplates,
    examples: &[TaggedExample],
    config: &IcftConfig,
    embedder: Option<&Embedder>,
) -> Result<Vec<FtRecord>, FtExportError> {
    if config.shots == 0 {
        return Err(FtExportError::ZeroShots);
    }
    let mut pools: Vec<((String, Subtask), Vec<usize>)> = Vec::new();
    for (i, t) in examples.iter().enumerate() {
        let key = (t.dataset.to_string(), t.example.subtask);
        match pools.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(i),
            None => pools.push((key, vec![i])),
        }
    }

    let selection = SelectionConfig {
        strategy: config.strategy,
        shots: config.shots,
        order: DemoOrder::BestFirst,
        bm25: config.bm25,
    };
    let mut records: Vec<Option<FtRecord>> = vec![None; examples.len()];
    for ((dataset, subtask), members) in pools {
        if members.len() < 2 {
            return Err(FtExportError::PoolTooSmall { dataset, subtask });
        }
        let pool_examples: Vec<Example> = members.iter().map(|&i| examples[i].example.clone()).collect();
        let mut pool = DemoPool::new(&pool_examples, config.bm25)?;
        let mut vectors = None;
        if config.strategy.needs_embeddings() {
            let embedder = embedder.ok_or(FtExportError::NoEmbedder(config.strategy))?;
            let items: Vec<EmbedItem> =
                pool_examples.iter().map(|e| EmbedItem { id: e.id.clone(), text: e.sentence.clone() }).collect();
            let matrix = embed_pool(embedder, &items)?;
            vectors = Some(matrix.vectors().to_vec());
            pool = pool.with_embeddings(matrix)?;
        }
        for (pos, &i) in members.iter().enumerate() {
            let query = &pool_examples[pos];
            let seed = derive_seed(config.seed, &format!("icft/{dataset}/{subtask}/{}", query.id));
            let picked =
                pool.select(&selection, query, vectors.as_ref().map(|v: &Vec<Vec<f64>>| v[pos].as_slice()), seed)?;
            records[i] = Some(build_sample(templates, &examples[i], &pool.demonstrations(&picked))?);
        }
    }
    Ok(records.into_iter().map(|r| r.expect("every example belongs to a pool")).collect())
}

pub fn export_in_context_ft(
    templates: &PromptTemplates,
    examples: &[TaggedExample],
    config: &IcftConfig,
    embedder: Option<&Embedder>,
    guard: &LeakGuard,
    path: &Path,
) -> Result<usize, FtExportError> {
    guard.check(examples)?;
    let records = build_in_context(templates, examples, config, embedder)?;
    write_records(path, &records)?;
    Ok(records.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSet {
    pub dataset: String,
    pub subtask: Subtask,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagedManifest {
    pub toolkit_version: String,
    pub template_hash: String,
    pub target: Subtask,
    pub warmup_subtasks: Vec<Subtask>,
    pub fraction: f64,
    pub seed: u64,
    pub stage1: Vec<StageSet>,
    pub stage2: Vec<StageSet>,
    /// Samples dropped because their sentence appears in a test set of the
    /// same subtask (for example, across overlapping restaurant datasets).
    pub removed_overlapping: usize,
}

/// Writes `stage1.jsonl` (full warm-up data), `stage2.jsonl` (sampled target
/// data) and `manifest.json` into `dir`. Aspect-conditioned sets are expanded
/// into queries first.
pub fn export_staged(
    templates: &PromptTemplates,
    plan: &StagedTrainingPlan,
    guard: &LeakGuard,
    dir: &Path,
) -> Result<StagedManifest, FtExportError> {
    let mut removed = 0;
    let mut stage = |sets: &[crate::corpus::Dataset]| -> Result<(Vec<FtRecord>, Vec<StageSet>), FtExportError> {
        let mut records = Vec::new();
        let mut summary = Vec::new();
        for set in sets {
            let mut kept = 0;
            for example in expand_examples(set)? {
                if guard.overlaps(&example) {
                    removed += 1;
                    continue;
                }
                let tagged = TaggedExample { dataset: set.key.clone(), example };
                records.push(build_sample(templates, &tagged, &[])?);
                kept += 1;
            }
            summary.push(StageSet { dataset: set.key.to_string(), subtask: set.subtask, samples: kept });
        }
        Ok((records, summary))
    };
    let (stage1, stage1_sets) = stage(&plan.warmup_sets)?;
    let (stage2, stage2_sets) = stage(&plan.target_sets)?;
    if removed > 0 {
        log::warn!("dropped {removed} staged samples that overlap a test set");
    }
    write_records(&dir.join("stage1.jsonl"), &stage1)?;
    write_records(&dir.join("stage2.jsonl"), &stage2)?;
    let manifest = StagedManifest {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        template_hash: templates.hash().to_string(),
        target: plan.target,
        warmup_subtasks: plan.warmup_subtasks.clone(),
        fraction: plan.fraction,
        seed: plan.seed,
        stage1: stage1_sets,
        stage2: stage2_sets,
        removed_overlapping: removed,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Manifest for the multi-task and in-context exports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub kind: String,
    pub toolkit_version: String,
    pub template_hash: String,
    pub seed: u64,
    pub strategy: Option<Strategy>,
    pub shots: Option<usize>,
    pub fraction: Option<f64>,
    pub files: Vec<ExportedFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedFile {
    pub path: String,
    pub samples: usize,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FtExportError> {
    let mut text = serde_json::to_string_pretty(value).expect("manifest serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| FtExportError::Io { path: path.to_path_buf(), source })
}
