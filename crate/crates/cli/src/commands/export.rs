use std::path::{Path, PathBuf};
use std::time::Duration;

use absa_core::corpus::{build_warmup, discover_datasets, merge_multitask, Dataset, LeakGuard, Subtask};
use absa_core::ftexport::{
    export_in_context_ft, export_multitask, export_staged, ExportManifest, ExportedFile, IcftConfig,
};
use absa_core::retrieval::{Bm25Params, Strategy};
use absa_core::seed::derive_seed;
use absa_core::TOOLKIT_VERSION;
use anyhow::bail;

use super::run::embedder;
use super::{create_dir, write_json};
use crate::config::{DatasetSelector, EmbeddingSource};
use crate::{GlobalArgs, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExportMode {
    /// Every train and validation example of every subtask, merged and re-split 9:1.
    Multitask,
    /// Like multitask, with retrieved demonstrations in each training input.
    Icft,
    /// Full related-subtask data, then a sampled fraction of the target.
    Warmup,
}

#[derive(Debug, clap::Args)]
pub struct ExportArgs {
    #[arg(long, value_enum)]
    pub mode: ExportMode,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// icft: demonstration selection strategy.
    #[arg(long, default_value = "bm25")]
    pub strategy: Strategy,
    /// icft: demonstrations per sample.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// icft: keep only these subtasks.
    #[arg(long = "subtask")]
    pub subtasks: Vec<Subtask>,
    /// warmup: target subtask (ASTE or AE).
    #[arg(long)]
    pub target: Option<Subtask>,
    /// warmup: share of each target training set to keep.
    #[arg(long, default_value_t = 0.01)]
    pub fraction: f64,
    /// warmup: restrict the target datasets.
    #[arg(long = "dataset", value_name = "SELECTOR")]
    pub datasets: Vec<DatasetSelector>,
    #[arg(long, conflicts_with = "embeddings_model")]
    pub embeddings_file: Option<PathBuf>,
    #[arg(long)]
    pub embeddings_model: Option<String>,
    #[arg(long)]
    pub templates: Option<PathBuf>,
}

pub fn cmd_export(global: &GlobalArgs, args: ExportArgs) -> anyhow::Result<Status> {
    let templates = match &args.templates {
        Some(path) => absa_core::prompt::PromptTemplates::load(path)?,
        None => absa_core::prompt::PromptTemplates::builtin().clone(),
    };
    let datasets = discover_datasets(&global.data_root)?;
    if datasets.is_empty() {
        bail!("no datasets under {}", global.data_root.display());
    }
    let guard = LeakGuard::from_datasets(&datasets);
    create_dir(&args.out)?;

    if args.mode == ExportMode::Warmup {
        let target = match args.target {
            Some(t) => t,
            None => bail!("--mode warmup needs --target"),
        };
        let targets = DatasetSelector::resolve(&args.datasets, Some(target));
        let pool: Vec<Dataset> =
            datasets.iter().filter(|d| d.subtask != target || targets.contains(&d.key)).cloned().collect();
        let plan = build_warmup(target, args.fraction, &pool, derive_seed(global.seed, "warmup"))?;
        let manifest = export_staged(&templates, &plan, &guard, &args.out)?;
        let count = |sets: &[absa_core::ftexport::StageSet]| sets.iter().map(|s| s.samples).sum::<usize>();
        println!(
            "stage 1: {} samples, stage 2: {} samples ({} dropped for test overlap) in {}",
            count(&manifest.stage1),
            count(&manifest.stage2),
            manifest.removed_overlapping,
            args.out.display()
        );
        return Ok(Status::Ok);
    }

    let merged = merge_multitask(&datasets, derive_seed(global.seed, "merge"))?;
    log::info!("merged {} examples, {} removed for test overlap", merged.pooled, merged.removed);
    let file = |name: &str, samples: usize| ExportedFile { path: name.to_string(), samples };
    let mut files = Vec::new();
    let (strategy, shots) = match args.mode {
        ExportMode::Multitask => {
            files.push(file(
                "train.jsonl",
                export_multitask(&templates, &merged.train, &guard, &args.out.join("train.jsonl"))?,
            ));
            let validation =
                export_multitask(&templates, &merged.validation, &guard, &args.out.join("validation.jsonl"))?;
            files.push(file("validation.jsonl", validation));
            (None, None)
        }
        ExportMode::Icft => {
            let keep = |s: Subtask| args.subtasks.is_empty() || args.subtasks.contains(&s);
            let train: Vec<_> = merged.train.into_iter().filter(|t| keep(t.example.subtask)).collect();
            if train.is_empty() {
                bail!("no training examples for the selected subtasks");
            }
            let source = match (&args.embeddings_file, &args.embeddings_model) {
                (Some(f), _) => Some(EmbeddingSource::File(f.clone())),
                (None, Some(m)) => Some(EmbeddingSource::Remote(m.clone())),
                (None, None) => None,
            };
            let embedder = embedder(source.as_ref(), &global.cache_dir, Duration::from_secs(120))?;
            let config =
                IcftConfig { strategy: args.strategy, shots: args.k, seed: global.seed, bm25: Bm25Params::default() };
            let path = args.out.join("train.jsonl");
            files.push(file(
                "train.jsonl",
                export_in_context_ft(&templates, &train, &config, embedder.as_ref(), &guard, &path)?,
            ));
            (Some(args.strategy), Some(args.k))
        }
        ExportMode::Warmup => unreachable!(),
    };
    let manifest = ExportManifest {
        kind: format!("{:?}", args.mode).to_lowercase(),
        toolkit_version: TOOLKIT_VERSION.to_string(),
        template_hash: templates.hash().to_string(),
        seed: global.seed,
        strategy,
        shots,
        fraction: None,
        files,
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    summarize(&args.out, &manifest);
    Ok(Status::Ok)
}

fn summarize(dir: &Path, manifest: &ExportManifest) {
    for f in &manifest.files {
        println!("{}: {} samples", dir.join(&f.path).display(), f.samples);
    }
}
