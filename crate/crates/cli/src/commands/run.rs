use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use absa_core::client::{
    ClientConfig, CompletionClient, CompletionRecord, CompletionRequest, Endpoint, HttpTransport, Mode, RetryPolicy,
    Transport,
};
use absa_core::corpus::{dataset_path, expand_examples, load_split, DatasetKey, Split, Subtask};
use absa_core::parse::{parse_output, ParseStatus};
use absa_core::prompt::{render_chat, PromptTemplates};
use absa_core::retrieval::{
    embed_pool, Bm25Params, DemoOrder, DemoPool, EmbedItem, Embedder, EmbeddingBackend, EmbeddingMatrix,
    HttpEmbeddings, PrecomputedEmbeddings, SelectionConfig, Strategy,
};
use absa_core::score::{build_report, score_records, PredictionRecord, ReportRun, ScoreReport};
use absa_core::seed::derive_seed;
use absa_core::store::sha256_hex;
use absa_core::{Example, TOOLKIT_VERSION};
use anyhow::{bail, Context};
use serde::Serialize;

use super::{create_dir, write_json};
use crate::config::{EmbeddingSource, InputFile, RunConfig, RunManifest, SEED_DERIVATION};
use crate::{Format, GlobalArgs, Status};

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// Subtask(s) to evaluate.
    #[arg(long = "subtask", value_name = "SUBTASK", required_unless_present = "from_manifest")]
    pub subtasks: Vec<Subtask>,
    /// Dataset selectors: `D20/R15`, `R15`, `D20` or `all` (default: every dataset of the subtask).
    #[arg(long = "dataset", value_name = "SELECTOR")]
    pub datasets: Vec<String>,
    #[arg(long, default_value = "random")]
    pub strategy: Strategy,
    /// Demonstrations per prompt (0 for zero-shot).
    #[arg(long, default_value_t = 3)]
    pub shots: usize,
    /// For hybrid selection: demonstrations taken from each of BM25 and semantic (default: --shots).
    #[arg(long)]
    pub shots_each: Option<usize>,
    #[arg(long, default_value = "best-first")]
    pub order: DemoOrder,
    /// Model identifier sent to the endpoint; part of every cache key.
    #[arg(long, env = "ABSA_MODEL", required_unless_present = "from_manifest")]
    pub model: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = absa_core::client::DEFAULT_MAX_OUTPUT_TOKENS)]
    pub max_tokens: u32,
    #[arg(long, default_value_t = Bm25Params::default().k1)]
    pub k1: f64,
    #[arg(long, default_value_t = Bm25Params::default().b)]
    pub b: f64,
    /// Evaluate only the first N test queries of each dataset.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Precomputed sentence vectors (`dim=<d> provider=<id>` header, then `<id> <floats>` lines).
    #[arg(long, conflicts_with = "embeddings_model")]
    pub embeddings_file: Option<PathBuf>,
    /// Embedding model served at ABSA_EMBEDDINGS_URL.
    #[arg(long)]
    pub embeddings_model: Option<String>,
    /// Alternative prompt template file.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// live: always call the endpoint; record: call on cache misses and store; replay: cache only.
    #[arg(long, value_name = "MODE")]
    pub backend: Option<Mode>,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    #[arg(long)]
    pub requests_per_minute: Option<u32>,
    #[arg(long, default_value_t = 5)]
    pub max_attempts: u32,
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
    /// Exit with status 1 when the share of salvaged or failed parses exceeds this.
    #[arg(long, default_value_t = 0.25)]
    pub max_parse_failure_rate: f64,
    /// Repeat the run described by a manifest (defaults to replay).
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
    /// Output directory for predictions, report and manifest.
    #[arg(long)]
    pub out: PathBuf,
}

impl RunArgs {
    pub fn config(&self, global: &GlobalArgs) -> anyhow::Result<RunConfig> {
        if let Some(path) = &self.from_manifest {
            return Ok(RunManifest::load(path)?.config);
        }
        let (strategy, shots) = match (self.shots, self.strategy) {
            (0, _) => (None, 0),
            (_, Strategy::Hybrid) => (Some(Strategy::Hybrid), self.shots_each.unwrap_or(self.shots)),
            (n, s) => (Some(s), n),
        };
        let embeddings = match (&self.embeddings_file, &self.embeddings_model) {
            (Some(f), _) => Some(EmbeddingSource::File(f.clone())),
            (None, Some(m)) => Some(EmbeddingSource::Remote(m.clone())),
            (None, None) => None,
        };
        let config = RunConfig {
            subtasks: self.subtasks.clone(),
            datasets: self.datasets.clone(),
            strategy,
            shots,
            order: self.order,
            seed: global.seed,
            model: self.model.clone().context("--model is required")?,
            temperature: self.temperature,
            max_output_tokens: self.max_tokens,
            bm25: Bm25Params { k1: self.k1, b: self.b },
            limit: self.limit,
            embeddings,
            templates: self.templates.clone(),
            data_root: global.data_root.clone(),
            cache_dir: global.cache_dir.clone(),
            max_parse_failure_rate: self.max_parse_failure_rate,
        };
        Ok(config)
    }

    pub fn mode(&self) -> Mode {
        self.backend.unwrap_or(if self.from_manifest.is_some() { Mode::Replay } else { Mode::Record })
    }

    pub fn client(&self, config: &RunConfig) -> anyhow::Result<CompletionClient> {
        let mode = self.mode();
        let retry = RetryPolicy { max_attempts: self.max_attempts, ..RetryPolicy::default() };
        let (endpoint, transport) = if mode == Mode::Replay {
            (None, None)
        } else {
            let transport: Arc<dyn Transport> = Arc::new(HttpTransport::new(Duration::from_secs(self.timeout_secs))?);
            (Some(Endpoint::from_env()?), Some(transport))
        };
        let client_config = ClientConfig {
            mode,
            endpoint,
            cache_dir: Some(config.cache_dir.clone()),
            retry,
            requests_per_minute: self.requests_per_minute,
        };
        Ok(CompletionClient::new(client_config, transport)?)
    }
}

/// Train pool and test queries of one (dataset, subtask).
pub struct Task {
    pub key: DatasetKey,
    pub subtask: Subtask,
    pub train: Vec<Example>,
    pub queries: Vec<Example>,
    pub embeddings: Option<EmbeddingMatrix>,
    pub query_vectors: Option<Vec<Vec<f64>>>,
    pub inputs: Vec<InputFile>,
}

fn input_file(
    root: &Path,
    key: &DatasetKey,
    subtask: Subtask,
    split: Split,
    examples: usize,
) -> anyhow::Result<InputFile> {
    let path = dataset_path(root, key, subtask, split);
    let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(InputFile {
        dataset: key.to_string(),
        subtask,
        split: split.as_str().into(),
        sha256: sha256_hex(&bytes),
        examples,
    })
}

pub fn embedder(
    source: Option<&EmbeddingSource>,
    cache_dir: &Path,
    timeout: Duration,
) -> anyhow::Result<Option<Embedder>> {
    let backend: Arc<dyn EmbeddingBackend> = match source {
        None => return Ok(None),
        Some(EmbeddingSource::File(path)) => Arc::new(
            PrecomputedEmbeddings::load(path).with_context(|| format!("loading embeddings {}", path.display()))?,
        ),
        Some(EmbeddingSource::Remote(model)) => Arc::new(HttpEmbeddings::from_env(
            Some(model.clone()),
            Arc::new(HttpTransport::new(timeout)?),
            RetryPolicy::default(),
        )?),
    };
    Ok(Some(Embedder::new(backend, Some(cache_dir))))
}

/// Loads and expands every selected dataset, and embeds pools and queries
/// when the strategy needs vectors.
pub fn prepare(config: &RunConfig, embedder: Option<&Embedder>) -> anyhow::Result<Vec<Task>> {
    let mut tasks = Vec::new();
    for (key, subtask) in config.pairs()? {
        let test = load_split(&config.data_root, &key, subtask, Split::Test)?;
        let mut queries = expand_examples(&test)?;
        if let Some(limit) = config.limit {
            queries.truncate(limit);
        }
        let mut inputs = vec![input_file(&config.data_root, &key, subtask, Split::Test, test.len())?];
        let train = if config.strategy.is_some() {
            let train = load_split(&config.data_root, &key, subtask, Split::Train)?;
            inputs.push(input_file(&config.data_root, &key, subtask, Split::Train, train.len())?);
            expand_examples(&train)?
        } else {
            Vec::new()
        };
        let (mut embeddings, mut query_vectors) = (None, None);
        if config.strategy.is_some_and(Strategy::needs_embeddings) {
            let embedder = embedder.context("semantic selection needs an embedding source")?;
            let items = |examples: &[Example]| -> Vec<EmbedItem> {
                examples.iter().map(|e| EmbedItem { id: e.id.clone(), text: e.sentence.clone() }).collect()
            };
            embeddings = Some(embed_pool(embedder, &items(&train))?);
            query_vectors = Some(embedder.embed(&items(&queries))?);
        }
        log::info!("{key} {subtask}: {} queries, pool of {}", queries.len(), train.len());
        tasks.push(Task { key, subtask, train, queries, embeddings, query_vectors, inputs });
    }
    Ok(tasks)
}

/// One prompt to send, with what is needed to score its answer.
pub struct Pending {
    pub task: usize,
    pub query: usize,
    pub prompt_digest: String,
    pub demo_ids: Vec<String>,
    pub request: CompletionRequest,
}

pub fn build_requests(config: &RunConfig, templates: &PromptTemplates, tasks: &[Task]) -> anyhow::Result<Vec<Pending>> {
    let mut pending = Vec::new();
    for (t, task) in tasks.iter().enumerate() {
        let pool = match config.strategy {
            Some(_) => {
                let mut pool = DemoPool::new(&task.train, config.bm25)
                    .with_context(|| format!("{} {} training pool", task.key, task.subtask))?;
                if let Some(matrix) = &task.embeddings {
                    pool = pool.with_embeddings(matrix.clone())?;
                }
                Some(pool)
            }
            None => None,
        };
        for (q, query) in task.queries.iter().enumerate() {
            let demos: Vec<&Example> = match (&pool, config.strategy) {
                (Some(pool), Some(strategy)) => {
                    let selection =
                        SelectionConfig { strategy, shots: config.shots, order: config.order, bm25: config.bm25 };
                    let seed = derive_seed(config.seed, &format!("select/{}/{}/{}", task.key, task.subtask, query.id));
                    let vector = task.query_vectors.as_ref().map(|v| v[q].as_slice());
                    pool.demonstrations(&pool.select(&selection, query, vector, seed)?)
                }
                _ => Vec::new(),
            };
            let bundle = templates.build_prompt(task.subtask, &demos, query)?;
            let mut request = CompletionRequest::new(config.model.clone(), render_chat(&bundle));
            request.temperature = config.temperature;
            request.max_output_tokens = config.max_output_tokens;
            pending.push(Pending {
                task: t,
                query: q,
                prompt_digest: bundle.digest(),
                demo_ids: demos.iter().map(|d| d.id.clone()).collect(),
                request,
            });
        }
    }
    Ok(pending)
}

#[derive(Debug, Serialize)]
struct PredictionLine<'a> {
    id: &'a str,
    dataset: String,
    subtask: Subtask,
    prompt_digest: &'a str,
    request_digest: &'a str,
    demo_ids: &'a [String],
    raw_output: &'a str,
    tuples: Vec<Vec<String>>,
    status: ParseStatus,
    diagnostics: Vec<String>,
    gold: Vec<Vec<String>>,
}

/// Result of one executed run.
pub struct RunOutcome {
    pub report: ScoreReport,
    pub records: Vec<PredictionRecord>,
    pub anomaly_rate: f64,
}

/// Sends every pending request (failing fast on replay misses), parses,
/// scores, and writes `predictions.jsonl`, `report.json` and `manifest.json`
/// into `out`.
#[allow(clippy::too_many_arguments)]
pub fn execute(
    config: &RunConfig,
    templates: &PromptTemplates,
    tasks: &[Task],
    pending: &[Pending],
    client: &CompletionClient,
    max_in_flight: usize,
    embeddings_provider: Option<String>,
    out: &Path,
) -> anyhow::Result<RunOutcome> {
    let requests: Vec<CompletionRequest> = pending.iter().map(|p| p.request.clone()).collect();
    if client.mode() == Mode::Replay {
        let missing = client.missing(&requests);
        if !missing.is_empty() {
            let shown: Vec<&str> = missing.iter().take(20).map(String::as_str).collect();
            bail!(
                "replay cache {} lacks {} of {} requests: {}{}",
                config.cache_dir.display(),
                missing.len(),
                requests.len(),
                shown.join(", "),
                if missing.len() > shown.len() { ", ..." } else { "" }
            );
        }
    }
    let results = client.complete_batch(&requests, max_in_flight);
    let failures: Vec<String> = results
        .iter()
        .zip(pending)
        .filter_map(|(r, p)| r.as_ref().err().map(|e| format!("{}: {e}", tasks[p.task].queries[p.query].id)))
        .collect();
    if !failures.is_empty() {
        bail!(
            "{} of {} requests failed (completed ones are cached; rerun to resume). First: {}",
            failures.len(),
            requests.len(),
            failures[0]
        );
    }
    let completions: Vec<CompletionRecord> = results.into_iter().map(|r| r.expect("checked above")).collect();

    create_dir(out)?;
    let mut lines = String::new();
    let mut records = Vec::with_capacity(pending.len());
    for (p, completion) in pending.iter().zip(&completions) {
        let task = &tasks[p.task];
        let query = &task.queries[p.query];
        let parsed = parse_output(&completion.response_text, task.subtask);
        let record = PredictionRecord::new(
            &query.id,
            task.key.clone(),
            task.subtask,
            &parsed.tuples,
            &query.gold,
            parsed.status,
        );
        let elements = task.subtask.output_elements();
        let line = PredictionLine {
            id: &query.id,
            dataset: task.key.to_string(),
            subtask: task.subtask,
            prompt_digest: &p.prompt_digest,
            request_digest: &completion.request_digest,
            demo_ids: &p.demo_ids,
            raw_output: &completion.response_text,
            tuples: record.predicted.iter().map(|t| t.fields(elements)).collect(),
            status: parsed.status,
            diagnostics: parsed.diagnostics.iter().map(|d| format!("{}: {}", d.position, d.message)).collect(),
            gold: record.gold.iter().map(|t| t.fields(elements)).collect(),
        };
        lines.push_str(&serde_json::to_string(&line)?);
        lines.push('\n');
        records.push(record);
    }
    let predictions = out.join("predictions.jsonl");
    std::fs::write(&predictions, lines).with_context(|| format!("writing {}", predictions.display()))?;

    let per_dataset = score_records(&records);
    let report = build_report(vec![ReportRun { label: config.label(), per_dataset }]);
    write_json(&out.join("report.json"), &report)?;

    let manifest = RunManifest {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        command: "run".into(),
        backend: client.mode().to_string(),
        template_hash: templates.hash().to_string(),
        seed_derivation: SEED_DERIVATION.into(),
        config: config.clone(),
        inputs: tasks.iter().flat_map(|t| t.inputs.iter().cloned()).collect(),
        embeddings_provider,
        requests: requests.len(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;

    let anomalies = records.iter().filter(|r| r.parse_status != ParseStatus::Clean).count();
    let anomaly_rate = if records.is_empty() { 0.0 } else { anomalies as f64 / records.len() as f64 };
    Ok(RunOutcome { report, records, anomaly_rate })
}

pub fn load_templates(config: &RunConfig) -> anyhow::Result<PromptTemplates> {
    match &config.templates {
        Some(path) => PromptTemplates::load(path).with_context(|| format!("loading templates {}", path.display())),
        None => Ok(PromptTemplates::builtin().clone()),
    }
}

pub fn print_report(report: &ScoreReport, format: Format) -> anyhow::Result<()> {
    match format {
        Format::Table => print!("{}", report.render()),
        Format::Json => println!("{}", serde_json::to_string_pretty(report)?),
        Format::Csv => print!("{}", report.render_csv()),
    }
    Ok(())
}

pub fn cmd_run(global: &GlobalArgs, args: RunArgs) -> anyhow::Result<Status> {
    let config = args.config(global)?;
    config.validate()?;
    let templates = load_templates(&config)?;
    let embedder = embedder(config.embeddings.as_ref(), &config.cache_dir, Duration::from_secs(args.timeout_secs))?;
    let tasks = prepare(&config, embedder.as_ref())?;
    let pending = build_requests(&config, &templates, &tasks)?;
    let client = args.client(&config)?;
    let provider = embedder.as_ref().map(|e| e.provider_id().to_string());
    let outcome = execute(&config, &templates, &tasks, &pending, &client, args.max_in_flight, provider, &args.out)?;
    print_report(&outcome.report, global.format)?;
    Ok(anomaly_status(outcome.anomaly_rate, config.max_parse_failure_rate))
}

pub fn anomaly_status(rate: f64, threshold: f64) -> Status {
    if rate > threshold {
        eprintln!(
            "warning: {:.1}% of outputs needed salvage or failed to parse (threshold {:.1}%)",
            100.0 * rate,
            100.0 * threshold
        );
        Status::Anomalous
    } else {
        Status::Ok
    }
}
