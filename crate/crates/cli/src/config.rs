use std::path::PathBuf;
use std::str::FromStr;

use absa_core::corpus::{DatasetGroup, DatasetKey, Subtask};
use absa_core::retrieval::{Bm25Params, DemoOrder, Strategy};
use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

/// `D20/R15`, a bare dataset name (`R15`, resolved per subtask), a group
/// (`D20`) or `all`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSelector {
    Key(DatasetKey),
    Name(String),
    Group(DatasetGroup),
    All,
}

impl FromStr for DatasetSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(DatasetSelector::All);
        }
        if s.contains(['/', '-', ':']) {
            return s.parse().map(DatasetSelector::Key).map_err(|e| e.to_string());
        }
        if let Ok(group) = s.parse::<DatasetGroup>() {
            return Ok(DatasetSelector::Group(group));
        }
        let name = s.to_ascii_uppercase();
        if DatasetGroup::ALL.iter().any(|g| g.dataset_names().contains(&name.as_str())) {
            Ok(DatasetSelector::Name(name))
        } else {
            Err(format!("unknown dataset {s:?}"))
        }
    }
}

impl DatasetSelector {
    fn matches(&self, key: &DatasetKey) -> bool {
        match self {
            DatasetSelector::Key(k) => k == key,
            DatasetSelector::Name(n) => &key.name == n,
            DatasetSelector::Group(g) => key.group == *g,
            DatasetSelector::All => true,
        }
    }

    /// Catalogued datasets matched by any selector; no selector means all.
    pub fn resolve(selectors: &[DatasetSelector], subtask: Option<Subtask>) -> Vec<DatasetKey> {
        let groups: Vec<DatasetGroup> = match subtask {
            Some(s) => vec![DatasetGroup::for_subtask(s)],
            None => DatasetGroup::ALL.to_vec(),
        };
        groups
            .into_iter()
            .flat_map(|g| g.dataset_names().iter().map(move |n| DatasetKey::new(g, *n)))
            .filter(|k| selectors.is_empty() || selectors.iter().any(|s| s.matches(k)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    /// Precomputed vector file.
    File(PathBuf),
    /// Remote embeddings endpoint with this model name.
    Remote(String),
}

/// Everything that determines a run's prompts and requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subtasks: Vec<Subtask>,
    pub datasets: Vec<String>,
    /// `None` for zero-shot runs.
    pub strategy: Option<Strategy>,
    /// Demonstrations per prompt; for hybrid, per component strategy.
    pub shots: usize,
    pub order: DemoOrder,
    pub seed: u64,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub bm25: Bm25Params,
    /// Keep only the first `limit` test queries of each dataset.
    pub limit: Option<usize>,
    pub embeddings: Option<EmbeddingSource>,
    pub templates: Option<PathBuf>,
    pub data_root: PathBuf,
    pub cache_dir: PathBuf,
    pub max_parse_failure_rate: f64,
}

impl RunConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.subtasks.is_empty() {
            bail!("no subtask selected");
        }
        if self.shots == 0 && self.strategy.is_some() {
            bail!("zero-shot runs take no selection strategy");
        }
        if self.shots > 0 && self.strategy.is_none() {
            bail!("few-shot runs need a selection strategy");
        }
        if self.strategy.is_some_and(Strategy::needs_embeddings) && self.embeddings.is_none() {
            bail!("{} selection needs --embeddings-file or --embeddings-model", self.strategy.unwrap());
        }
        if !(0.0..=1.0).contains(&self.max_parse_failure_rate) {
            bail!("--max-parse-failure-rate must lie in [0, 1]");
        }
        self.bm25.validate()?;
        Ok(())
    }

    /// (dataset, subtask) pairs in catalogue order.
    pub fn pairs(&self) -> anyhow::Result<Vec<(DatasetKey, Subtask)>> {
        let selectors: Vec<DatasetSelector> = self
            .datasets
            .iter()
            .map(|s| s.parse::<DatasetSelector>().map_err(anyhow::Error::msg))
            .collect::<Result<_, _>>()?;
        let mut pairs = Vec::new();
        for &subtask in &self.subtasks {
            let keys = DatasetSelector::resolve(&selectors, Some(subtask));
            if keys.is_empty() {
                bail!("none of the selected datasets annotate {subtask}");
            }
            pairs.extend(keys.into_iter().map(|k| (k, subtask)));
        }
        Ok(pairs)
    }

    pub fn label(&self) -> String {
        match self.strategy {
            None => format!("{} zero-shot", self.model),
            Some(s) => format!("{} {}-shot {s}", self.model, self.shots),
        }
    }
}

/// Written next to every run's outputs; enough to repeat the run from the
/// cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub command: String,
    pub backend: String,
    pub template_hash: String,
    /// How per-purpose seeds are obtained from `config.seed`.
    pub seed_derivation: String,
    pub config: RunConfig,
    pub inputs: Vec<InputFile>,
    pub embeddings_provider: Option<String>,
    pub requests: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub dataset: String,
    pub subtask: Subtask,
    pub split: String,
    pub sha256: String,
    pub examples: usize,
}

pub const SEED_DERIVATION: &str =
    "seed + little-endian u64 of the first 8 bytes of SHA-256(label), wrapping; labels: select/<dataset>/<subtask>/<id>";

impl RunManifest {
    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
