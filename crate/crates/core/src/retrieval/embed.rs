use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::semantic::normalize;
use super::{EmbeddingMatrix, RetrievalError};
use crate::client::{with_retries, ClientError, Endpoint, RateLimiter, RetryPolicy, Transport};
use crate::store::{sha256_hex, ContentStore};

pub const EMBEDDINGS_URL_VAR: &str = "ABSA_EMBEDDINGS_URL";
pub const EMBEDDINGS_MODEL_VAR: &str = "ABSA_EMBEDDINGS_MODEL";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbedItem {
    pub id: String,
    pub text: String,
}

/// Source of sentence vectors. Results are per item so that one bad item
/// does not hide the others.
pub trait EmbeddingBackend: Send + Sync {
    fn provider_id(&self) -> &str;
    fn embed(&self, items: &[EmbedItem]) -> Vec<Result<Vec<f64>, String>>;
    /// Whether vectors depend only on the text and may be cached by it.
    fn cacheable(&self) -> bool {
        true
    }
}

/// Vectors read from a text file: a `dim=<d> provider=<id>` header, then
/// `<example-id> <d floats>` per line. Lookups fall back from an expanded
/// query id (`base#n`) to its base id.
#[derive(Debug, Clone)]
pub struct PrecomputedEmbeddings {
    provider_id: String,
    dim: usize,
    by_id: HashMap<String, Vec<f64>>,
}

impl PrecomputedEmbeddings {
    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(source: &str) -> Result<Self, RetrievalError> {
        let err = |line: usize, message: String| RetrievalError::EmbeddingFile { line, message };
        let mut lines = source.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
        let (mut dim, mut provider_id) = (None, None);
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("dim", d)) => dim = Some(d.parse::<usize>().map_err(|e| err(1, format!("dim: {e}")))?),
                Some(("provider", p)) => provider_id = Some(p.to_string()),
                _ => return Err(err(1, format!("unexpected header field {field:?}"))),
            }
        }
        let dim = dim.filter(|&d| d > 0).ok_or_else(|| err(1, "header needs dim=<d> with d > 0".into()))?;
        let provider_id = provider_id.ok_or_else(|| err(1, "header needs provider=<id>".into()))?;
        let mut by_id = HashMap::new();
        for (i, line) in lines {
            let mut fields = line.split_whitespace();
            let id = fields.next().expect("line is not blank").to_string();
            let vector = fields
                .map(|f| f.parse::<f64>().map_err(|e| err(i + 1, format!("{f:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if vector.len() != dim {
                return Err(err(i + 1, format!("{id} has {} values, expected {dim}", vector.len())));
            }
            if by_id.insert(id.clone(), vector).is_some() {
                return Err(err(i + 1, format!("duplicate id {id}")));
            }
        }
        Ok(Self { provider_id, dim, by_id })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.by_id.get(id).or_else(|| id.split_once('#').and_then(|(base, _)| self.by_id.get(base))).map(Vec::as_slice)
    }
}

impl EmbeddingBackend for PrecomputedEmbeddings {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn embed(&self, items: &[EmbedItem]) -> Vec<Result<Vec<f64>, String>> {
        items
            .iter()
            .map(|item| self.get(&item.id).map(<[f64]>::to_vec).ok_or_else(|| format!("no vector for {}", item.id)))
            .collect()
    }

    fn cacheable(&self) -> bool {
        false
    }
}

/// Remote embeddings endpoint speaking the common `/embeddings` JSON shape:
/// `{"model", "input": [..]}` in, `{"data": [{"index", "embedding"}]}` out.
pub struct HttpEmbeddings {
    endpoint: Endpoint,
    model: String,
    provider_id: String,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    limiter: RateLimiter,
    batch_size: usize,
}

#[derive(Serialize)]
struct EmbeddingsRequest<'a> {
    model: &'a str,
    input: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

impl HttpEmbeddings {
    pub fn new(
        endpoint: Endpoint,
        model: impl Into<String>,
        transport: Arc<dyn Transport>,
        retry: RetryPolicy,
    ) -> Self {
        let model = model.into();
        let provider_id = format!("{model}@{}", endpoint.id());
        Self { endpoint, model, provider_id, transport, retry, limiter: RateLimiter::per_minute(None), batch_size: 64 }
    }

    pub fn from_env(
        model: Option<String>,
        transport: Arc<dyn Transport>,
        retry: RetryPolicy,
    ) -> Result<Self, ClientError> {
        let endpoint = Endpoint::from_env_var(EMBEDDINGS_URL_VAR)?;
        let model = match model {
            Some(m) => m,
            None => std::env::var(EMBEDDINGS_MODEL_VAR).map_err(|_| ClientError::MissingEnv(EMBEDDINGS_MODEL_VAR))?,
        };
        Ok(Self::new(endpoint, model, transport, retry))
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    fn embed_batch(&self, items: &[EmbedItem]) -> Result<Vec<Vec<f64>>, String> {
        let body = serde_json::to_string(&EmbeddingsRequest {
            model: &self.model,
            input: items.iter().map(|i| i.text.as_str()).collect(),
        })
        .expect("request serializes");
        let (_, response) = with_retries(&self.retry, &self.limiter, || {
            self.transport.post_json(&self.endpoint.url, self.endpoint.api_key.as_deref(), &body)
        })
        .map_err(|e| e.to_string())?;
        let mut parsed: EmbeddingsResponse =
            serde_json::from_str(&response).map_err(|e| format!("malformed embeddings response: {e}"))?;
        parsed.data.sort_by_key(|d| d.index);
        if parsed.data.len() != items.len() || parsed.data.iter().enumerate().any(|(i, d)| d.index != i) {
            return Err(format!("expected {} embeddings, got {}", items.len(), parsed.data.len()));
        }
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

impl EmbeddingBackend for HttpEmbeddings {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn embed(&self, items: &[EmbedItem]) -> Vec<Result<Vec<f64>, String>> {
        items
            .chunks(self.batch_size)
            .flat_map(|chunk| match self.embed_batch(chunk) {
                Ok(vectors) => vectors.into_iter().map(Ok).collect::<Vec<_>>(),
                Err(e) => vec![Err(e); chunk.len()],
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct CachedVector {
    provider: String,
    vector: Vec<f64>,
}

/// A backend plus an optional on-disk cache keyed by provider and text.
pub struct Embedder {
    backend: Arc<dyn EmbeddingBackend>,
    cache: Option<ContentStore>,
}

impl Embedder {
    /// Vectors are cached under `<cache_dir>/embeddings` when a directory is
    /// given and the backend allows it.
    pub fn new(backend: Arc<dyn EmbeddingBackend>, cache_dir: Option<&Path>) -> Self {
        let cache = cache_dir.filter(|_| backend.cacheable()).map(|d| ContentStore::new(d.join("embeddings")));
        Self { backend, cache }
    }

    pub fn provider_id(&self) -> &str {
        self.backend.provider_id()
    }

    fn key(&self, text: &str) -> String {
        sha256_hex(format!("{}\0{}", self.backend.provider_id(), text).as_bytes())
    }

    fn cached(&self, text: &str) -> Option<Vec<f64>> {
        let cache = self.cache.as_ref()?;
        let bytes = cache.read(&self.key(text)).ok()??;
        let entry: CachedVector = serde_json::from_slice(&bytes).ok()?;
        (entry.provider == self.backend.provider_id()).then_some(entry.vector)
    }

    /// Unit vectors for `items`, in order. Every failing item is reported.
    pub fn embed(&self, items: &[EmbedItem]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        let mut out: Vec<Option<Vec<f64>>> = items.iter().map(|i| self.cached(&i.text)).collect();
        let missing: Vec<usize> = (0..items.len()).filter(|&i| out[i].is_none()).collect();
        let mut failed = Vec::new();
        let mut message = String::new();
        if !missing.is_empty() {
            let batch: Vec<EmbedItem> = missing.iter().map(|&i| items[i].clone()).collect();
            let results = self.backend.embed(&batch);
            assert_eq!(results.len(), batch.len(), "backend returned a result per item");
            for (&i, result) in missing.iter().zip(results) {
                match result {
                    Ok(vector) => {
                        if let Some(cache) = &self.cache {
                            let entry =
                                CachedVector { provider: self.provider_id().to_string(), vector: vector.clone() };
                            let bytes = serde_json::to_vec(&entry).expect("vector serializes");
                            cache.write(&self.key(&items[i].text), &bytes)?;
                        }
                        out[i] = Some(vector);
                    }
                    Err(e) => {
                        failed.push(items[i].id.clone());
                        message = e;
                    }
                }
            }
        }
        if !failed.is_empty() {
            return Err(RetrievalError::EmbeddingFailed { ids: failed, message });
        }
        out.into_iter()
            .zip(items)
            .map(|(v, item)| {
                normalize(&v.expect("filled above")).ok_or_else(|| RetrievalError::ZeroVector(item.id.clone()))
            })
            .collect()
    }

    pub fn embed_one(&self, item: &EmbedItem) -> Result<Vec<f64>, RetrievalError> {
        Ok(self.embed(std::slice::from_ref(item))?.remove(0))
    }
}

/// Embeds a whole demonstration pool into a matrix.
pub fn embed_pool(embedder: &Embedder, items: &[EmbedItem]) -> Result<EmbeddingMatrix, RetrievalError> {
    if items.is_empty() {
        return Err(RetrievalError::EmptyPool);
    }
    EmbeddingMatrix::new(embedder.provider_id(), embedder.embed(items)?)
}
