//! Demonstration selection over a pool of training examples: random, BM25,
//! embedding similarity, and a hybrid of the last two.

mod bm25;
mod embed;
mod pool;
mod semantic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bm25::{Bm25Index, Bm25Params, TokenizedDoc};
pub use embed::{
    embed_pool, EmbedItem, Embedder, EmbeddingBackend, HttpEmbeddings, PrecomputedEmbeddings, EMBEDDINGS_MODEL_VAR,
    EMBEDDINGS_URL_VAR,
};
pub use pool::{DemoOrder, DemoPool, SelectionConfig};
pub use semantic::{select_semantic, EmbeddingMatrix};

use crate::text::trim_edge_punct;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("demonstration pool is empty")]
    EmptyPool,
    #[error("invalid BM25 parameters: {0}")]
    InvalidParams(String),
    #[error("document {doc_id} out of range for a pool of {size}")]
    DocOutOfRange { doc_id: usize, size: usize },
    #[error("vector has dimension {found}, expected {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("vector for {0} has zero norm")]
    ZeroVector(String),
    #[error("embedding failed for {} item(s) ({}): {message}", ids.len(), ids.join(", "))]
    EmbeddingFailed { ids: Vec<String>, message: String },
    #[error("embedding file line {line}: {message}")]
    EmbeddingFile { line: usize, message: String },
    #[error("{0} selection needs embeddings")]
    NoEmbeddings(Strategy),
    #[error("hybrid selection needs at least one demonstration per strategy")]
    ZeroShotsEach,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Bm25,
    Semantic,
    Hybrid,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Random, Strategy::Bm25, Strategy::Semantic, Strategy::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Bm25 => "bm25",
            Strategy::Semantic => "semantic",
            Strategy::Hybrid => "hybrid",
        }
    }

    pub fn needs_embeddings(self) -> bool {
        matches!(self, Strategy::Semantic | Strategy::Hybrid)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown strategy {s:?} (expected random, bm25, semantic or hybrid)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    pub doc_id: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub strategy: Strategy,
    pub picks: Vec<Pick>,
    pub seed: Option<u64>,
}

impl SelectionResult {
    pub fn doc_ids(&self) -> Vec<usize> {
        self.picks.iter().map(|p| p.doc_id).collect()
    }
}

/// Case-folded whitespace tokens with surrounding punctuation removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|w| trim_edge_punct(&w.to_lowercase()).to_string()).filter(|w| !w.is_empty()).collect()
}

/// `min(k, pool_size)` distinct indices drawn uniformly without replacement,
/// skipping `exclude`.
pub fn select_random(pool_size: usize, k: usize, seed: u64, exclude: Option<usize>) -> SelectionResult {
    let skip = exclude.filter(|&e| e < pool_size);
    let available = pool_size - usize::from(skip.is_some());
    let mut rng = crate::seed::rng(seed);
    let picks = rand::seq::index::sample(&mut rng, available, k.min(available))
        .into_iter()
        .map(|i| match skip {
            Some(e) if i >= e => i + 1,
            _ => i,
        })
        .map(|doc_id| Pick { doc_id, score: 0.0 })
        .collect();
    SelectionResult { strategy: Strategy::Random, picks, seed: Some(seed) }
}

/// Top-`k` documents by descending score, ties by ascending doc id.
pub(crate) fn top_k(scores: &[f64], k: usize, exclude: Option<usize>) -> Vec<Pick> {
    let mut order: Vec<usize> = (0..scores.len()).filter(|&i| Some(i) != exclude).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.into_iter().map(|doc_id| Pick { doc_id, score: scores[doc_id] }).collect()
}

/// Union of the BM25 and embedding top-`k_each`, duplicates collapsed, in a
/// seeded random order.
pub fn select_hybrid(
    index: &Bm25Index,
    matrix: &EmbeddingMatrix,
    query_text: &str,
    query_vector: &[f64],
    k_each: usize,
    seed: u64,
    exclude: Option<usize>,
) -> Result<SelectionResult, RetrievalError> {
    use rand::seq::SliceRandom;

    if k_each == 0 {
        return Err(RetrievalError::ZeroShotsEach);
    }
    let keyword = index.select(query_text, k_each, exclude);
    let semantic = select_semantic(matrix, query_vector, k_each, exclude)?;
    let mut picks: Vec<Pick> = Vec::with_capacity(2 * k_each);
    for pick in keyword.picks.into_iter().chain(semantic.picks) {
        if !picks.iter().any(|p| p.doc_id == pick.doc_id) {
            picks.push(pick);
        }
    }
    picks.shuffle(&mut crate::seed::rng(seed));
    Ok(SelectionResult { strategy: Strategy::Hybrid, picks, seed: Some(seed) })
}
