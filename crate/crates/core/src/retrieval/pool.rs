use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{
    select_hybrid, select_random, select_semantic, Bm25Index, Bm25Params, EmbeddingMatrix, RetrievalError,
    SelectionResult, Strategy,
};
use crate::corpus::Example;

/// Order in which selected demonstrations appear in the prompt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemoOrder {
    /// Highest-scoring demonstration first.
    #[default]
    BestFirst,
    /// Highest-scoring demonstration last, next to the tested sample.
    WorstFirst,
}

impl std::str::FromStr for DemoOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "best-first" => Ok(DemoOrder::BestFirst),
            "worst-first" => Ok(DemoOrder::WorstFirst),
            other => Err(format!("unknown demonstration order {other:?} (expected best-first or worst-first)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub strategy: Strategy,
    /// Demonstrations per prompt; for hybrid, per component strategy.
    pub shots: usize,
    pub order: DemoOrder,
    pub bm25: Bm25Params,
}

/// A demonstration pool with its retrieval indexes.
pub struct DemoPool<'a> {
    examples: &'a [Example],
    positions: HashMap<&'a str, usize>,
    bm25: Bm25Index,
    embeddings: Option<EmbeddingMatrix>,
}

impl<'a> DemoPool<'a> {
    pub fn new(examples: &'a [Example], params: Bm25Params) -> Result<Self, RetrievalError> {
        let bm25 = Bm25Index::from_examples(examples, params)?;
        let positions = examples.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();
        Ok(Self { examples, positions, bm25, embeddings: None })
    }

    pub fn with_embeddings(mut self, matrix: EmbeddingMatrix) -> Result<Self, RetrievalError> {
        if matrix.len() != self.examples.len() {
            return Err(RetrievalError::DimMismatch { expected: self.examples.len(), found: matrix.len() });
        }
        self.embeddings = Some(matrix);
        Ok(self)
    }

    pub fn examples(&self) -> &'a [Example] {
        self.examples
    }

    pub fn bm25(&self) -> &Bm25Index {
        &self.bm25
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    /// Picks demonstrations for `query`. The query itself is never picked
    /// when it belongs to the pool. Hybrid and random orders are kept as
    /// drawn; ranked strategies follow `config.order`.
    pub fn select(
        &self,
        config: &SelectionConfig,
        query: &Example,
        query_vector: Option<&[f64]>,
        seed: u64,
    ) -> Result<SelectionResult, RetrievalError> {
        let exclude = self.position(&query.id);
        let embedded = || match (&self.embeddings, query_vector) {
            (Some(m), Some(v)) => Ok((m, v)),
            _ => Err(RetrievalError::NoEmbeddings(config.strategy)),
        };
        let mut result = match config.strategy {
            Strategy::Random => select_random(self.examples.len(), config.shots, seed, exclude),
            Strategy::Bm25 => self.bm25.select(&query.sentence, config.shots, exclude),
            Strategy::Semantic => {
                let (m, v) = embedded()?;
                select_semantic(m, v, config.shots, exclude)?
            }
            Strategy::Hybrid => {
                let (m, v) = embedded()?;
                select_hybrid(&self.bm25, m, &query.sentence, v, config.shots, seed, exclude)?
            }
        };
        if matches!(config.strategy, Strategy::Bm25 | Strategy::Semantic) && config.order == DemoOrder::WorstFirst {
            result.picks.reverse();
        }
        Ok(result)
    }

    pub fn demonstrations(&self, result: &SelectionResult) -> Vec<&'a Example> {
        result.picks.iter().map(|p| &self.examples[p.doc_id]).collect()
    }
}
