use serde::{Deserialize, Serialize};

use super::{top_k, RetrievalError, SelectionResult, Strategy};

/// One unit-length vector per pool document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    provider_id: String,
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingMatrix {
    /// Normalizes every row; rows must share one dimension and be non-zero.
    pub fn new(provider_id: impl Into<String>, vectors: Vec<Vec<f64>>) -> Result<Self, RetrievalError> {
        let dim = vectors.first().map_or(0, Vec::len);
        let vectors = vectors
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                if v.len() != dim {
                    return Err(RetrievalError::DimMismatch { expected: dim, found: v.len() });
                }
                normalize(&v).ok_or_else(|| RetrievalError::ZeroVector(format!("row {i}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { provider_id: provider_id.into(), dim, vectors })
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn row(&self, doc_id: usize) -> Option<&[f64]> {
        self.vectors.get(doc_id).map(Vec::as_slice)
    }
}

/// `v / |v|`, or `None` for a zero or non-finite vector.
pub fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| x / norm).collect())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Top-`k` documents by cosine similarity to `query_vector`, which must
/// already be unit length.
pub fn select_semantic(
    matrix: &EmbeddingMatrix,
    query_vector: &[f64],
    k: usize,
    exclude: Option<usize>,
) -> Result<SelectionResult, RetrievalError> {
    if query_vector.len() != matrix.dim {
        return Err(RetrievalError::DimMismatch { expected: matrix.dim, found: query_vector.len() });
    }
    let scores: Vec<f64> = matrix.vectors.iter().map(|v| dot(v, query_vector)).collect();
    Ok(SelectionResult { strategy: Strategy::Semantic, picks: top_k(&scores, k, exclude), seed: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_and_orthogonal_queries() {
        let m = EmbeddingMatrix::new("t", vec![vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 1.0, 1.0]]).unwrap();
        let r = select_semantic(&m, &[0.0, 1.0, 0.0], 1, None).unwrap();
        assert_eq!(r.picks[0].doc_id, 1);
        assert!((r.picks[0].score - 1.0).abs() < 1e-12);
        let m2 = EmbeddingMatrix::new("t", vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]]).unwrap();
        let r = select_semantic(&m2, &[0.0, 1.0], 2, None).unwrap();
        assert_eq!(r.doc_ids(), [0, 1]);
        assert!(r.picks.iter().all(|p| p.score == 0.0));
        assert!(select_semantic(&m2, &[1.0, 0.0], 5, Some(0)).unwrap().doc_ids() == [1, 2]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            EmbeddingMatrix::new("t", vec![vec![1.0, 0.0], vec![1.0]]),
            Err(RetrievalError::DimMismatch { .. })
        ));
        assert!(matches!(EmbeddingMatrix::new("t", vec![vec![0.0, 0.0]]), Err(RetrievalError::ZeroVector(_))));
        let m = EmbeddingMatrix::new("t", vec![vec![1.0, 0.0]]).unwrap();
        assert!(matches!(select_semantic(&m, &[1.0], 1, None), Err(RetrievalError::DimMismatch { .. })));
    }

    #[test]
    fn rows_are_unit_length() {
        let m = EmbeddingMatrix::new("t", vec![vec![3.0, 4.0], vec![-1.0, 1e-3]]).unwrap();
        for v in m.vectors() {
            assert!((dot(v, v).sqrt() - 1.0).abs() < 1e-12);
        }
    }
}
