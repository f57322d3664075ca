use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{tokenize, top_k, Pick, RetrievalError, SelectionResult, Strategy};
use crate::corpus::Example;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(RetrievalError::InvalidParams(format!("k1 must be positive, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(RetrievalError::InvalidParams(format!("b must lie in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDoc {
    pub doc_id: usize,
    pub tokens: Vec<String>,
}

impl TokenizedDoc {
    pub fn length(&self) -> usize {
        self.tokens.len()
    }
}

/// Okapi BM25 over a fixed pool, with postings lists for fast querying.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    docs: Vec<TokenizedDoc>,
    terms: HashMap<String, usize>,
    /// Per term id: (doc id, term frequency), doc ids ascending.
    postings: Vec<Vec<(usize, u32)>>,
    avg_len: f64,
}

impl Bm25Index {
    pub fn build<S: AsRef<str>>(texts: &[S], params: Bm25Params) -> Result<Self, RetrievalError> {
        params.validate()?;
        if texts.is_empty() {
            return Err(RetrievalError::EmptyPool);
        }
        let docs: Vec<TokenizedDoc> =
            texts.iter().enumerate().map(|(doc_id, t)| TokenizedDoc { doc_id, tokens: tokenize(t.as_ref()) }).collect();
        let mut terms: HashMap<String, usize> = HashMap::new();
        let mut postings: Vec<Vec<(usize, u32)>> = Vec::new();
        for doc in &docs {
            let mut counts: Vec<(usize, u32)> = Vec::new();
            for token in &doc.tokens {
                let next = terms.len();
                let id = *terms.entry(token.clone()).or_insert(next);
                if id == postings.len() {
                    postings.push(Vec::new());
                }
                match counts.iter_mut().find(|(t, _)| *t == id) {
                    Some((_, c)) => *c += 1,
                    None => counts.push((id, 1)),
                }
            }
            for (id, tf) in counts {
                postings[id].push((doc.doc_id, tf));
            }
        }
        let total: usize = docs.iter().map(TokenizedDoc::length).sum();
        let avg_len = total as f64 / docs.len() as f64;
        Ok(Self { params, docs, terms, postings, avg_len })
    }

    pub fn from_examples(pool: &[Example], params: Bm25Params) -> Result<Self, RetrievalError> {
        let sentences: Vec<&str> = pool.iter().map(|e| e.sentence.as_str()).collect();
        Self::build(&sentences, params)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn docs(&self) -> &[TokenizedDoc] {
        &self.docs
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.terms.get(term).map_or(0, |&id| self.postings[id].len())
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, always positive.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, doc_len: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc_len as f64 / self.avg_len))
    }

    /// Score of one document against `query_terms`; repeated query terms
    /// count once.
    pub fn score(&self, query_terms: &[String], doc_id: usize) -> Result<f64, RetrievalError> {
        let doc = self.docs.get(doc_id).ok_or(RetrievalError::DocOutOfRange { doc_id, size: self.docs.len() })?;
        let mut score = 0.0;
        for term in unique(query_terms) {
            let tf = doc.tokens.iter().filter(|t| *t == term).count() as u32;
            if tf > 0 {
                score += self.term_weight(self.idf(term), tf, doc.length());
            }
        }
        Ok(score)
    }

    /// Scores of every document, accumulated through the postings lists.
    pub fn score_all(&self, query_terms: &[String]) -> Vec<f64> {
        let mut scores = vec![0.0; self.docs.len()];
        for term in unique(query_terms) {
            let Some(&id) = self.terms.get(term) else { continue };
            let idf = self.idf(term);
            for &(doc, tf) in &self.postings[id] {
                scores[doc] += self.term_weight(idf, tf, self.docs[doc].length());
            }
        }
        scores
    }

    /// Top-`k` documents for the sentence `query`, skipping `exclude`.
    pub fn select(&self, query: &str, k: usize, exclude: Option<usize>) -> SelectionResult {
        let picks: Vec<Pick> = top_k(&self.score_all(&tokenize(query)), k, exclude);
        SelectionResult { strategy: Strategy::Bm25, picks, seed: None }
    }
}

fn unique(terms: &[String]) -> impl Iterator<Item = &String> {
    terms.iter().enumerate().filter(move |(i, t)| !terms[..*i].contains(t)).map(|(_, t)| t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn terms(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn three_doc_statistics() {
        let index = Bm25Index::build(&["a", "a", "b"], Bm25Params::default()).unwrap();
        assert_eq!(index.len(), 3);
        assert_eq!(index.doc_freq("a"), 2);
        assert_eq!(index.doc_freq("b"), 1);
        assert_eq!(index.doc_freq("zzz"), 0);
        assert_eq!(index.avg_len(), 1.0);
        let score = index.score(&terms(&["b"]), 2).unwrap();
        assert!((score - (8.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((score - 0.9808).abs() < 1e-4);
        assert_eq!(index.score(&terms(&["b"]), 0).unwrap(), 0.0);
        assert!(matches!(index.score(&terms(&["b"]), 3), Err(RetrievalError::DocOutOfRange { .. })));
    }

    #[test]
    fn single_doc_average() {
        let index = Bm25Index::build(&["one two three"], Bm25Params::default()).unwrap();
        assert_eq!(index.avg_len(), 3.0);
    }

    #[test]
    fn rejects_bad_input() {
        let empty: [&str; 0] = [];
        assert!(matches!(Bm25Index::build(&empty, Bm25Params::default()), Err(RetrievalError::EmptyPool)));
        assert!(Bm25Index::build(&["a"], Bm25Params { k1: 0.0, b: 0.75 }).is_err());
        assert!(Bm25Index::build(&["a"], Bm25Params { k1: 1.2, b: 1.5 }).is_err());
    }

    #[test]
    fn repeated_query_terms_count_once() {
        let index = Bm25Index::build(&["a b", "b c", "c d"], Bm25Params::default()).unwrap();
        assert_eq!(index.score(&terms(&["a", "a"]), 0).unwrap(), index.score(&terms(&["a"]), 0).unwrap());
    }

    #[test]
    fn idf_decreases_with_doc_freq() {
        let index = Bm25Index::build(&["a b c", "a b", "a"], Bm25Params::default()).unwrap();
        assert!(index.idf("c") > index.idf("b"));
        assert!(index.idf("b") > index.idf("a"));
        assert!(index.idf("a") > 0.0);
    }

    #[test]
    fn rare_term_wins_and_zero_ties_go_low() {
        let pool = ["the fries were cold", "the burger was great", "the staff was rude", "nice place"];
        let index = Bm25Index::build(&pool, Bm25Params::default()).unwrap();
        assert_eq!(index.select("I loved the burger", 1, None).doc_ids(), [1]);
        assert_eq!(index.select("xyz", 3, None).doc_ids(), [0, 1, 2]);
        assert_eq!(index.select("the burger was great", 2, Some(1)).picks[0].doc_id, 2);
    }
}
