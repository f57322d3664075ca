//! Selection results checked against brute-force score-and-sort oracles.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use absa_core::retrieval::{
    embed_pool, select_hybrid, select_semantic, Bm25Index, Bm25Params, EmbedItem, Embedder, EmbeddingBackend,
    EmbeddingMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: [&str; 12] = ["a", "b", "c", "d", "e", "f", "g", "h", "burger", "fries", "staff", "view"];

fn random_doc(rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let len = rng.random_range(0..9);
    (0..len).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect()
}

/// Okapi BM25 straight from its definition, recomputing every statistic.
fn oracle_bm25(docs: &[Vec<&str>], query: &[&str], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut seen: Vec<&str> = Vec::new();
    let mut scores = vec![0.0; docs.len()];
    for &t in query {
        if seen.contains(&t) {
            continue;
        }
        seen.push(t);
        let df = docs.iter().filter(|d| d.contains(&t)).count() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        for (i, d) in docs.iter().enumerate() {
            let f = d.iter().filter(|w| **w == t).count() as f64;
            if f > 0.0 {
                scores[i] += idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * d.len() as f64 / avg));
            }
        }
    }
    scores
}

fn oracle_rank(scores: &[f64], k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = scores.iter().copied().enumerate().filter(|(i, _)| Some(*i) != exclude).collect();
    all.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    all.truncate(k);
    all
}

#[test]
fn bm25_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..1000 {
        let n = rng.random_range(1..=200);
        let docs: Vec<Vec<&str>> = (0..n).map(|_| random_doc(&mut rng)).collect();
        let query = random_doc(&mut rng);
        let k = rng.random_range(0..12);
        let exclude = rng.random_bool(0.5).then(|| rng.random_range(0..n));
        let params = Bm25Params { k1: 1.5, b: 0.75 };
        let texts: Vec<String> = docs.iter().map(|d| d.join(" ")).collect();
        let index = Bm25Index::build(&texts, params).unwrap();

        let expected = oracle_rank(&oracle_bm25(&docs, &query, params.k1, params.b), k, exclude);
        let got = index.select(&query.join(" "), k, exclude);
        let got: Vec<(usize, f64)> = got.picks.iter().map(|p| (p.doc_id, p.score)).collect();
        assert_eq!(got, expected, "case {case}");

        let terms: Vec<String> = query.iter().map(|t| t.to_string()).collect();
        for (doc, score) in &expected {
            assert_eq!(index.score(&terms, *doc).unwrap(), *score);
        }
    }
}

#[test]
fn bm25_zero_iff_no_shared_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let docs: Vec<Vec<&str>> = (0..20).map(|_| random_doc(&mut rng)).collect();
        let texts: Vec<String> = docs.iter().map(|d| d.join(" ")).collect();
        let index = Bm25Index::build(&texts, Bm25Params::default()).unwrap();
        let query = random_doc(&mut rng);
        let terms: Vec<String> = query.iter().map(|t| t.to_string()).collect();
        for (i, d) in docs.iter().enumerate() {
            let shares = query.iter().any(|t| d.contains(t));
            let score = index.score(&terms, i).unwrap();
            assert!(score >= 0.0);
            assert_eq!(score > 0.0, shares);
        }
    }
}

#[test]
fn bm25_monotone_in_term_frequency() {
    for extra in 1..6 {
        let base = "burger a b";
        let boosted = format!("{base}{}", " burger".repeat(extra));
        let lower = Bm25Index::build(&[base, "c d e f", "g h"], Bm25Params::default()).unwrap();
        let higher = Bm25Index::build(&[boosted.as_str(), "c d e f", "g h"], Bm25Params { k1: 1.5, b: 0.0 }).unwrap();
        let lower_b0 = Bm25Index::build(&[base, "c d e f", "g h"], Bm25Params { k1: 1.5, b: 0.0 }).unwrap();
        let q = vec!["burger".to_string()];
        assert!(higher.score(&q, 0).unwrap() >= lower_b0.score(&q, 0).unwrap());
        assert!(lower.score(&q, 0).unwrap() > 0.0);
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

#[test]
fn semantic_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let n = rng.random_range(1..=200);
        let dim = rng.random_range(1..8);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| random_unit(&mut rng, dim)).collect();
        let matrix = EmbeddingMatrix::new("oracle", rows).unwrap();
        let query = random_unit(&mut rng, dim);
        let k = rng.random_range(0..12);
        let exclude = rng.random_bool(0.5).then(|| rng.random_range(0..n));

        let sims: Vec<f64> = matrix.vectors().iter().map(|v| v.iter().zip(&query).map(|(a, b)| a * b).sum()).collect();
        let expected = oracle_rank(&sims, k, exclude);
        let got = select_semantic(&matrix, &query, k, exclude).unwrap();
        let got: Vec<(usize, f64)> = got.picks.iter().map(|p| (p.doc_id, p.score)).collect();
        assert_eq!(got, expected, "case {case}");
    }
}

#[test]
fn hybrid_union_sizes_and_determinism() {
    // Docs 0..3 match the query by keyword, docs 3..6 by direction.
    let texts = ["burger one", "burger two", "burger three", "x", "y", "z", "w"];
    let index = Bm25Index::build(&texts, Bm25Params::default()).unwrap();
    let rows = vec![
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        vec![1.0, 0.0],
        vec![1.0, 0.01],
        vec![1.0, 0.02],
        vec![0.0, 1.0],
    ];
    let matrix = EmbeddingMatrix::new("t", rows).unwrap();
    let disjoint = select_hybrid(&index, &matrix, "burger", &[1.0, 0.0], 3, 5, None).unwrap();
    let mut ids = disjoint.doc_ids();
    ids.sort();
    assert_eq!(ids, [0, 1, 2, 3, 4, 5]);
    assert_eq!(disjoint, select_hybrid(&index, &matrix, "burger", &[1.0, 0.0], 3, 5, None).unwrap());

    let overlap = select_hybrid(&index, &matrix, "burger", &[0.0, 1.0], 3, 5, None).unwrap();
    let mut ids = overlap.doc_ids();
    ids.sort();
    assert_eq!(ids, [0, 1, 2]);

    let orders: std::collections::HashSet<Vec<usize>> = (0..20)
        .map(|seed| select_hybrid(&index, &matrix, "burger", &[1.0, 0.0], 3, seed, None).unwrap().doc_ids())
        .collect();
    assert!(orders.len() > 1, "permutation depends on the seed");
    assert!(select_hybrid(&index, &matrix, "burger", &[1.0, 0.0], 0, 5, None).is_err());
}

struct CountingBackend {
    calls: AtomicUsize,
    items: AtomicUsize,
}

impl EmbeddingBackend for CountingBackend {
    fn provider_id(&self) -> &str {
        "counting"
    }

    fn embed(&self, items: &[EmbedItem]) -> Vec<Result<Vec<f64>, String>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.items.fetch_add(items.len(), Ordering::SeqCst);
        items
            .iter()
            .map(
                |i| {
                    if i.text == "boom" {
                        Err("backend refused".into())
                    } else {
                        Ok(vec![i.text.len() as f64, 1.0, 2.0])
                    }
                },
            )
            .collect()
    }
}

#[test]
fn embedding_cache_avoids_backend_calls() {
    let dir = tempfile::tempdir().unwrap();
    let backend = Arc::new(CountingBackend { calls: AtomicUsize::new(0), items: AtomicUsize::new(0) });
    let embedder = Embedder::new(backend.clone(), Some(dir.path()));
    let items: Vec<EmbedItem> = ["short", "a longer sentence"]
        .iter()
        .enumerate()
        .map(|(i, t)| EmbedItem { id: i.to_string(), text: t.to_string() })
        .collect();

    let first = embed_pool(&embedder, &items).unwrap();
    assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
    for v in first.vectors() {
        assert!((v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-6);
    }

    let again = Embedder::new(backend.clone(), Some(dir.path()));
    let second = embed_pool(&again, &items).unwrap();
    assert_eq!(backend.calls.load(Ordering::SeqCst), 1, "cached sentences never reach the backend");
    assert_eq!(first, second);

    let mut mixed = items.clone();
    mixed.push(EmbedItem { id: "new".into(), text: "fresh".into() });
    embed_pool(&again, &mixed).unwrap();
    assert_eq!(backend.items.load(Ordering::SeqCst), 3, "only the uncached sentence is sent");

    let bad =
        vec![EmbedItem { id: "x9".into(), text: "boom".into() }, EmbedItem { id: "ok".into(), text: "fine".into() }];
    let err = embed_pool(&again, &bad).unwrap_err().to_string();
    assert!(err.contains("x9") && !err.contains("ok,"), "{err}");
}
