use absa_core::corpus::{DatasetKey, Polarity, SentimentTuple, Subtask};
use absa_core::parse::ParseStatus;
use absa_core::score::{build_report, match_counts, micro_f1, score_records, MatchCounts, PredictionRecord, ReportRun};
use proptest::prelude::*;

fn key() -> DatasetKey {
    "D20/L14".parse().unwrap()
}

fn small_tuple() -> impl Strategy<Value = SentimentTuple> {
    (
        prop::sample::select(vec!["burger", "Burger", "fries", "staff", "view"]),
        prop::sample::select(vec!["good", "bad", "not  good"]),
        prop::sample::select(Polarity::ALL.to_vec()),
    )
        .prop_map(|(a, o, p)| SentimentTuple::aste(a, o, p))
}

fn side() -> impl Strategy<Value = Vec<SentimentTuple>> {
    prop::collection::vec(small_tuple(), 0..=6)
}

fn record(pred: &[SentimentTuple], gold: &[SentimentTuple]) -> PredictionRecord {
    PredictionRecord::new("x", key(), Subtask::Aste, pred, gold, ParseStatus::Clean)
}

/// Pairwise comparison on hand-normalized, hand-deduplicated tuples.
fn oracle(pairs: &[(Vec<SentimentTuple>, Vec<SentimentTuple>)]) -> MatchCounts {
    let norm = |t: &SentimentTuple| {
        let f =
            |s: &Option<String>| s.as_ref().map(|s| s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" "));
        (f(&t.aspect), f(&t.opinion), t.polarity)
    };
    let set = |ts: &[SentimentTuple]| {
        let mut v: Vec<_> = ts.iter().map(norm).collect();
        v.sort();
        v.dedup();
        v
    };
    let mut counts = MatchCounts::default();
    for (p, g) in pairs {
        let (p, g) = (set(p), set(g));
        counts.num_pred += p.len();
        counts.num_gold += g.len();
        for x in &p {
            for y in &g {
                if x == y {
                    counts.num_correct += 1;
                }
            }
        }
    }
    counts
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn counts_match_pairwise_oracle(pairs in prop::collection::vec((side(), side()), 1..5)) {
        let records: Vec<PredictionRecord> = pairs.iter().map(|(p, g)| record(p, g)).collect();
        prop_assert_eq!(match_counts(&records).unwrap(), oracle(&pairs));
    }

    #[test]
    fn bounds_and_harmonic_mean(pred in side(), gold in side()) {
        let prf = micro_f1(match_counts(&[record(&pred, &gold)]).unwrap());
        for v in [prf.precision, prf.recall, prf.f1] {
            prop_assert!((0.0..=100.0).contains(&v));
        }
        prop_assert!(prf.f1 <= prf.precision.max(prf.recall) + 1e-9);
        if prf.precision + prf.recall > 0.0 {
            prop_assert!((prf.f1 - 2.0 * prf.precision * prf.recall / (prf.precision + prf.recall)).abs() < 1e-9);
        } else {
            prop_assert_eq!(prf.f1, 0.0);
        }
    }

    #[test]
    fn swapping_sides_swaps_p_and_r(pred in side(), gold in side()) {
        let a = micro_f1(match_counts(&[record(&pred, &gold)]).unwrap());
        let b = micro_f1(match_counts(&[record(&gold, &pred)]).unwrap());
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.recall, b.precision);
        prop_assert!((a.f1 - b.f1).abs() < 1e-12);
    }

    #[test]
    fn duplicates_do_not_change_scores(pred in side(), gold in side()) {
        let doubled: Vec<SentimentTuple> = pred.iter().chain(pred.iter()).cloned().collect();
        prop_assert_eq!(
            match_counts(&[record(&pred, &gold)]).unwrap(),
            match_counts(&[record(&doubled, &gold)]).unwrap()
        );
    }
}

fn synthetic_report() -> String {
    let t = |a: &str, o: &str, p| SentimentTuple::aste(a, o, p);
    let mut records = Vec::new();
    for (name, hits) in [("L14", 3), ("R14", 2), ("R15", 1)] {
        let key: DatasetKey = format!("D20/{name}").parse().unwrap();
        for i in 0..4 {
            let gold = vec![t("burger", "good", Polarity::Positive)];
            let pred = if i < hits { gold.clone() } else { vec![t("fries", "bad", Polarity::Negative)] };
            let status = if i == 3 { ParseStatus::Salvaged } else { ParseStatus::Clean };
            records.push(PredictionRecord::new(
                format!("{name}-{i}"),
                key.clone(),
                Subtask::Aste,
                &pred,
                &gold,
                status,
            ));
        }
    }
    let key: DatasetKey = "D17/R14".parse().unwrap();
    let ae = SentimentTuple { aspect: Some("burger".into()), ..Default::default() };
    records.push(PredictionRecord::new(
        "ae-0",
        key,
        Subtask::Ae,
        std::slice::from_ref(&ae),
        std::slice::from_ref(&ae),
        ParseStatus::Clean,
    ));
    let report = build_report(vec![ReportRun { label: "synthetic".into(), per_dataset: score_records(&records) }]);
    report.render()
}

#[test]
fn golden_report_rendering() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/report_golden.txt");
    let rendered = synthetic_report();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(path, &rendered).unwrap();
    }
    let expected = std::fs::read_to_string(path).expect("golden file present (UPDATE_GOLDEN=1 writes it)");
    assert_eq!(rendered, expected);
}
