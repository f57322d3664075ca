//! Exact-match micro precision, recall and F1, per dataset and in the
//! three result-table layouts (single-element subtasks, compound subtasks,
//! quad prediction).

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DatasetGroup, DatasetKey, SentimentTuple, Subtask};
use crate::parse::{normalize_tuple, ParseStatus};

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("records mix {0}/{1} with {2}/{3}")]
    MixedDatasets(DatasetKey, Subtask, DatasetKey, Subtask),
    #[error("no records to score")]
    Empty,
}

/// Prediction and gold for one test query, both stored as normalized,
/// duplicate-free tuple sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub example_id: String,
    pub dataset: DatasetKey,
    pub subtask: Subtask,
    pub predicted: Vec<SentimentTuple>,
    pub gold: Vec<SentimentTuple>,
    pub parse_status: ParseStatus,
}

impl PredictionRecord {
    pub fn new(
        example_id: impl Into<String>,
        dataset: DatasetKey,
        subtask: Subtask,
        predicted: &[SentimentTuple],
        gold: &[SentimentTuple],
        parse_status: ParseStatus,
    ) -> Self {
        Self {
            example_id: example_id.into(),
            dataset,
            subtask,
            predicted: normalized_set(predicted),
            gold: normalized_set(gold),
            parse_status,
        }
    }

    pub fn num_correct(&self) -> usize {
        self.predicted.iter().filter(|t| self.gold.contains(t)).count()
    }
}

pub fn normalized_set(tuples: &[SentimentTuple]) -> Vec<SentimentTuple> {
    let mut out: Vec<SentimentTuple> = Vec::with_capacity(tuples.len());
    for t in tuples.iter().map(normalize_tuple) {
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub num_pred: usize,
    pub num_gold: usize,
    pub num_correct: usize,
}

impl std::ops::Add for MatchCounts {
    type Output = MatchCounts;

    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts {
            num_pred: self.num_pred + o.num_pred,
            num_gold: self.num_gold + o.num_gold,
            num_correct: self.num_correct + o.num_correct,
        }
    }
}

pub fn match_counts(records: &[PredictionRecord]) -> Result<MatchCounts, ScoreError> {
    if let Some(first) = records.first() {
        if let Some(other) = records.iter().find(|r| r.dataset != first.dataset || r.subtask != first.subtask) {
            return Err(ScoreError::MixedDatasets(
                first.dataset.clone(),
                first.subtask,
                other.dataset.clone(),
                other.subtask,
            ));
        }
    }
    Ok(records
        .iter()
        .map(|r| MatchCounts { num_pred: r.predicted.len(), num_gold: r.gold.len(), num_correct: r.num_correct() })
        .fold(MatchCounts::default(), |a, b| a + b))
}

/// Precision, recall and F1 in percent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn micro_f1(counts: MatchCounts) -> Prf {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    let precision = ratio(counts.num_correct, counts.num_pred);
    let recall = ratio(counts.num_correct, counts.num_gold);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Prf { precision, recall, f1 }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseSummary {
    pub clean: usize,
    pub salvaged: usize,
    pub failed: usize,
}

impl ParseSummary {
    pub fn total(&self) -> usize {
        self.clean + self.salvaged + self.failed
    }

    /// Share of outputs that were not clean.
    pub fn anomaly_rate(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.salvaged + self.failed) as f64 / self.total() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetScore {
    pub dataset: DatasetKey,
    pub subtask: Subtask,
    pub queries: usize,
    pub counts: MatchCounts,
    pub scores: Prf,
    pub parse: ParseSummary,
}

pub fn score_dataset(records: &[PredictionRecord]) -> Result<DatasetScore, ScoreError> {
    let first = records.first().ok_or(ScoreError::Empty)?;
    let counts = match_counts(records)?;
    let mut parse = ParseSummary::default();
    for r in records {
        match r.parse_status {
            ParseStatus::Clean => parse.clean += 1,
            ParseStatus::Salvaged => parse.salvaged += 1,
            ParseStatus::Failed => parse.failed += 1,
        }
    }
    Ok(DatasetScore {
        dataset: first.dataset.clone(),
        subtask: first.subtask,
        queries: records.len(),
        counts,
        scores: micro_f1(counts),
        parse,
    })
}

/// Groups records by (dataset, subtask), in first-seen order, and scores each.
pub fn score_records(records: &[PredictionRecord]) -> Vec<DatasetScore> {
    let mut groups: Vec<(&DatasetKey, Subtask, Vec<PredictionRecord>)> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|(k, s, _)| *k == &r.dataset && *s == r.subtask) {
            Some((_, _, members)) => members.push(r.clone()),
            None => groups.push((&r.dataset, r.subtask, vec![r.clone()])),
        }
    }
    groups
        .into_iter()
        .map(|(_, _, members)| score_dataset(&members).expect("groups are non-empty and uniform"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableLayout {
    /// AE, OE, ALSC and AOE.
    Single,
    /// AESC, AOPE and ASTE.
    Compound,
    /// ASQP.
    Quad,
}

impl TableLayout {
    pub const ALL: [TableLayout; 3] = [TableLayout::Single, TableLayout::Compound, TableLayout::Quad];

    pub fn for_subtask(subtask: Subtask) -> TableLayout {
        match subtask {
            Subtask::Ae | Subtask::Oe | Subtask::Alsc | Subtask::Aoe => TableLayout::Single,
            Subtask::Aesc | Subtask::Aope | Subtask::Aste => TableLayout::Compound,
            Subtask::Asqp => TableLayout::Quad,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            TableLayout::Single => "Single-element subtasks: AE, OE, ALSC, AOE",
            TableLayout::Compound => "Compound subtasks: AESC, AOPE, ASTE",
            TableLayout::Quad => "Quad prediction: ASQP",
        }
    }

    pub fn subtasks(self) -> Vec<Subtask> {
        Subtask::ALL.into_iter().filter(|s| TableLayout::for_subtask(*s) == self).collect()
    }

    /// Column order: subtasks in catalogue order, each over its datasets.
    pub fn columns(self) -> Vec<(Subtask, DatasetKey)> {
        self.subtasks()
            .into_iter()
            .flat_map(|s| {
                let group = DatasetGroup::for_subtask(s);
                group.dataset_names().iter().map(move |n| (s, DatasetKey::new(group, *n)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    /// F1 per column; `None` where the run has no score.
    pub cells: Vec<Option<f64>>,
    /// Unweighted mean of the present cells.
    pub avg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub layout: TableLayout,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRun {
    pub label: String,
    pub per_dataset: Vec<DatasetScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub runs: Vec<ReportRun>,
    pub tables: Vec<ResultTable>,
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Lays labelled runs out as result-table rows. Tables none of the runs
/// touch are left out.
pub fn build_report(runs: Vec<ReportRun>) -> ScoreReport {
    let mut tables = Vec::new();
    for layout in TableLayout::ALL {
        let columns = layout.columns();
        let rows: Vec<TableRow> = runs
            .iter()
            .map(|run| {
                let cells: Vec<Option<f64>> = columns
                    .iter()
                    .map(|(s, key)| {
                        run.per_dataset.iter().find(|d| d.subtask == *s && &d.dataset == key).map(|d| d.scores.f1)
                    })
                    .collect();
                let present: Vec<f64> = cells.iter().flatten().copied().collect();
                TableRow { label: run.label.clone(), avg: mean(&present), cells }
            })
            .filter(|row| row.avg.is_some())
            .collect();
        if !rows.is_empty() {
            tables.push(ResultTable {
                layout,
                columns: columns.iter().map(|(s, k)| format!("{s}-{}", k.name)).collect(),
                rows,
            });
        }
    }
    ScoreReport { runs, tables }
}

fn cell(value: Option<f64>) -> String {
    value.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

impl ScoreReport {
    /// Per-dataset counts and scores, then each result table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let label_width = self.runs.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
        writeln!(
            out,
            "{:<lw$}  {:<5}  {:<7}  {:<4}  {:>5}  {:>5}  {:>7}  {:>6}  {:>6}  {:>6}  {:>8}",
            "Run",
            "Group",
            "Dataset",
            "Task",
            "Pred",
            "Gold",
            "Correct",
            "P",
            "R",
            "F1",
            "Anomaly",
            lw = label_width
        )
        .unwrap();
        for run in &self.runs {
            for d in &run.per_dataset {
                writeln!(
                    out,
                    "{:<lw$}  {:<5}  {:<7}  {:<4}  {:>5}  {:>5}  {:>7}  {:>6.2}  {:>6.2}  {:>6.2}  {:>7.1}%",
                    run.label,
                    d.dataset.group.id(),
                    d.dataset.name,
                    d.subtask.id(),
                    d.counts.num_pred,
                    d.counts.num_gold,
                    d.counts.num_correct,
                    d.scores.precision,
                    d.scores.recall,
                    d.scores.f1,
                    100.0 * d.parse.anomaly_rate(),
                    lw = label_width
                )
                .unwrap();
            }
        }
        for table in &self.tables {
            out.push('\n');
            writeln!(out, "{}", table.layout.title()).unwrap();
            let widths: Vec<usize> = table.columns.iter().map(|c| c.len().max(6)).collect();
            let mut header = format!("{:<label_width$}", "Run");
            for (c, w) in table.columns.iter().zip(&widths) {
                write!(header, "  {c:>w$}").unwrap();
            }
            write!(header, "  {:>6}", "AVG").unwrap();
            writeln!(out, "{header}").unwrap();
            for row in &table.rows {
                let mut line = format!("{:<label_width$}", row.label);
                for (v, w) in row.cells.iter().zip(&widths) {
                    write!(line, "  {:>w$}", cell(*v)).unwrap();
                }
                write!(line, "  {:>6}", cell(row.avg)).unwrap();
                writeln!(out, "{line}").unwrap();
            }
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from(
            "run,group,dataset,subtask,queries,num_pred,num_gold,num_correct,precision,recall,f1,clean,salvaged,failed\n",
        );
        for run in &self.runs {
            for d in &run.per_dataset {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{:.4},{:.4},{:.4},{},{},{}",
                    csv_field(&run.label),
                    d.dataset.group.id(),
                    d.dataset.name,
                    d.subtask.id(),
                    d.queries,
                    d.counts.num_pred,
                    d.counts.num_gold,
                    d.counts.num_correct,
                    d.scores.precision,
                    d.scores.recall,
                    d.scores.f1,
                    d.parse.clean,
                    d.parse.salvaged,
                    d.parse.failed
                )
                .unwrap();
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Polarity;

    fn key(s: &str) -> DatasetKey {
        s.parse().unwrap()
    }

    fn t(a: &str, o: &str, p: Polarity) -> SentimentTuple {
        SentimentTuple::aste(a, o, p)
    }

    #[test]
    fn hand_counted_intersection() {
        let (t1, t2, t3, t4) = (
            t("burger", "delicious", Polarity::Positive),
            t("juice", "not good", Polarity::Negative),
            t("staff", "rude", Polarity::Negative),
            t("view", "nice", Polarity::Positive),
        );
        let r = PredictionRecord::new(
            "x",
            key("D20/R15"),
            Subtask::Aste,
            &[t1.clone(), t4],
            &[t1, t2, t3],
            ParseStatus::Clean,
        );
        let counts = match_counts(&[r]).unwrap();
        assert_eq!(counts, MatchCounts { num_pred: 2, num_gold: 3, num_correct: 1 });
        let prf = micro_f1(counts);
        assert_eq!(prf.precision, 50.0);
        assert!((prf.recall - 100.0 / 3.0).abs() < 1e-9);
        assert!((prf.f1 - 40.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_counts() {
        assert_eq!(micro_f1(MatchCounts { num_pred: 0, num_gold: 5, num_correct: 0 }), Prf::default());
        assert_eq!(micro_f1(MatchCounts::default()), Prf::default());
        let perfect = micro_f1(MatchCounts { num_pred: 4, num_gold: 4, num_correct: 4 });
        assert_eq!((perfect.precision, perfect.recall, perfect.f1), (100.0, 100.0, 100.0));
    }

    #[test]
    fn normalizes_and_dedups() {
        let g = t("Burger ", "DELICIOUS", Polarity::Positive);
        let r = PredictionRecord::new(
            "x",
            key("D20/R15"),
            Subtask::Aste,
            &[t("burger", "delicious", Polarity::Positive), t("burger", "delicious", Polarity::Positive)],
            &[g],
            ParseStatus::Clean,
        );
        assert_eq!(match_counts(&[r]).unwrap(), MatchCounts { num_pred: 1, num_gold: 1, num_correct: 1 });
    }

    #[test]
    fn mixed_records_rejected() {
        let a = PredictionRecord::new("a", key("D20/R15"), Subtask::Aste, &[], &[], ParseStatus::Clean);
        let b = PredictionRecord::new("b", key("D20/R16"), Subtask::Aste, &[], &[], ParseStatus::Clean);
        assert!(matches!(match_counts(&[a, b]), Err(ScoreError::MixedDatasets(..))));
    }

    fn score(subtask: Subtask, dataset: &str, f1: f64) -> DatasetScore {
        DatasetScore {
            dataset: key(dataset),
            subtask,
            queries: 1,
            counts: MatchCounts::default(),
            scores: Prf { precision: f1, recall: f1, f1 },
            parse: ParseSummary::default(),
        }
    }

    #[test]
    fn layouts_and_averages() {
        assert_eq!(TableLayout::Single.columns().len(), 13);
        assert_eq!(TableLayout::Compound.columns().len(), 12);
        assert_eq!(TableLayout::Quad.columns().len(), 2);

        let all: Vec<DatasetScore> =
            TableLayout::Single.columns().into_iter().map(|(s, k)| score(s, &k.to_string(), 80.0)).collect();
        let report = build_report(vec![ReportRun { label: "run".into(), per_dataset: all }]);
        assert_eq!(report.tables.len(), 1);
        assert!((report.tables[0].rows[0].avg.unwrap() - 80.0).abs() < 1e-12);

        let two = vec![score(Subtask::Aste, "D20/L14", 70.0), score(Subtask::Aste, "D20/R14", 80.0)];
        let report = build_report(vec![ReportRun { label: "run".into(), per_dataset: two }]);
        assert_eq!(report.tables[0].layout, TableLayout::Compound);
        assert_eq!(report.tables[0].rows[0].avg, Some(75.0));
    }
}
