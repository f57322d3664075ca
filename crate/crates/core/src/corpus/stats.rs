use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use super::{Dataset, DatasetKey, Split, Subtask};

/// One row per dataset (`group × name`). `None` counts render as `/`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StatsRow {
    pub group: String,
    pub name: String,
    pub train: Option<usize>,
    pub validation: Option<usize>,
    pub test: Option<usize>,
    pub subtasks: Vec<Subtask>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StatsTable {
    pub rows: Vec<StatsRow>,
}

/// Example counts per dataset and split. When a dataset serves several
/// subtasks, the count comes from the first subtask (in catalogue order) that
/// has the split; the subtask files of one dataset annotate the same sentences.
pub fn dataset_stats(datasets: &[Dataset]) -> StatsTable {
    let mut by_key: BTreeMap<&DatasetKey, Vec<&Dataset>> = BTreeMap::new();
    for ds in datasets {
        by_key.entry(&ds.key).or_default().push(ds);
    }
    let rows = by_key
        .into_iter()
        .map(|(key, mut parts)| {
            parts.sort_by_key(|d| (d.subtask, d.split));
            let count = |split: Split| parts.iter().find(|d| d.split == split).map(|d| d.len());
            let mut subtasks: Vec<Subtask> = parts.iter().map(|d| d.subtask).collect();
            subtasks.dedup();
            StatsRow {
                group: key.group.id().to_string(),
                name: key.name.clone(),
                train: count(Split::Train),
                validation: count(Split::Validation),
                test: count(Split::Test),
                subtasks,
            }
        })
        .collect();
    StatsTable { rows }
}

fn cell(count: Option<usize>) -> String {
    count.map_or_else(|| "/".to_string(), |c| c.to_string())
}

fn line(cols: [&str; 6]) -> String {
    let s = format!("{:<5}  {:<7}  {:>5}  {:>10}  {:>5}  {}", cols[0], cols[1], cols[2], cols[3], cols[4], cols[5]);
    s.trim_end().to_string()
}

impl StatsTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Aligned text rendering; an empty table renders as the empty string.
    pub fn render(&self) -> String {
        if self.rows.is_empty() {
            return String::new();
        }
        let mut out = String::new();
        writeln!(out, "{}", line(["Group", "Dataset", "Train", "Validation", "Test", "Subtasks"])).unwrap();
        for row in &self.rows {
            let subtasks = row.subtasks.iter().map(|s| s.id()).collect::<Vec<_>>().join(",");
            let (train, validation, test) = (cell(row.train), cell(row.validation), cell(row.test));
            writeln!(out, "{}", line([&row.group, &row.name, &train, &validation, &test, &subtasks])).unwrap();
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("group,dataset,train,validation,test,subtasks\n");
        for row in &self.rows {
            let subtasks = row.subtasks.iter().map(|s| s.id()).collect::<Vec<_>>().join(" ");
            writeln!(
                out,
                "{},{},{},{},{},{}",
                row.group,
                row.name,
                cell(row.train),
                cell(row.validation),
                cell(row.test),
                subtasks
            )
            .unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Example;

    fn dataset(key: &str, subtask: Subtask, split: Split, n: usize) -> Dataset {
        Dataset {
            key: key.parse().unwrap(),
            split,
            subtask,
            examples: (0..n)
                .map(|i| Example {
                    id: i.to_string(),
                    subtask,
                    sentence: format!("s{i}"),
                    given_aspect: None,
                    gold: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn single_aoe_row() {
        let table = dataset_stats(&[
            dataset("D19/R16", Subtask::Aoe, Split::Train, 1079),
            dataset("D19/R16", Subtask::Aoe, Split::Test, 329),
        ]);
        assert_eq!(table.rows.len(), 1);
        let row = &table.rows[0];
        assert_eq!((row.train, row.validation, row.test), (Some(1079), None, Some(329)));
        assert_eq!(row.subtasks, vec![Subtask::Aoe]);
        assert!(table.render().contains("1079           /    329  AOE"));
    }

    #[test]
    fn empty_input() {
        let table = dataset_stats(&[]);
        assert!(table.is_empty());
        assert_eq!(table.render(), "");
    }
}
