//! Canonical JSON-lines files: `<root>/<group>/<name>/<subtask>/<split>.jsonl`.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, DatasetGroup, DatasetKey, Example, SentimentTuple, Split, Subtask};

/// One line of a canonical dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalRecord {
    pub id: String,
    pub sentence: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<String>,
    pub tuples: Vec<Vec<String>>,
}

impl CanonicalRecord {
    pub fn from_example(example: &Example) -> Self {
        let elements = example.gold_elements();
        CanonicalRecord {
            id: example.id.clone(),
            sentence: example.sentence.clone(),
            aspect: example.given_aspect.clone(),
            tuples: example.gold.iter().map(|t| t.fields(elements)).collect(),
        }
    }

    pub fn into_example(self, subtask: Subtask) -> Result<Example, CorpusError> {
        let CanonicalRecord { id, sentence, aspect, tuples } = self;
        if aspect.is_some() && !subtask.aspect_conditioned() {
            return Err(CorpusError::Schema {
                id,
                message: format!("`aspect` is only allowed for ALSC and AOE, not {subtask}"),
            });
        }
        let elements = if aspect.is_some() { subtask.output_elements() } else { subtask.sentence_level_elements() };
        let mut gold = Vec::with_capacity(tuples.len());
        for values in &tuples {
            let tuple = SentimentTuple::from_fields(elements, values)
                .map_err(|e| CorpusError::Schema { id: id.clone(), message: e.to_string() })?;
            gold.push(tuple);
        }
        let example = Example { id, subtask, sentence, given_aspect: aspect, gold };
        example.validate()?;
        Ok(example)
    }
}

pub fn dataset_path(root: &Path, key: &DatasetKey, subtask: Subtask, split: Split) -> PathBuf {
    root.join(key.group.id()).join(&key.name).join(subtask.id()).join(format!("{}.jsonl", split.as_str()))
}

/// Loads one canonical file. Examples keep file order.
pub fn load_dataset(path: &Path, key: DatasetKey, subtask: Subtask, split: Split) -> Result<Dataset, CorpusError> {
    if !key.group.serves().contains(&subtask) {
        return Err(CorpusError::NotServed { group: key.group, subtask });
    }
    let reader = BufReader::new(File::open(path)?);
    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: CanonicalRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let example = record.into_example(subtask)?;
        if !seen.insert(example.id.clone()) {
            return Err(CorpusError::Schema { id: example.id, message: "duplicate id".into() });
        }
        examples.push(example);
    }
    Ok(Dataset { key, split, subtask, examples })
}

/// Loads `<root>/<group>/<name>/<subtask>/<split>.jsonl`.
pub fn load_split(root: &Path, key: &DatasetKey, subtask: Subtask, split: Split) -> Result<Dataset, CorpusError> {
    let path = dataset_path(root, key, subtask, split);
    if !path.is_file() {
        return Err(CorpusError::MissingDataset(format!("{key} {subtask} {split} ({})", path.display())));
    }
    load_dataset(&path, key.clone(), subtask, split)
}

pub fn write_dataset(path: &Path, examples: &[Example]) -> Result<(), CorpusError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    for example in examples {
        let line =
            serde_json::to_string(&CanonicalRecord::from_example(example)).expect("canonical records always serialize");
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Loads every canonical file found under `root`, in catalogue order
/// (group, name, subtask, split).
pub fn discover_datasets(root: &Path) -> Result<Vec<Dataset>, CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::MissingDataset(format!("data root {}", root.display())));
    }
    let mut out = Vec::new();
    for group in DatasetGroup::ALL {
        let group_dir = root.join(group.id());
        if !group_dir.is_dir() {
            continue;
        }
        let mut names: Vec<String> = fs::read_dir(&group_dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        names.sort();
        for name in names {
            let key = DatasetKey::new(group, name);
            for &subtask in group.serves() {
                for split in Split::ALL {
                    let path = dataset_path(root, &key, subtask, split);
                    if path.is_file() {
                        out.push(load_dataset(&path, key.clone(), subtask, split)?);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Polarity;

    fn write(path: &Path, body: &str) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, body).unwrap();
    }

    #[test]
    fn empty_file_gives_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        write(&path, "");
        let ds = load_dataset(&path, "D20/L14".parse().unwrap(), Subtask::Aste, Split::Train).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn malformed_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        write(&path, "{\"id\":\"1\",\"sentence\":\"ok\",\"tuples\":[[\"a\",\"b\",\"positive\"]]}\n{not json}\n");
        let err = load_dataset(&path, "D20/L14".parse().unwrap(), Subtask::Aste, Split::Train).unwrap_err();
        match err {
            CorpusError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_violation_names_example() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        write(&path, "{\"id\":\"s-7\",\"sentence\":\"ok\",\"tuples\":[[\"a\",\"positive\"]]}\n");
        let err = load_dataset(&path, "D20/L14".parse().unwrap(), Subtask::Aste, Split::Train).unwrap_err();
        match err {
            CorpusError::Schema { id, .. } => assert_eq!(id, "s-7"),
            other => panic!("unexpected {other:?}"),
        }
        write(&path, "{\"id\":\"s-8\",\"sentence\":\"ok\",\"tuples\":[[\"a\",\"b\",\"great\"]]}\n");
        let err = load_dataset(&path, "D20/L14".parse().unwrap(), Subtask::Aste, Split::Train).unwrap_err();
        assert!(err.to_string().contains("s-8"));
    }

    #[test]
    fn aspect_key_rules() {
        let rec = CanonicalRecord {
            id: "x".into(),
            sentence: "The burger was great".into(),
            aspect: Some("burger".into()),
            tuples: vec![vec!["positive".into()]],
        };
        let ex = rec.clone().into_example(Subtask::Alsc).unwrap();
        assert!(ex.is_query());
        assert_eq!(ex.gold[0].polarity, Some(Polarity::Positive));
        assert!(rec.into_example(Subtask::Aste).is_err());

        let sentence_level = CanonicalRecord {
            id: "y".into(),
            sentence: "The burger was great".into(),
            aspect: None,
            tuples: vec![vec!["burger".into(), "positive".into()]],
        };
        let ex = sentence_level.into_example(Subtask::Alsc).unwrap();
        assert!(!ex.is_query());
        assert_eq!(ex.gold[0].aspect.as_deref(), Some("burger"));
    }

    #[test]
    fn unserved_subtask_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        write(&path, "");
        let err = load_dataset(&path, "D19/L14".parse().unwrap(), Subtask::Aste, Split::Train).unwrap_err();
        assert!(matches!(err, CorpusError::NotServed { .. }));
    }

    #[test]
    fn write_and_discover() {
        let dir = tempfile::tempdir().unwrap();
        let key: DatasetKey = "D21/R15".parse().unwrap();
        let ex = Example {
            id: "q1".into(),
            subtask: Subtask::Asqp,
            sentence: "The burger was delicious".into(),
            given_aspect: None,
            gold: vec![SentimentTuple::asqp("burger", "food quality", "delicious", Polarity::Positive)],
        };
        write_dataset(&dataset_path(dir.path(), &key, Subtask::Asqp, Split::Test), std::slice::from_ref(&ex)).unwrap();
        let found = discover_datasets(dir.path()).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].examples, vec![ex]);
        assert_eq!(found[0].split, Split::Test);
    }
}
