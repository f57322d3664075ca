#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use absa_core::corpus::{dataset_path, expand_examples, write_dataset, Dataset, DatasetKey, Split, Subtask};
use absa_core::prompt::render_output;
use absa_core::seed::derive_seed;
use absa_testkit::{synthetic_datasets, FakeChatServer, FakeReply, SyntheticCorpus};

pub const MODEL: &str = "fixture-model";

/// The binary with every `ABSA_*` variable of the outer environment removed.
pub fn absa() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_absa"));
    for (key, _) in std::env::vars() {
        if key.starts_with("ABSA_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

pub fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn absa");
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Sentence of the tested sample in a rendered prompt.
pub fn query_sentence(prompt: &str) -> Option<&str> {
    let tail = &prompt[prompt.rfind("Now complete the following.\n")?..];
    let start = tail.find("Sentence: ")? + "Sentence: ".len();
    let rest = &tail[start..];
    Some(&rest[..rest.find('\n').unwrap_or(rest.len())])
}

/// Number of demonstrations in a rendered prompt.
pub fn demo_count(prompt: &str) -> usize {
    prompt.matches("Sentence: ").count().saturating_sub(1)
}

/// Answers from the gold of the test sets it is given: the full gold list for
/// most sentences, only the first tuple for about a quarter of them (chosen by
/// a hash of the sentence), and `[]` for sentences it does not know.
pub fn oracle_server(tests: &[Dataset]) -> FakeChatServer {
    let mut answers: HashMap<String, String> = HashMap::new();
    for ds in tests {
        for ex in expand_examples(ds).unwrap() {
            let gold = if derive_seed(0, &ex.sentence).is_multiple_of(4) {
                &ex.gold[..ex.gold.len().min(1)]
            } else {
                &ex.gold[..]
            };
            answers.entry(ex.sentence.clone()).or_insert_with(|| render_output(gold, ex.subtask));
        }
    }
    FakeChatServer::start(move |_, body| {
        let prompt =
            body["messages"].as_array().and_then(|m| m.last()).and_then(|m| m["content"].as_str()).unwrap_or("");
        let answer = query_sentence(prompt).and_then(|s| answers.get(s)).cloned();
        FakeReply::content(answer.unwrap_or_else(|| "[]".into()))
    })
}

/// Writes `datasets` in the canonical layout.
pub fn write_all(root: &Path, datasets: &[Dataset]) {
    for d in datasets {
        write_dataset(&dataset_path(root, &d.key, d.subtask, d.split), &d.examples).unwrap();
    }
}

/// Synthetic train/test sets for one (dataset, subtask), truncated.
pub fn small_task(key: &str, subtask: Subtask, train: usize, test: usize, seed: u64) -> Vec<Dataset> {
    let key: DatasetKey = key.parse().unwrap();
    synthetic_datasets(SyntheticCorpus { scale: 1.0, seed })
        .into_iter()
        .filter(|d| d.key == key && d.subtask == subtask && d.split != Split::Validation)
        .map(|mut d| {
            d.examples.truncate(if d.split == Split::Train { train } else { test });
            d
        })
        .collect()
}

pub fn tests_of(datasets: &[Dataset]) -> Vec<Dataset> {
    datasets.iter().filter(|d| d.split == Split::Test).cloned().collect()
}

/// `f1` of the single dataset in a run's report.json.
pub fn report_f1(out: &Path) -> serde_json::Value {
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    report["runs"][0]["per_dataset"][0]["scores"]["f1"].clone()
}

pub fn read_jsonl(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// Location of the committed replay fixture.
pub struct ReplayFixture {
    pub data: PathBuf,
    pub cache: PathBuf,
    pub predictions: PathBuf,
    pub f1: PathBuf,
}

pub fn replay_fixture() -> ReplayFixture {
    let root = fixture_dir().join("replay");
    ReplayFixture {
        data: root.join("data"),
        cache: root.join("cache"),
        predictions: root.join("predictions.jsonl"),
        f1: root.join("f1.txt"),
    }
}

/// The fixture run: 3-shot BM25 on ASTE D20/R15.
pub fn replay_command(fixture: &ReplayFixture, backend: &str, out: &Path) -> Command {
    let mut cmd = absa();
    cmd.arg("--data-root")
        .arg(&fixture.data)
        .arg("--cache-dir")
        .arg(&fixture.cache)
        .args(["--format", "json", "run", "--subtask", "ASTE", "--dataset", "D20/R15", "--strategy", "bm25"])
        .args(["--shots", "3", "--model", MODEL, "--backend", backend, "--out"])
        .arg(out);
    cmd
}
