use std::path::Path;
use std::time::Duration;

use absa_core::score::{build_report, mean, ReportRun};
use anyhow::{bail, Context};

use super::run::{anomaly_status, build_requests, embedder, execute, load_templates, prepare, print_report, RunArgs};
use super::{create_dir, write_json};
use crate::chart::{line_chart, Series};
use crate::{GlobalArgs, Status};

#[derive(Debug, Clone, clap::Args)]
pub struct SweepArgs {
    /// Shot counts to evaluate; 0 runs zero-shot.
    #[arg(long, value_delimiter = ',', default_value = "0,1,3,5")]
    pub shots_list: Vec<usize>,
    /// Also draw the F1 curve as an SVG file.
    #[arg(long)]
    pub chart: Option<std::path::PathBuf>,
    /// Run options; `--shots` is replaced by each value of `--shots-list`.
    #[command(flatten)]
    pub run: RunArgs,
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepPoint {
    pub shots: usize,
    /// Mean F1 over the selected datasets.
    pub f1: f64,
}

#[derive(Debug, serde::Serialize)]
struct DetailRow {
    shots: usize,
    dataset: String,
    subtask: String,
    queries: usize,
    precision: f64,
    recall: f64,
    f1: f64,
}

pub fn cmd_sweep(global: &GlobalArgs, args: SweepArgs) -> anyhow::Result<Status> {
    if args.shots_list.is_empty() {
        bail!("--shots-list is empty");
    }
    let out = args.run.out.clone();
    create_dir(&out)?;
    let mut points = Vec::new();
    let mut details = Vec::new();
    let mut runs = Vec::new();
    let mut worst = 0.0f64;
    let mut threshold = 0.0;
    for &shots in &args.shots_list {
        let mut run = args.run.clone();
        run.shots = shots;
        run.shots_each = None;
        let config = run.config(global)?;
        config.validate()?;
        threshold = config.max_parse_failure_rate;
        let templates = load_templates(&config)?;
        let embedder = embedder(config.embeddings.as_ref(), &config.cache_dir, Duration::from_secs(run.timeout_secs))?;
        let tasks = prepare(&config, embedder.as_ref())?;
        let pending = build_requests(&config, &templates, &tasks)?;
        let client = run.client(&config)?;
        let provider = embedder.as_ref().map(|e| e.provider_id().to_string());
        let dir = out.join(format!("shots-{shots}"));
        let outcome = execute(&config, &templates, &tasks, &pending, &client, run.max_in_flight, provider, &dir)?;
        worst = worst.max(outcome.anomaly_rate);

        let run_report = outcome.report.runs.into_iter().next().context("run produced no report")?;
        let f1s: Vec<f64> = run_report.per_dataset.iter().map(|d| d.scores.f1).collect();
        points.push(SweepPoint { shots, f1: mean(&f1s).unwrap_or(0.0) });
        details.extend(run_report.per_dataset.iter().map(|d| DetailRow {
            shots,
            dataset: d.dataset.to_string(),
            subtask: d.subtask.to_string(),
            queries: d.queries,
            precision: d.scores.precision,
            recall: d.scores.recall,
            f1: d.scores.f1,
        }));
        runs.push(ReportRun { label: format!("{shots}-shot"), per_dataset: run_report.per_dataset });
    }

    write_csv(&out.join("sweep.csv"), &points)?;
    write_csv(&out.join("sweep_detail.csv"), &details)?;
    let report = build_report(runs);
    write_json(&out.join("report.json"), &report)?;
    if let Some(path) = &args.chart {
        let series =
            Series { label: "mean F1".into(), points: points.iter().map(|p| (p.shots as f64, p.f1)).collect() };
        std::fs::write(path, line_chart("F1 by number of demonstrations", "shots", "F1", &[series]))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    print_report(&report, global.format)?;
    Ok(anomaly_status(worst, threshold))
}

fn write_csv<T: serde::Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
