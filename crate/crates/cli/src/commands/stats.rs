use absa_core::corpus::{dataset_path, dataset_stats, load_dataset, Dataset, Split};
use anyhow::bail;

use crate::config::DatasetSelector;
use crate::{Format, GlobalArgs, Status};

#[derive(Debug, clap::Args)]
pub struct StatsArgs {
    /// Datasets to count (default: the whole catalogue).
    #[arg(long = "dataset", value_name = "SELECTOR")]
    pub datasets: Vec<DatasetSelector>,
    /// Skip datasets that have no files instead of failing.
    #[arg(long)]
    pub allow_missing: bool,
}

pub fn cmd_stats(global: &GlobalArgs, args: StatsArgs) -> anyhow::Result<Status> {
    if !global.data_root.is_dir() {
        bail!("data root {} does not exist", global.data_root.display());
    }
    let mut datasets: Vec<Dataset> = Vec::new();
    let mut missing = Vec::new();
    for key in DatasetSelector::resolve(&args.datasets, None) {
        let before = datasets.len();
        for &subtask in key.group.serves() {
            for split in Split::ALL {
                let path = dataset_path(&global.data_root, &key, subtask, split);
                if path.is_file() {
                    datasets.push(load_dataset(&path, key.clone(), subtask, split)?);
                }
            }
        }
        if datasets.len() == before {
            missing.push(key.to_string());
        }
    }
    if !missing.is_empty() && !args.allow_missing {
        bail!("no files for {} under {}", missing.join(", "), global.data_root.display());
    }
    let table = dataset_stats(&datasets);
    match global.format {
        Format::Table => print!("{}", table.render()),
        Format::Json => println!("{}", serde_json::to_string_pretty(&table)?),
        Format::Csv => print!("{}", table.render_csv()),
    }
    Ok(Status::Ok)
}
