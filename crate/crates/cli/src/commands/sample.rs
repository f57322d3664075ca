use std::path::PathBuf;

use absa_core::corpus::{load_split, sample_low_resource, write_dataset, DatasetKey, Split, Subtask};
use absa_core::seed::derive_seed;

use crate::{GlobalArgs, Status};

#[derive(Debug, clap::Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub subtask: Subtask,
    #[arg(long)]
    pub dataset: DatasetKey,
    /// Share of the training split to keep, in (0, 1].
    #[arg(long)]
    pub fraction: f64,
    /// Canonical JSON-lines output file.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_sample(global: &GlobalArgs, args: SampleArgs) -> anyhow::Result<Status> {
    let train = load_split(&global.data_root, &args.dataset, args.subtask, Split::Train)?;
    let seed = derive_seed(global.seed, &format!("sample/{}/{}", args.dataset, args.subtask));
    let sampled = sample_low_resource(&train, args.fraction, seed)?;
    write_dataset(&args.out, &sampled.examples)?;
    println!("{} of {} examples written to {}", sampled.len(), train.len(), args.out.display());
    Ok(Status::Ok)
}
