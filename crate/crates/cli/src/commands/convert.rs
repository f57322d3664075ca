use std::path::PathBuf;

use absa_core::corpus::{convert_file, write_dataset, SourceFormat, Subtask};

use crate::{GlobalArgs, Status};

#[derive(Debug, clap::Args)]
pub struct ConvertArgs {
    /// Source format: bartabsa, towe, aste-v2, asqp or canonical.
    #[arg(long = "from")]
    pub source_format: SourceFormat,
    #[arg(long)]
    pub subtask: Subtask,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Prefix of the generated example ids (default: input file stem).
    #[arg(long)]
    pub id_prefix: Option<String>,
}

pub fn cmd_convert(_global: &GlobalArgs, args: ConvertArgs) -> anyhow::Result<Status> {
    let prefix = args
        .id_prefix
        .unwrap_or_else(|| args.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    let examples = convert_file(&args.input, args.source_format, args.subtask, &prefix)?;
    write_dataset(&args.out, &examples)?;
    println!("{} examples written to {}", examples.len(), args.out.display());
    Ok(Status::Ok)
}
