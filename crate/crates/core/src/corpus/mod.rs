//! Canonical data model for the thirteen ABSA datasets and the operations
//! that prepare them for prompting, scoring and fine-tuning export.

mod convert;
mod io;
mod model;
mod ops;
mod stats;

use std::path::PathBuf;

use thiserror::Error;

pub use convert::{convert_file, SourceFormat};
pub use io::{dataset_path, discover_datasets, load_dataset, load_split, write_dataset, CanonicalRecord};
pub use model::{
    Dataset, DatasetGroup, DatasetKey, Domain, Element, Example, Polarity, SentimentTuple, Split, Subtask,
    TaggedExample, IMPLICIT,
};
pub use ops::{
    build_warmup, expand_aspect_conditioned, expand_examples, merge_multitask, sample_low_resource, LeakGuard,
    MergedSplit, StagedTrainingPlan, LOW_RESOURCE_FRACTIONS,
};
pub use stats::{dataset_stats, StatsRow, StatsTable};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown polarity {0:?}")]
    UnknownPolarity(String),
    #[error("unknown subtask {0:?}")]
    UnknownSubtask(String),
    #[error("unknown dataset group {0:?}")]
    UnknownGroup(String),
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
    #[error("expected {expected} elements, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("empty {} span", .0.label())]
    EmptySpan(Element),
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("example {id}: {message}")]
    Schema { id: String, message: String },
    #[error("{group} does not serve {subtask}")]
    NotServed { group: DatasetGroup, subtask: Subtask },
    #[error("dataset {0} not found")]
    MissingDataset(String),
    #[error("no test split for {dataset} {subtask}; overlap removal cannot be verified")]
    MissingTestSplit { dataset: DatasetKey, subtask: Subtask },
    #[error("fraction {0} is outside (0, 1]")]
    FractionOutOfRange(f64),
    #[error("expected a {expected} split, got {found}")]
    WrongSplit { expected: Split, found: Split },
    #[error("{0} is not aspect-conditioned")]
    NotAspectConditioned(Subtask),
    #[error("warm-up plans are defined for ASTE and AE targets, not {0}")]
    UnsupportedWarmupTarget(Subtask),
    #[error("no {split} data for {subtask}")]
    NoData { subtask: Subtask, split: Split },
    #[error("example {id} from {dataset} overlaps a test sentence")]
    Leak { dataset: DatasetKey, id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
