//! Evaluation machinery for LLM-based aspect-based sentiment analysis (ABSA).
//!
//! The crate covers the full offline pipeline:
//!
//! - [`corpus`]: canonical datasets for the eight subtasks, loaders, source-format
//!   converters, statistics, multi-task merging and low-resource sampling.
//! - [`prompt`]: the list-generation prompt (instruction, demonstrations, tested sample).
//! - [`retrieval`]: random, BM25, semantic and hybrid demonstration selection.
//! - [`client`]: chat-completions dispatch with retries, rate limiting and record/replay.
//! - [`parse`]: salvaging tuple lists out of free-form model output.
//! - [`score`]: exact-match micro precision/recall/F1 and table-style reports.
//! - [`ftexport`]: JSON-lines corpora for external instruction-tuning toolchains.

pub mod client;
pub mod corpus;
pub mod ftexport;
pub mod parse;
pub mod prompt;
pub mod retrieval;
pub mod score;
pub mod seed;
pub mod store;
pub mod text;

pub use corpus::{
    Dataset, DatasetGroup, DatasetKey, Element, Example, Polarity, SentimentTuple, Split, Subtask, TaggedExample,
};

/// Version string recorded in run and export manifests.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
