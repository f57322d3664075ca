//! Test support: synthetic corpora shaped like the real dataset catalogue and
//! an in-process fake chat-completions endpoint.

mod corpus;
mod server;

pub use corpus::{
    annotated_sentence, synthetic_datasets, write_synthetic_corpus, Annotation, SyntheticCorpus, PUBLISHED_SPLITS,
};
pub use server::{FakeChatServer, FakeReply, SeenRequest};
