//! Entity-level knowledge-conflict evaluation sets for abstractive
//! summarization, and the factual-adaptiveness metrics computed on them.
//!
//! The pipeline: build a [`CandidatePool`](model::CandidatePool) from a
//! training corpus, pick original entities present in both document and
//! summary, rank same-category candidates with a [`LikelihoodScorer`], draw a
//! counterfactual from the requested likelihood group, validate, and swap.
//! [`metrics`] then scores a model on the resulting set.

pub mod adapters;
pub mod augmentation;
pub mod construction;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pool;
pub mod replacement;
pub mod text;

pub use adapters::{
    ConsistencyScorer, EntityRecognizer, LikelihoodScorer, SummaryGenerator, Tokenizer,
};
pub use error::{Error, Result};
