//! Hybrid topic analytics over stakeholder text corpora.
//!
//! The pipeline runs corpus ingestion, text cleaning, topic clustering
//! (LDA, NMF, LSA), LLM-assisted topic labeling, embedding-based label
//! merging, model evaluation, and monthly impact analysis. Each stage is a
//! module with plain-data inputs and outputs so stages can be persisted and
//! resumed independently.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod impact;
pub mod labeling;
pub mod merging;
pub mod metrics;
pub mod preprocess;
pub mod provider;
pub mod synthetic;
pub mod topics;
mod util;

pub use error::{Error, Result};
pub use util::sha256_hex;
