//! Fine-grained emotion intensity toolkit.
//!
//! The crate covers the whole offline pipeline:
//!
//! * [`data`]: domain types and readers/writers for WASSA-style TSV corpora,
//!   word2vec text embeddings, association lexicons and bilingual dictionaries.
//! * [`bws`]: Best-Worst Scaling tuple generation, counting aggregation and
//!   split-half reliability.
//! * [`metrics`]: Pearson and Spearman (average-rank) correlation.
//! * [`features`]: tweet tokenizer and the block-structured sparse featurizer
//!   (word n-grams, character n-grams, averaged embeddings, lexicon sums).
//! * [`svr`]: linear epsilon-insensitive SVR trained by dual coordinate descent.
//! * [`crosslingual`]: orthogonal Procrustes alignment and joint bilingual
//!   projection training with a regression head.
//!
//! Data-parallel loops go through [`exec::Execution`]; with the `parallel`
//! feature disabled everything runs sequentially.

pub mod bws;
pub mod crosslingual;
pub mod data;
mod error;
pub mod exec;
pub mod features;
pub mod metrics;
pub mod svr;
pub mod synthetic;

pub use error::{Error, Result};
