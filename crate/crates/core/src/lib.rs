//! Measuring and mitigating source bias in retrieval over mixed corpora of
//! human-written and LLM-generated documents.

pub mod builder;
pub mod cli;
pub mod debias;
pub mod error;
pub mod eval;
pub mod perplexity;
pub mod retrieval;
pub mod spectrum;
pub mod store;
pub mod text;
pub mod theorem;

pub use error::{Error, Result};
