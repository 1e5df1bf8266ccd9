//! Enrich corpus text through a chat-completion LLM before embedding it, then
//! measure whether the rewrite helps.
//!
//! The pipeline is split into small modules that can be used on their own:
//!
//! - [`textprep`]: URL/hashtag/mention stripping, lowercasing, whitespace tokenizing.
//! - [`enrich`]: the rewrite prompt registry, chat providers, retries and batching.
//! - [`embed`]: embedding providers, cosine similarity and normalization.
//! - [`store`]: the content-addressed on-disk cache shared by chat and embedding calls.
//! - [`datasets`]: JSONL loaders for classification and sentence-pair datasets.
//! - [`eval`]: average precision, a logistic-regression probe, and the experiment runner.
//! - [`report`]: markdown/CSV rendering of result tables.

pub mod datasets;
pub mod embed;
pub mod enrich;
pub mod eval;
pub mod hashing;
#[cfg(feature = "http")]
pub mod http;
pub mod provider;
pub mod report;
pub mod store;
pub mod textprep;

pub use datasets::{ClassificationDataset, Document, PairDataset};
pub use embed::EmbeddingVector;
pub use enrich::{EnrichmentRecord, PromptTemplate};
pub use eval::ResultTable;
pub use store::Cache;
