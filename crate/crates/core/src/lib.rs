//! Instance completion for knowledge graphs.
//!
//! Given only a head entity `(h, ?, ?)`, the pipeline first predicts which
//! relations are relevant to `h` (a multi-label problem) and then, for each
//! selected `(h, r)` pair, predicts tails with either an embedding model
//! (TransE / RotatE) or a generative decoder constrained to entity names.
//!
//! Module map:
//!
//! - [`graph`]: interned triples, metadata, property vectors
//! - [`ingest`]: TSV parsing, stratified splitting, leakage checks
//! - [`props`]: stage one scorers (Recoin, hybrid recommender, linear BCE classifier) and metrics
//! - [`kge`]: TransE / RotatE training and filtered tail ranking
//! - [`genlp`]: prompts, tokenizer, entity trie, beam search
//! - [`backend`]: line-delimited JSON client for an external model server
//! - [`pipeline`]: candidate generation, completion and instance-completion evaluation

pub mod backend;
pub mod error;
pub mod genlp;
pub mod graph;
pub mod ingest;
pub mod kge;
pub mod pipeline;
pub mod props;

pub use error::{Error, Result};
pub use graph::{EntityId, EntityMeta, KnowledgeGraph, RelationId, SplitSet, Triple};
