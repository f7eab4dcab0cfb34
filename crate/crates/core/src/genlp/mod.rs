//! Generative link prediction: prompt rendering, tokenization, an entity
//! name trie, and beam search over a pluggable [`TokenScorer`].

mod beam;
mod prompt;
mod scorer;
mod tokenizer;
mod trie;

pub use beam::{
    beam_search, constrained_beam_search, resolve_entities, sequence_nll, BeamOptions, EntityPrediction, Hypothesis, Nll,
};
pub use prompt::{build_prompt, entity_document, render_entity_text, FieldMask, Prompt};
pub use scorer::{check_distribution, log_sum_exp, MockScorer, TokenScorer};
pub use tokenizer::{TokenId, Vocabulary, END_TOKEN};
pub use trie::{build_trie, NameTrie, NodeId};

/// Beam width used when none is configured; matches the largest Hits@k.
pub const DEFAULT_BEAM_WIDTH: usize = 10;
