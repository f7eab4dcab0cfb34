use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::candidates::CandidatePair;
use super::with_pool;
use crate::error::Result;
use crate::genlp::{build_prompt, constrained_beam_search, BeamOptions, FieldMask, NameTrie, TokenScorer};
use crate::graph::{EntityId, KnowledgeGraph, RelationId};
use crate::kge::{EmbeddingTable, KnownTails};

/// Stage two: ranked tails for a `(head, relation)` pair.
pub trait LinkPredictor: Sync {
    fn name(&self) -> &str;

    /// At most `k` tails, best first.
    fn predict_tails(&self, head: EntityId, relation: RelationId, k: usize) -> Result<Vec<(EntityId, f64)>>;
}

/// Scores every entity as a tail. Tails in `exclude` (typically the known
/// train and valid facts) are skipped; ties favor the lower handle.
pub struct KgeLinkPredictor<'a> {
    pub table: &'a EmbeddingTable,
    pub exclude: Option<&'a KnownTails>,
}

impl LinkPredictor for KgeLinkPredictor<'_> {
    fn name(&self) -> &str {
        "kge"
    }

    fn predict_tails(&self, head: EntityId, relation: RelationId, k: usize) -> Result<Vec<(EntityId, f64)>> {
        let scores = self.table.tail_scores(head, relation);
        let skip = self.exclude.and_then(|x| x.tails(head, relation));
        let mut order: Vec<u32> = (0..scores.len() as u32)
            .filter(|&e| !skip.is_some_and(|s| s.contains(&EntityId(e))))
            .collect();
        order.sort_by(|&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b)));
        Ok(order
            .into_iter()
            .take(k)
            .map(|e| (EntityId(e), scores[e as usize]))
            .collect())
    }
}

/// Trie-constrained decoding over a token scorer; scores are sequence
/// log-probs.
pub struct GenerativeLinkPredictor<'a, S: ?Sized> {
    pub graph: &'a KnowledgeGraph,
    pub scorer: &'a S,
    pub trie: &'a NameTrie,
    pub mask: FieldMask,
    pub beam: BeamOptions,
    pub exclude: Option<&'a KnownTails>,
}

impl<S: TokenScorer + ?Sized> LinkPredictor for GenerativeLinkPredictor<'_, S> {
    fn name(&self) -> &str {
        "generative"
    }

    fn predict_tails(&self, head: EntityId, relation: RelationId, k: usize) -> Result<Vec<(EntityId, f64)>> {
        let prompt = build_prompt(
            self.graph.entity_label(head),
            self.graph.meta(head),
            self.graph.relation_label(relation),
            self.mask,
        )?;
        let skip = self.exclude.and_then(|x| x.tails(head, relation));
        let mut out: Vec<(EntityId, f64)> = Vec::new();
        for p in constrained_beam_search(self.scorer, self.trie, &prompt.text, &self.beam)? {
            if skip.is_some_and(|s| s.contains(&p.entity)) || out.iter().any(|(e, _)| *e == p.entity) {
                continue;
            }
            out.push((p.entity, p.log_prob));
            if out.len() == k {
                break;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePrediction {
    pub pair: CandidatePair,
    /// Best first, at most `k_max` entries.
    pub tails: Vec<(EntityId, f64)>,
    pub k_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub pair: CandidatePair,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompletionOutcome {
    pub predictions: Vec<InstancePrediction>,
    pub failures: Vec<PairFailure>,
}

/// Runs stage two on every pair on `jobs` threads. A failing pair is logged,
/// recorded and skipped. Output follows the order of `pairs`.
pub fn complete(predictor: &dyn LinkPredictor, pairs: &[CandidatePair], k_max: usize, jobs: usize) -> CompletionOutcome {
    let results: Vec<_> = with_pool(jobs, || {
        pairs
            .par_iter()
            .map(|p| predictor.predict_tails(p.head, p.relation, k_max))
            .collect()
    });
    let mut out = CompletionOutcome::default();
    for (pair, r) in pairs.iter().zip(results) {
        match r {
            Ok(mut tails) => {
                tails.truncate(k_max);
                out.predictions.push(InstancePrediction {
                    pair: *pair,
                    tails,
                    k_max,
                });
            }
            Err(e) => {
                warn!("{} failed on ({}, {}): {e}", predictor.name(), pair.head, pair.relation);
                out.failures.push(PairFailure {
                    pair: *pair,
                    error: e.to_string(),
                });
            }
        }
    }
    out
}
