use std::collections::HashSet;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::with_pool;
use crate::error::Result;
use crate::graph::{EntityId, RelationId, Triple};
use crate::props::PropertyPredictor;

/// A `(head, relation)` pair selected by stage one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub head: EntityId,
    pub relation: RelationId,
    pub score: f64,
}

/// One pair per relation whose score reaches `threshold`, in head order then
/// relation order.
pub fn generate_candidates(
    predictor: &dyn PropertyPredictor,
    heads: &[EntityId],
    threshold: f64,
    jobs: usize,
) -> Result<Vec<CandidatePair>> {
    let per_head: Vec<Vec<CandidatePair>> = with_pool(jobs, || {
        heads
            .par_iter()
            .map(|&h| {
                let scores = predictor
                    .predict(h)
                    .map_err(|e| e.context(format!("property prediction for head {h}")))?;
                Ok(scores
                    .iter()
                    .enumerate()
                    .filter(|(_, &s)| s >= threshold)
                    .map(|(r, &score)| CandidatePair {
                        head: h,
                        relation: RelationId(r as u32),
                        score,
                    })
                    .collect())
            })
            .collect::<Result<_>>()
    })?;
    Ok(per_head.into_iter().flatten().collect())
}

pub fn gold_pairs(gold: &[Triple]) -> HashSet<(EntityId, RelationId)> {
    gold.iter().map(|t| (t.head, t.relation)).collect()
}

fn pair_set(pairs: &[CandidatePair]) -> HashSet<(EntityId, RelationId)> {
    pairs.iter().map(|p| (p.head, p.relation)).collect()
}

/// `|predicted ∩ gold| / |predicted|` over distinct pairs; 0 when nothing
/// was predicted.
pub fn pair_precision(pairs: &[CandidatePair], gold: &[Triple]) -> f64 {
    let predicted = pair_set(pairs);
    if predicted.is_empty() {
        warn!("pair precision of an empty prediction set is reported as 0");
        return 0.0;
    }
    let gold = gold_pairs(gold);
    predicted.intersection(&gold).count() as f64 / predicted.len() as f64
}

/// Fraction of gold triples whose `(head, relation)` was predicted.
pub fn coverage(pairs: &[CandidatePair], gold: &[Triple]) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let predicted = pair_set(pairs);
    gold.iter()
        .filter(|t| predicted.contains(&(t.head, t.relation)))
        .count() as f64
        / gold.len() as f64
}
