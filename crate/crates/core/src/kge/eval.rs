use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EmbeddingTable, ModelKind};
use crate::error::{Error, Result};
use crate::graph::{EntityId, RelationId, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankingMode {
    #[default]
    Filtered,
    Raw,
}

/// True tails per `(head, relation)`, used to filter rankings.
#[derive(Debug, Clone, Default)]
pub struct KnownTails {
    tails: HashMap<(EntityId, RelationId), HashSet<EntityId>>,
}

impl KnownTails {
    pub fn from_triples<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut tails: HashMap<_, HashSet<_>> = HashMap::new();
        for t in triples {
            tails.entry((t.head, t.relation)).or_default().insert(t.tail);
        }
        Self { tails }
    }

    pub fn contains(&self, h: EntityId, r: RelationId, t: EntityId) -> bool {
        self.tails.get(&(h, r)).is_some_and(|s| s.contains(&t))
    }

    pub fn tails(&self, h: EntityId, r: RelationId) -> Option<&HashSet<EntityId>> {
        self.tails.get(&(h, r))
    }
}

impl EmbeddingTable {
    /// Scores of `(h, r, e)` for every entity `e`, in handle order.
    pub fn tail_scores(&self, h: EntityId, r: RelationId) -> Vec<f64> {
        let head = self.entity(h);
        let rel = self.relation(r);
        // query point q such that distance = ||q - e_t||
        let query: Vec<f64> = match self.model {
            ModelKind::TransE => head.iter().zip(rel).map(|(a, b)| a + b).collect(),
            ModelKind::RotatE => {
                let k = rel.len();
                let mut q = vec![0.0; self.dim];
                for j in 0..k {
                    let (c, s) = (rel[j].cos(), rel[j].sin());
                    q[j] = head[j] * c - head[j + k] * s;
                    q[j + k] = head[j] * s + head[j + k] * c;
                }
                q
            }
        };
        let l1 = self.model == ModelKind::TransE && self.norm == 1;
        self.entities
            .chunks_exact(self.dim)
            .map(|e| {
                if l1 {
                    -query.iter().zip(e).map(|(q, x)| (q - x).abs()).sum::<f64>()
                } else {
                    -query.iter().zip(e).map(|(q, x)| (q - x) * (q - x)).sum::<f64>().sqrt()
                }
            })
            .collect()
    }
}

/// 1-based rank of `gold` among all candidate tails. Other known tails of
/// `(h, r)` are skipped when `known` is given; ties rank the lower handle
/// first.
pub fn rank_tail(table: &EmbeddingTable, h: EntityId, r: RelationId, gold: EntityId, known: Option<&KnownTails>) -> usize {
    let scores = table.tail_scores(h, r);
    rank_in_scores(&scores, h, r, gold, known)
}

pub(crate) fn rank_in_scores(scores: &[f64], h: EntityId, r: RelationId, gold: EntityId, known: Option<&KnownTails>) -> usize {
    let filter = known.and_then(|k| k.tails(h, r));
    let g = scores[gold.index()];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(e, _)| e != gold.index())
        .filter(|&(e, _)| !filter.is_some_and(|f| f.contains(&EntityId(e as u32))))
        .filter(|&(e, &s)| s > g || (s == g && e < gold.index()))
        .count()
}

/// Ranks every test triple on `jobs` threads; output order follows `test`.
pub fn rank_all(table: &EmbeddingTable, test: &[Triple], known: Option<&KnownTails>, jobs: usize) -> Vec<usize> {
    let run = || {
        test.par_iter()
            .map(|t| rank_tail(table, t.head, t.relation, t.tail, known))
            .collect()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => test.iter().map(|t| rank_tail(table, t.head, t.relation, t.tail, known)).collect(),
    }
}

pub fn hits_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::Empty("ranks"));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

pub fn mean_rank(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::Empty("ranks"));
    }
    Ok(ranks.iter().sum::<usize>() as f64 / ranks.len() as f64)
}
