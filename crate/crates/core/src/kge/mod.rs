//! TransE and RotatE embeddings: initialization, scoring, training with
//! self-adversarial negative sampling, and filtered tail ranking.

mod checkpoint;
mod eval;
mod train;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, RelationId, Triple};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use eval::{hits_at_k, mean_rank, rank_all, rank_tail, KnownTails, RankingMode};
pub use train::{sample_negatives, train, train_with_observer, CorruptionMode, Negatives, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    TransE,
    RotatE,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::TransE => "transe",
            ModelKind::RotatE => "rotate",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(ModelKind::TransE),
            "rotate" => Ok(ModelKind::RotatE),
            _ => Err(Error::InvalidArgument(format!("unknown model `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgeConfig {
    pub model: ModelKind,
    pub dim: usize,
    /// Norm order for TransE distances (1 or 2).
    pub norm: u8,
    pub margin: f64,
    /// Self-adversarial temperature; 0 gives uniform negative weights.
    pub adversarial_temperature: f64,
    pub negatives: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub corruption: CorruptionMode,
    /// Resample corruptions that are known train triples.
    pub filter_negatives: bool,
}

impl KgeConfig {
    pub fn new(model: ModelKind) -> Self {
        Self {
            model,
            dim: 64,
            norm: 1,
            margin: match model {
                ModelKind::TransE => 5.0,
                ModelKind::RotatE => 12.0,
            },
            adversarial_temperature: 1.0,
            negatives: 16,
            epochs: 100,
            batch_size: 256,
            learning_rate: 0.01,
            seed: 0,
            corruption: CorruptionMode::Both,
            filter_negatives: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_owned()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.model == ModelKind::RotatE && self.dim % 2 != 0 {
            return bad("RotatE needs an even dim (pairs of real/imaginary parts)");
        }
        if !matches!(self.norm, 1 | 2) {
            return bad("norm must be 1 or 2");
        }
        if !(self.margin > 0.0) {
            return bad("margin must be positive");
        }
        if !(self.adversarial_temperature >= 0.0) {
            return bad("adversarial temperature must be non-negative");
        }
        if self.negatives == 0 || self.batch_size == 0 {
            return bad("negatives and batch size must be positive");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning rate must be non-negative");
        }
        Ok(())
    }

    /// Width of a relation row: full dim for TransE, one phase per complex
    /// coordinate for RotatE.
    pub fn relation_width(&self) -> usize {
        match self.model {
            ModelKind::TransE => self.dim,
            ModelKind::RotatE => self.dim / 2,
        }
    }
}

/// Entity and relation parameters. RotatE entity rows store the real parts
/// in the first half and the imaginary parts in the second; relation rows
/// are phases.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub model: ModelKind,
    pub norm: u8,
    pub dim: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    pub entities: Vec<f64>,
    pub relations: Vec<f64>,
}

impl EmbeddingTable {
    pub fn relation_width(&self) -> usize {
        match self.model {
            ModelKind::TransE => self.dim,
            ModelKind::RotatE => self.dim / 2,
        }
    }

    pub fn entity(&self, e: EntityId) -> &[f64] {
        &self.entities[e.index() * self.dim..(e.index() + 1) * self.dim]
    }

    pub fn relation(&self, r: RelationId) -> &[f64] {
        let w = self.relation_width();
        &self.relations[r.index() * w..(r.index() + 1) * w]
    }

    pub(crate) fn entity_mut(&mut self, e: usize) -> &mut [f64] {
        &mut self.entities[e * self.dim..(e + 1) * self.dim]
    }

    pub(crate) fn relation_mut(&mut self, r: usize) -> &mut [f64] {
        let w = self.relation_width();
        &mut self.relations[r * w..(r + 1) * w]
    }

    pub fn is_finite(&self) -> bool {
        self.entities.iter().chain(&self.relations).all(|v| v.is_finite())
    }

    /// Unit-modulus rotation factors `(cos θ, sin θ)` of a RotatE relation.
    pub fn rotation_factors(&self, r: RelationId) -> Vec<(f64, f64)> {
        self.relation(r).iter().map(|&t| (t.cos(), t.sin())).collect()
    }

    /// Plausibility of `(h, r, t)`; higher is better. Equals `-distance`.
    pub fn score(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        -self.distance(h, r, t)
    }

    pub fn distance(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        distance(self.model, self.norm, self.entity(h), self.relation(r), self.entity(t))
    }

    pub fn score_triple(&self, t: &Triple) -> f64 {
        self.score(t.head, t.relation, t.tail)
    }
}

pub(crate) fn distance(model: ModelKind, norm: u8, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    match model {
        ModelKind::TransE => {
            let it = h.iter().zip(r).zip(t).map(|((h, r), t)| h + r - t);
            if norm == 1 {
                it.map(f64::abs).sum()
            } else {
                it.map(|x| x * x).sum::<f64>().sqrt()
            }
        }
        ModelKind::RotatE => {
            let k = r.len();
            let mut diff = vec![0.0; 2 * k];
            for j in 0..k {
                let (c, s) = (r[j].cos(), r[j].sin());
                diff[j] = (h[j] * c - h[j + k] * s) - t[j];
                diff[j + k] = (h[j] * s + h[j + k] * c) - t[j + k];
            }
            // summed in coordinate order so tail_scores agrees bit-for-bit
            diff.iter().map(|x| x * x).sum::<f64>().sqrt()
        }
    }
}

/// Seeded uniform initialization: entity (and TransE relation) values in
/// `[-6/sqrt(dim), 6/sqrt(dim)]`, RotatE phases in `[-pi, pi]`.
pub fn init_embeddings(config: &KgeConfig, num_entities: usize, num_relations: usize) -> Result<EmbeddingTable> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 6.0 / (config.dim as f64).sqrt();
    let entities = (0..num_entities * config.dim)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    let rel_bound = match config.model {
        ModelKind::TransE => bound,
        ModelKind::RotatE => PI,
    };
    let relations = (0..num_relations * config.relation_width())
        .map(|_| rng.gen_range(-rel_bound..=rel_bound))
        .collect();
    Ok(EmbeddingTable {
        model: config.model,
        norm: config.norm,
        dim: config.dim,
        num_entities,
        num_relations,
        entities,
        relations,
    })
}
