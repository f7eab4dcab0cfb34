use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{init_embeddings, EmbeddingTable, KgeConfig, ModelKind};
use crate::error::{Error, Result};
use crate::graph::{EntityId, Triple};

/// Attempts per negative before accepting a known triple when filtering.
const MAX_RESAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionMode {
    Tail,
    Head,
    /// Alternates tail and head corruption, starting with the tail.
    Both,
}

impl std::str::FromStr for CorruptionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tail" => Ok(CorruptionMode::Tail),
            "head" => Ok(CorruptionMode::Head),
            "both" => Ok(CorruptionMode::Both),
            _ => Err(Error::InvalidArgument(format!("unknown corruption mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Negatives {
    pub triples: Vec<Triple>,
    /// Only one entity exists, so every corruption equals the original.
    pub degenerate: bool,
}

fn corrupt<R: Rng>(
    triple: Triple,
    i: usize,
    mode: CorruptionMode,
    num_entities: usize,
    known: Option<&HashSet<Triple>>,
    rng: &mut R,
) -> Triple {
    let tail_side = match mode {
        CorruptionMode::Tail => true,
        CorruptionMode::Head => false,
        CorruptionMode::Both => i % 2 == 0,
    };
    let mut out = triple;
    for _ in 0..MAX_RESAMPLES {
        let e = EntityId(rng.gen_range(0..num_entities) as u32);
        out = if tail_side {
            Triple::new(triple.head, triple.relation, e)
        } else {
            Triple::new(e, triple.relation, triple.tail)
        };
        match known {
            Some(set) if set.contains(&out) => continue,
            _ => break,
        }
    }
    out
}

pub(crate) fn sample_with<R: Rng>(
    triple: Triple,
    n: usize,
    mode: CorruptionMode,
    num_entities: usize,
    known: Option<&HashSet<Triple>>,
    rng: &mut R,
) -> Negatives {
    let triples = (0..n)
        .map(|i| corrupt(triple, i, mode, num_entities, known, rng))
        .collect();
    Negatives {
        triples,
        degenerate: num_entities <= 1,
    }
}

/// `n` corruptions of `triple` with the replacement entity drawn uniformly.
/// With `known` set, corruptions found in it are redrawn.
pub fn sample_negatives(
    triple: Triple,
    n: usize,
    mode: CorruptionMode,
    num_entities: usize,
    known: Option<&HashSet<Triple>>,
    seed: u64,
) -> Negatives {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(triple, n, mode, num_entities, known, &mut rng)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub table: EmbeddingTable,
    /// Mean per-triple loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Adds `coef * d(distance)/d(params)` into the three gradient rows and
/// returns the distance.
fn accumulate_distance_grad(
    table: &EmbeddingTable,
    t: &Triple,
    coef: f64,
    gh: &mut [f64],
    gr: &mut [f64],
    gt: &mut [f64],
) -> f64 {
    let h = table.entity(t.head);
    let r = table.relation(t.relation);
    let tl = table.entity(t.tail);
    match table.model {
        ModelKind::TransE => {
            let x: Vec<f64> = h.iter().zip(r).zip(tl).map(|((h, r), t)| h + r - t).collect();
            let (d, g): (f64, Vec<f64>) = if table.norm == 1 {
                (x.iter().map(|v| v.abs()).sum(), x.iter().map(|v| v.signum() * (*v != 0.0) as u8 as f64).collect())
            } else {
                let d = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let g = if d > 0.0 { x.iter().map(|v| v / d).collect() } else { vec![0.0; x.len()] };
                (d, g)
            };
            for j in 0..g.len() {
                gh[j] += coef * g[j];
                gr[j] += coef * g[j];
                gt[j] -= coef * g[j];
            }
            d
        }
        ModelKind::RotatE => {
            let k = r.len();
            let mut u = vec![(0.0, 0.0); k];
            let mut sq = 0.0;
            for j in 0..k {
                let (c, s) = (r[j].cos(), r[j].sin());
                let re = h[j] * c - h[j + k] * s - tl[j];
                let im = h[j] * s + h[j + k] * c - tl[j + k];
                u[j] = (re, im);
                sq += re * re + im * im;
            }
            let d = sq.sqrt();
            if d == 0.0 {
                return d;
            }
            for j in 0..k {
                let (c, s) = (r[j].cos(), r[j].sin());
                let (re, im) = (u[j].0 / d, u[j].1 / d);
                gh[j] += coef * (re * c + im * s);
                gh[j + k] += coef * (-re * s + im * c);
                gt[j] -= coef * re;
                gt[j + k] -= coef * im;
                let (hr, hi) = (h[j], h[j + k]);
                gr[j] += coef * (re * (-hr * s - hi * c) + im * (hr * c - hi * s));
            }
            d
        }
    }
}

#[derive(Default)]
struct SparseGrads {
    entities: HashMap<usize, Vec<f64>>,
    relations: HashMap<usize, Vec<f64>>,
}

impl SparseGrads {
    /// Accumulates the gradient for one triple; returns its distance.
    fn add(&mut self, table: &EmbeddingTable, t: &Triple, coef: f64) -> f64 {
        let dim = table.dim;
        let rw = table.relation_width();
        let mut gh = self.entities.remove(&t.head.index()).unwrap_or_else(|| vec![0.0; dim]);
        let mut gt = if t.tail == t.head {
            vec![0.0; dim]
        } else {
            self.entities.remove(&t.tail.index()).unwrap_or_else(|| vec![0.0; dim])
        };
        let gr = self.relations.entry(t.relation.index()).or_insert_with(|| vec![0.0; rw]);
        let d = accumulate_distance_grad(table, t, coef, &mut gh, gr, &mut gt);
        if t.tail == t.head {
            for (a, b) in gh.iter_mut().zip(&gt) {
                *a += b;
            }
        } else {
            self.entities.insert(t.tail.index(), gt);
        }
        self.entities.insert(t.head.index(), gh);
        d
    }

    fn apply(self, table: &mut EmbeddingTable, lr: f64) {
        for (e, g) in self.entities {
            for (p, g) in table.entity_mut(e).iter_mut().zip(g) {
                *p -= lr * g;
            }
        }
        for (r, g) in self.relations {
            for (p, g) in table.relation_mut(r).iter_mut().zip(g) {
                *p -= lr * g;
            }
        }
    }
}

pub fn train(config: &KgeConfig, num_entities: usize, num_relations: usize, triples: &[Triple]) -> Result<TrainOutcome> {
    train_with_observer(config, num_entities, num_relations, triples, |_, _, _| {})
}

/// Minimizes, per positive triple with distance `d = -score`,
///
/// ```text
/// L = -ln σ(γ - d_pos) - Σ_i p_i ln σ(d_i - γ),   p = softmax(α · score(neg))
/// ```
///
/// with the weights `p` held constant, by SGD over shuffled mini-batches.
/// `observer(epoch, table, mean_loss)` runs after every epoch.
pub fn train_with_observer<F>(
    config: &KgeConfig,
    num_entities: usize,
    num_relations: usize,
    triples: &[Triple],
    mut observer: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, &EmbeddingTable, f64),
{
    if triples.is_empty() {
        return Err(Error::Empty("train triples"));
    }
    let mut table = init_embeddings(config, num_entities, num_relations)?;
    let known: Option<HashSet<Triple>> = config
        .filter_negatives
        .then(|| triples.iter().copied().collect());
    // independent stream from the initializer
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_0F_5A_4D_91E5);
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let gamma = config.margin;
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let b = chunk.len() as f64;
            let mut grads = SparseGrads::default();
            let mut batch_loss = 0.0;
            for &i in chunk {
                let pos = triples[i];
                let negs = sample_with(pos, config.negatives, config.corruption, num_entities, known.as_ref(), &mut rng);
                let d_pos = table.distance(pos.head, pos.relation, pos.tail);
                let d_neg: Vec<f64> = negs
                    .triples
                    .iter()
                    .map(|t| table.distance(t.head, t.relation, t.tail))
                    .collect();
                let weights = adversarial_weights(&d_neg, config.adversarial_temperature);

                let mut loss = -log_sigmoid(gamma - d_pos);
                for (d, w) in d_neg.iter().zip(&weights) {
                    loss -= w * log_sigmoid(d - gamma);
                }
                batch_loss += loss;

                grads.add(&table, &pos, sigmoid(d_pos - gamma) / b);
                for ((t, d), w) in negs.triples.iter().zip(&d_neg).zip(&weights) {
                    grads.add(&table, t, -w * sigmoid(gamma - d) / b);
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss;
            grads.apply(&mut table, config.learning_rate);
        }
        if !table.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                loss: f64::NAN,
            });
        }
        let mean = epoch_loss / triples.len() as f64;
        epoch_losses.push(mean);
        observer(epoch, &table, mean);
    }
    Ok(TrainOutcome { table, epoch_losses })
}

/// Softmax of `temperature * score` (score = -distance) over the negatives.
fn adversarial_weights(distances: &[f64], temperature: f64) -> Vec<f64> {
    let logits: Vec<f64> = distances.iter().map(|d| -temperature * d).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
