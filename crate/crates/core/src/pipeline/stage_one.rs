use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::with_pool;
use crate::backend::{BackendClient, RemotePropertyScorer};
use crate::error::{Error, Result};
use crate::genlp::{entity_document, FieldMask};
use crate::graph::{EntityId, KnowledgeGraph, SplitSet};
use crate::props::tfidf::tfidf_features_with;
use crate::props::{
    micro_prf, select_properties, tfidf_features, train_linear_classifier, tune_threshold, HybridRecommender,
    LinearPredictor, LinearTrainOptions, PropertyPredictor, PropertyScores, Prf, RecoinPredictor, SparseVec,
};

pub fn score_heads(predictor: &dyn PropertyPredictor, heads: &[EntityId], jobs: usize) -> Result<Vec<PropertyScores>> {
    with_pool(jobs, || {
        heads
            .par_iter()
            .map(|&h| {
                predictor
                    .predict(h)
                    .map_err(|e| e.context(format!("property prediction for head {h}")))
            })
            .collect()
    })
}

/// Relations each head uses within one split part.
pub fn gold_vectors(graph: &KnowledgeGraph, part: &[usize], heads: &[EntityId]) -> Result<Vec<Vec<bool>>> {
    heads.iter().map(|&h| graph.property_vector(h, part)).collect()
}

/// Best grid threshold on the heads of the validation part.
pub fn fit_threshold(
    predictor: &dyn PropertyPredictor,
    graph: &KnowledgeGraph,
    split: &SplitSet,
    grid: &[f64],
    jobs: usize,
) -> Result<f64> {
    let heads = SplitSet::heads(graph, &split.valid);
    let scores = score_heads(predictor, &heads, jobs)?;
    let gold = gold_vectors(graph, &split.valid, &heads)?;
    tune_threshold(&scores, &gold, grid)
}

/// Micro P/R/F1 on the heads of `part` against the relations they use there.
pub fn eval_properties(
    predictor: &dyn PropertyPredictor,
    graph: &KnowledgeGraph,
    part: &[usize],
    threshold: f64,
    jobs: usize,
) -> Result<Prf> {
    let heads = SplitSet::heads(graph, part);
    let scores = score_heads(predictor, &heads, jobs)?;
    let pred: Vec<Vec<bool>> = scores.iter().map(|s| select_properties(s, threshold)).collect();
    micro_prf(&pred, &gold_vectors(graph, part, &heads)?)
}

/// Stage-one scorer choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageOneMethod {
    Recoin,
    Hybrid,
    Linear,
    Remote,
}

impl fmt::Display for StageOneMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageOneMethod::Recoin => "recoin",
            StageOneMethod::Hybrid => "hybrid",
            StageOneMethod::Linear => "linear",
            StageOneMethod::Remote => "remote",
        })
    }
}

impl FromStr for StageOneMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recoin" => Ok(StageOneMethod::Recoin),
            "hybrid" => Ok(StageOneMethod::Hybrid),
            "linear" => Ok(StageOneMethod::Linear),
            "remote" => Ok(StageOneMethod::Remote),
            _ => Err(Error::InvalidArgument(format!(
                "unknown stage-one method `{s}` (recoin, hybrid, linear, remote)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageOneOptions {
    /// Neighbours for the hybrid recommender.
    pub k: usize,
    /// Weight of the property-KNN half of the hybrid blend.
    pub alpha: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Vocabulary cap for linear-classifier TF-IDF features.
    pub max_features: Option<usize>,
    pub seed: u64,
    pub mask: FieldMask,
}

impl Default for StageOneOptions {
    fn default() -> Self {
        let lin = LinearTrainOptions::default();
        Self {
            k: HybridRecommender::DEFAULT_K,
            alpha: HybridRecommender::DEFAULT_ALPHA,
            epochs: lin.epochs,
            learning_rate: lin.lr,
            max_features: None,
            seed: 0,
            mask: FieldMask::NONE,
        }
    }
}

fn documents(graph: &KnowledgeGraph, mask: FieldMask) -> Vec<String> {
    graph
        .entity_ids()
        .map(|e| entity_document(graph.entity_label(e), graph.meta(e), mask))
        .collect()
}

/// Fits a local stage-one scorer on the train part. `Remote` needs a
/// connected client.
pub fn build_predictor<'g>(
    method: StageOneMethod,
    graph: &'g KnowledgeGraph,
    split: &SplitSet,
    opts: &StageOneOptions,
    client: Option<BackendClient>,
) -> Result<Box<dyn PropertyPredictor + 'g>> {
    Ok(match method {
        StageOneMethod::Recoin => Box::new(RecoinPredictor::new(graph, &split.train)?),
        StageOneMethod::Hybrid => {
            let tfidf = tfidf_features(&documents(graph, opts.mask))?;
            Box::new(HybridRecommender::new(
                graph.property_matrix(&split.train),
                tfidf,
                opts.k,
                opts.alpha,
            )?)
        }
        StageOneMethod::Linear => {
            let tfidf = tfidf_features_with(&documents(graph, opts.mask), opts.max_features)?;
            let heads = SplitSet::heads(graph, &split.train);
            let x: Vec<SparseVec> = heads.iter().map(|h| tfidf.doc(h.index()).clone()).collect();
            let y = gold_vectors(graph, &split.train, &heads)?;
            let fit = train_linear_classifier(
                &x,
                &y,
                tfidf.vocab_size(),
                LinearTrainOptions {
                    epochs: opts.epochs,
                    lr: opts.learning_rate,
                    seed: opts.seed,
                },
            )?;
            Box::new(LinearPredictor::new(fit.classifier, tfidf.docs().to_vec()))
        }
        StageOneMethod::Remote => {
            let client =
                client.ok_or_else(|| Error::InvalidArgument("remote stage one needs a backend".into()))?;
            Box::new(RemotePropertyScorer::new(client, graph, opts.mask)?)
        }
    })
}
