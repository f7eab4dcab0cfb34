//! Stage one: which relations are relevant to a head entity.
//!
//! Every scorer produces a [`PropertyScores`] vector of length `|R|` with
//! values in `[0, 1]`; a validation-tuned threshold turns it into the binary
//! relevance vector.

pub mod linear;
pub mod metrics;
pub mod recoin;
pub mod recommender;
pub mod tfidf;

use std::io::Write;
use std::ops::Deref;

use crate::error::Result;
use crate::graph::{EntityId, KnowledgeGraph};

pub use linear::{bce_grad, bce_loss, train_linear_classifier, Gradient, LinearClassifier, LinearPredictor, LinearTrainOptions};
pub use metrics::{default_threshold_grid, micro_prf, select_properties, tune_threshold, Prf};
pub use recoin::{build_class_stats, recoin_scores, ClassStats, RecoinPredictor, RecoinScores};
pub use recommender::{content_scores, hybrid_scores, knn_scores, ContentIndex, HybridRecommender, KnnIndex};
pub use tfidf::{tfidf_features, tokenize, SparseVec, TfIdf};

/// Per-relation relevance scores for one entity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PropertyScores(pub Vec<f64>);

impl PropertyScores {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for PropertyScores {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for PropertyScores {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for PropertyScores {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Anything that can score relations for a head entity.
pub trait PropertyPredictor: Sync {
    fn name(&self) -> &str;

    fn predict(&self, entity: EntityId) -> Result<PropertyScores>;
}

/// `entity<TAB>relation<TAB>score` rows.
pub fn write_scores_tsv<W: Write>(
    mut out: W,
    graph: &KnowledgeGraph,
    scores: &[(EntityId, PropertyScores)],
) -> Result<()> {
    for (e, s) in scores {
        for r in graph.relation_ids() {
            writeln!(
                out,
                "{}\t{}\t{}",
                graph.entity_label(*e),
                graph.relation_label(r),
                s[r.index()]
            )?;
        }
    }
    Ok(())
}

/// `entity<TAB>relation` rows for every selected position.
pub fn write_selected_tsv<W: Write>(
    mut out: W,
    graph: &KnowledgeGraph,
    selected: &[(EntityId, Vec<bool>)],
) -> Result<()> {
    for (e, v) in selected {
        for r in graph.relation_ids().filter(|r| v[r.index()]) {
            writeln!(out, "{}\t{}", graph.entity_label(*e), graph.relation_label(r))?;
        }
    }
    Ok(())
}
