//! Hybrid recommender baseline: entity-KNN over binary property rows blended
//! with TF-IDF content similarity.

use super::tfidf::{SparseVec, TfIdf};
use super::{PropertyPredictor, PropertyScores};
use crate::error::{Error, Result};
use crate::graph::{EntityId, PropertyMatrix};

/// Sorts `(entity, similarity)` by similarity desc then entity asc and keeps `k`.
fn top_k(mut sims: Vec<(usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sims.truncate(k);
    sims
}

fn weighted_rows(matrix: &PropertyMatrix, neighbors: &[(usize, f64)], weights: &[f64]) -> PropertyScores {
    let mut out = vec![0.0; matrix.cols()];
    for (&(n, _), &w) in neighbors.iter().zip(weights) {
        for (o, &b) in out.iter_mut().zip(matrix.row(n)) {
            if b {
                *o += w;
            }
        }
    }
    out.into()
}

/// Inverted index over binary property rows for cosine neighbour search.
#[derive(Debug, Clone)]
pub struct KnnIndex {
    supports: Vec<Vec<usize>>,
    postings: Vec<Vec<usize>>,
}

impl KnnIndex {
    pub fn new(matrix: &PropertyMatrix) -> Self {
        let supports: Vec<Vec<usize>> = (0..matrix.rows()).map(|i| matrix.row_support(i)).collect();
        let mut postings = vec![Vec::new(); matrix.cols()];
        for (e, s) in supports.iter().enumerate() {
            for &p in s {
                postings[p].push(e);
            }
        }
        Self { supports, postings }
    }

    /// Cosine similarity of `query` to every other row with nonzero overlap.
    pub fn similarities(&self, query: usize) -> Vec<(usize, f64)> {
        let q = &self.supports[query];
        if q.is_empty() {
            return Vec::new();
        }
        let mut overlap = std::collections::HashMap::<usize, usize>::new();
        for &p in q {
            for &e in &self.postings[p] {
                if e != query {
                    *overlap.entry(e).or_default() += 1;
                }
            }
        }
        let qn = q.len() as f64;
        overlap
            .into_iter()
            .map(|(e, c)| (e, c as f64 / (qn * self.supports[e].len() as f64).sqrt()))
            .collect()
    }

    /// Unweighted mean of the `k` most similar rows.
    pub fn scores(&self, matrix: &PropertyMatrix, query: usize, k: usize) -> PropertyScores {
        let neighbors = top_k(self.similarities(query), k);
        if neighbors.is_empty() {
            return PropertyScores::zeros(matrix.cols());
        }
        let w = vec![1.0 / neighbors.len() as f64; neighbors.len()];
        weighted_rows(matrix, &neighbors, &w)
    }
}

pub fn knn_scores(matrix: &PropertyMatrix, query: EntityId, k: usize) -> Result<PropertyScores> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    Ok(KnnIndex::new(matrix).scores(matrix, query.index(), k))
}

/// Inverted index over TF-IDF document vectors.
#[derive(Debug, Clone)]
pub struct ContentIndex {
    postings: Vec<Vec<(usize, f64)>>,
}

impl ContentIndex {
    pub fn new(tfidf: &TfIdf) -> Self {
        let mut postings = vec![Vec::new(); tfidf.vocab_size()];
        for (d, v) in tfidf.docs().iter().enumerate() {
            for &(t, w) in v {
                postings[t as usize].push((d, w));
            }
        }
        Self { postings }
    }

    pub fn similarities(&self, query_vec: &SparseVec, exclude: Option<usize>) -> Vec<(usize, f64)> {
        let mut acc = std::collections::HashMap::<usize, f64>::new();
        for &(t, qw) in query_vec {
            for &(d, w) in &self.postings[t as usize] {
                if Some(d) != exclude {
                    *acc.entry(d).or_default() += qw * w;
                }
            }
        }
        acc.into_iter().filter(|&(_, s)| s > 0.0).collect()
    }

    /// Similarity-weighted mean of the `k` nearest documents' property rows.
    pub fn scores(&self, tfidf: &TfIdf, matrix: &PropertyMatrix, query: usize, k: usize) -> PropertyScores {
        let neighbors = top_k(self.similarities(tfidf.doc(query), Some(query)), k);
        let total: f64 = neighbors.iter().map(|n| n.1).sum();
        if neighbors.is_empty() || total <= 0.0 {
            return PropertyScores::zeros(matrix.cols());
        }
        let w: Vec<f64> = neighbors.iter().map(|n| n.1 / total).collect();
        let mut s = weighted_rows(matrix, &neighbors, &w);
        for v in s.0.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        s
    }
}

pub fn content_scores(
    query: EntityId,
    tfidf: &TfIdf,
    matrix: &PropertyMatrix,
    k: usize,
) -> Result<PropertyScores> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if tfidf.len() != matrix.rows() {
        return Err(Error::Shape(format!(
            "{} documents vs {} property rows",
            tfidf.len(),
            matrix.rows()
        )));
    }
    Ok(ContentIndex::new(tfidf).scores(tfidf, matrix, query.index(), k))
}

/// `alpha * knn + (1 - alpha) * content`.
pub fn hybrid_scores(knn: &PropertyScores, content: &PropertyScores, alpha: f64) -> Result<PropertyScores> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    if knn.len() != content.len() {
        return Err(Error::Shape("knn and content score lengths differ".into()));
    }
    Ok(knn
        .iter()
        .zip(content.iter())
        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
        .collect::<Vec<_>>()
        .into())
}

pub struct HybridRecommender {
    matrix: PropertyMatrix,
    tfidf: TfIdf,
    knn: KnnIndex,
    content: ContentIndex,
    k: usize,
    alpha: f64,
}

impl HybridRecommender {
    pub const DEFAULT_K: usize = 10;
    pub const DEFAULT_ALPHA: f64 = 0.5;

    /// `matrix` is the train property matrix; `tfidf` has one document per entity.
    pub fn new(matrix: PropertyMatrix, tfidf: TfIdf, k: usize, alpha: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
        }
        if tfidf.len() != matrix.rows() {
            return Err(Error::Shape(format!(
                "{} documents vs {} property rows",
                tfidf.len(),
                matrix.rows()
            )));
        }
        Ok(Self {
            knn: KnnIndex::new(&matrix),
            content: ContentIndex::new(&tfidf),
            matrix,
            tfidf,
            k,
            alpha,
        })
    }
}

impl PropertyPredictor for HybridRecommender {
    fn name(&self) -> &str {
        "hybrid"
    }

    fn predict(&self, entity: EntityId) -> Result<PropertyScores> {
        let q = entity.index();
        let knn = self.knn.scores(&self.matrix, q, self.k);
        let content = self.content.scores(&self.tfidf, &self.matrix, q, self.k);
        hybrid_scores(&knn, &content, self.alpha)
    }
}
