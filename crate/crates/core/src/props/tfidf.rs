//! Smoothed TF-IDF over entity text.
//!
//! `weight(t, d) = tf(t, d) * (ln((1 + N) / (1 + df(t))) + 1)`, then each
//! document vector is L2-normalized. Tokens are lowercase alphanumeric runs.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

/// Sparse vector as `(term id, weight)` pairs sorted by term id.
pub type SparseVec = Vec<(u32, f64)>;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone)]
pub struct TfIdf {
    vocab: HashMap<String, u32>,
    idf: Vec<f64>,
    docs: Vec<SparseVec>,
}

impl TfIdf {
    pub fn vocab_size(&self) -> usize {
        self.idf.len()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.vocab.get(term).map(|&t| self.idf[t as usize])
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.vocab.get(term).copied()
    }

    pub fn doc(&self, i: usize) -> &SparseVec {
        &self.docs[i]
    }

    pub fn docs(&self) -> &[SparseVec] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Vectorizes unseen text with the fitted vocabulary and idf.
    pub fn transform(&self, text: &str) -> SparseVec {
        let mut tf: BTreeMap<u32, f64> = BTreeMap::new();
        for tok in tokenize(text) {
            if let Some(&t) = self.vocab.get(&tok) {
                *tf.entry(t).or_default() += 1.0;
            }
        }
        let mut v: SparseVec = tf
            .into_iter()
            .map(|(t, c)| (t, c * self.idf[t as usize]))
            .collect();
        l2_normalize(&mut v);
        v
    }
}

fn l2_normalize(v: &mut SparseVec) {
    let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, w) in v.iter_mut() {
            *w /= norm;
        }
    }
}

pub fn dot(a: &SparseVec, b: &SparseVec) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

pub fn tfidf_features(corpus: &[String]) -> Result<TfIdf> {
    tfidf_features_with(corpus, None)
}

/// Like [`tfidf_features`], keeping only the `max_features` terms with the
/// highest document frequency (ties by term order).
pub fn tfidf_features_with(corpus: &[String], max_features: Option<usize>) -> Result<TfIdf> {
    if corpus.is_empty() {
        return Err(Error::Empty("tf-idf corpus"));
    }
    let tokenized: Vec<Vec<String>> = corpus.iter().map(|d| tokenize(d)).collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in &tokenized {
        let mut seen: Vec<&str> = doc.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let mut terms: Vec<(&str, usize)> = df.into_iter().collect();
    if let Some(max) = max_features {
        if terms.len() > max {
            terms.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            terms.truncate(max);
            terms.sort_by(|a, b| a.0.cmp(b.0));
        }
    }

    let n = corpus.len() as f64;
    let vocab: HashMap<String, u32> = terms
        .iter()
        .enumerate()
        .map(|(i, (t, _))| (t.to_string(), i as u32))
        .collect();
    let idf: Vec<f64> = terms
        .iter()
        .map(|&(_, d)| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
        .collect();

    let docs = tokenized
        .iter()
        .map(|doc| {
            let mut tf: BTreeMap<u32, f64> = BTreeMap::new();
            for tok in doc {
                if let Some(&t) = vocab.get(tok) {
                    *tf.entry(t).or_default() += 1.0;
                }
            }
            let mut v: SparseVec = tf
                .into_iter()
                .map(|(t, c)| (t, c * idf[t as usize]))
                .collect();
            l2_normalize(&mut v);
            v
        })
        .collect();
    Ok(TfIdf { vocab, idf, docs })
}
