//! Multi-label linear classifier over TF-IDF features, trained with the
//! binary cross-entropy
//!
//! ```text
//! L = -(1/N) sum_i sum_c [ y_ic ln p_ic + (1 - y_ic) ln(1 - p_ic) ]
//! ```
//!
//! by full-batch gradient descent. Local stand-in for a fine-tuned language
//! model classifier; shares its loss and output contract.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tfidf::SparseVec;
use super::{PropertyPredictor, PropertyScores};
use crate::error::{Error, Result};
use crate::graph::EntityId;

/// Probability clip for the loss.
pub const BCE_EPS: f64 = 1e-7;

fn check_shapes<P: AsRef<[f64]>, G: AsRef<[bool]>>(pred: &[P], gold: &[G]) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::Shape(format!("{} predictions vs {} gold rows", pred.len(), gold.len())));
    }
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.as_ref().len() != g.as_ref().len() {
            return Err(Error::Shape(format!(
                "row {i}: {} scores vs {} labels",
                p.as_ref().len(),
                g.as_ref().len()
            )));
        }
    }
    Ok(())
}

pub fn bce_loss<P: AsRef<[f64]>, G: AsRef<[bool]>>(pred: &[P], gold: &[G]) -> Result<f64> {
    check_shapes(pred, gold)?;
    if pred.is_empty() {
        return Err(Error::Empty("bce batch"));
    }
    let mut sum = 0.0;
    for (p, g) in pred.iter().zip(gold) {
        for (&yh, &y) in p.as_ref().iter().zip(g.as_ref()) {
            let yh = yh.clamp(BCE_EPS, 1.0 - BCE_EPS);
            sum += if y { yh.ln() } else { (1.0 - yh).ln() };
        }
    }
    Ok(-sum / pred.len() as f64)
}

/// `dL/dp = (p - y) / (p (1 - p)) / N`, evaluated at the clipped prediction.
pub fn bce_grad<P: AsRef<[f64]>, G: AsRef<[bool]>>(pred: &[P], gold: &[G]) -> Result<Vec<Vec<f64>>> {
    check_shapes(pred, gold)?;
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(gold)
        .map(|(p, g)| {
            p.as_ref()
                .iter()
                .zip(g.as_ref())
                .map(|(&yh, &y)| {
                    let yh = yh.clamp(BCE_EPS, 1.0 - BCE_EPS);
                    let y = if y { 1.0 } else { 0.0 };
                    (yh - y) / (yh * (1.0 - yh)) / n
                })
                .collect()
        })
        .collect())
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    n_features: usize,
    n_labels: usize,
    /// Row-major `n_features x n_labels`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearClassifier {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn logits(&self, x: &SparseVec) -> Vec<f64> {
        let mut z = self.bias.clone();
        for &(f, v) in x {
            let row = &self.weights[f as usize * self.n_labels..(f as usize + 1) * self.n_labels];
            for (zi, w) in z.iter_mut().zip(row) {
                *zi += v * w;
            }
        }
        z
    }

    pub fn predict(&self, x: &SparseVec) -> PropertyScores {
        self.logits(x).into_iter().map(sigmoid).collect::<Vec<_>>().into()
    }

    /// Classifier with given parameters; `weights` is row-major
    /// `n_features x bias.len()`.
    pub fn from_parts(n_features: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let n_labels = bias.len();
        if n_labels == 0 || weights.len() != n_features * n_labels {
            return Err(Error::Shape(format!(
                "{} weights for {n_features} features x {n_labels} labels",
                weights.len()
            )));
        }
        Ok(Self {
            n_features,
            n_labels,
            weights,
            bias,
        })
    }

    /// BCE loss over a batch and its analytic gradient with respect to the
    /// parameters, using `dL/dz = (sigmoid(z) - y) / N`.
    pub fn gradient<G: AsRef<[bool]>>(&self, features: &[SparseVec], gold: &[G]) -> Result<Gradient> {
        if features.len() != gold.len() {
            return Err(Error::Shape(format!("{} samples vs {} gold rows", features.len(), gold.len())));
        }
        if let Some(&(f, _)) = features.iter().flatten().find(|(f, _)| *f as usize >= self.n_features) {
            return Err(Error::Shape(format!("feature {f} out of range {}", self.n_features)));
        }
        let probs: Vec<Vec<f64>> = features
            .iter()
            .map(|x| self.logits(x).into_iter().map(sigmoid).collect())
            .collect();
        let loss = bce_loss(&probs, gold)?;
        let n = features.len() as f64;
        let k = self.n_labels;
        let mut weights = vec![0.0; self.weights.len()];
        let mut bias = vec![0.0; k];
        for ((x, p), g) in features.iter().zip(&probs).zip(gold) {
            let delta: Vec<f64> = p
                .iter()
                .zip(g.as_ref())
                .map(|(&pi, &yi)| (pi - if yi { 1.0 } else { 0.0 }) / n)
                .collect();
            for (b, d) in bias.iter_mut().zip(&delta) {
                *b += d;
            }
            for &(f, v) in x {
                let row = &mut weights[f as usize * k..(f as usize + 1) * k];
                for (w, d) in row.iter_mut().zip(&delta) {
                    *w += v * d;
                }
            }
        }
        Ok(Gradient { loss, weights, bias })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub loss: f64,
    /// Same layout as [`LinearClassifier::weights`].
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearTrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for LinearTrainOptions {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearFit {
    pub classifier: LinearClassifier,
    /// Loss before each update.
    pub losses: Vec<f64>,
}

pub fn train_linear_classifier<G: AsRef<[bool]>>(
    features: &[SparseVec],
    gold: &[G],
    n_features: usize,
    opts: LinearTrainOptions,
) -> Result<LinearFit> {
    if features.is_empty() {
        return Err(Error::Empty("training samples"));
    }
    if features.len() != gold.len() {
        return Err(Error::Shape(format!("{} samples vs {} gold rows", features.len(), gold.len())));
    }
    let n_labels = gold[0].as_ref().len();
    if gold.iter().any(|g| g.as_ref().len() != n_labels) {
        return Err(Error::Shape("ragged gold rows".into()));
    }
    if let Some(&(f, _)) = features.iter().flatten().find(|(f, _)| *f as usize >= n_features) {
        return Err(Error::Shape(format!("feature {f} out of range {n_features}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut clf = LinearClassifier {
        n_features,
        n_labels,
        weights: (0..n_features * n_labels).map(|_| rng.gen_range(-0.01..0.01)).collect(),
        bias: vec![0.0; n_labels],
    };

    let mut losses = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let grad = clf.gradient(features, gold)?;
        if !grad.loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                loss: grad.loss,
            });
        }
        losses.push(grad.loss);
        for (w, g) in clf.weights.iter_mut().zip(&grad.weights) {
            *w -= opts.lr * g;
        }
        for (b, g) in clf.bias.iter_mut().zip(&grad.bias) {
            *b -= opts.lr * g;
        }
    }
    Ok(LinearFit {
        classifier: clf,
        losses,
    })
}

/// Scores entities by their precomputed feature vectors.
pub struct LinearPredictor {
    classifier: LinearClassifier,
    /// One feature vector per entity handle.
    features: Vec<SparseVec>,
}

impl LinearPredictor {
    pub fn new(classifier: LinearClassifier, features: Vec<SparseVec>) -> Self {
        Self {
            classifier,
            features,
        }
    }

    pub fn classifier(&self) -> &LinearClassifier {
        &self.classifier
    }
}

impl PropertyPredictor for LinearPredictor {
    fn name(&self) -> &str {
        "linear"
    }

    fn predict(&self, entity: EntityId) -> Result<PropertyScores> {
        let x = self
            .features
            .get(entity.index())
            .ok_or_else(|| Error::UnknownEntity(entity.to_string()))?;
        Ok(self.classifier.predict(x))
    }
}
