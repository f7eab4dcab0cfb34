use std::collections::HashMap;

use super::tokenizer::{TokenId, Vocabulary};
use crate::error::{Error, Result};

/// Tolerance on `|log-sum-exp|` for a distribution to count as normalized.
pub(crate) const NORMALIZATION_TOL: f64 = 1e-6;

/// Next-token distribution source. Implementations must be deterministic
/// per `(prompt, prefix)`.
pub trait TokenScorer: Send + Sync {
    fn vocabulary(&self) -> &Vocabulary;

    /// One log-probability per vocabulary token, normalized.
    fn next_log_probs(&self, prompt: &str, prefix: &[TokenId]) -> Result<Vec<f64>>;
}

impl<T: TokenScorer + ?Sized> TokenScorer for &T {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }

    fn next_log_probs(&self, prompt: &str, prefix: &[TokenId]) -> Result<Vec<f64>> {
        (**self).next_log_probs(prompt, prefix)
    }
}

impl<T: TokenScorer + ?Sized> TokenScorer for Box<T> {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }

    fn next_log_probs(&self, prompt: &str, prefix: &[TokenId]) -> Result<Vec<f64>> {
        (**self).next_log_probs(prompt, prefix)
    }
}

/// `ln Σ exp(x)`; `-inf` for an empty or all-`-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Length, NaN/`+inf` and normalization checks. `-inf` (probability 0) is
/// allowed.
pub fn check_distribution(log_probs: &[f64], vocab_len: usize, tol: f64) -> Result<()> {
    if log_probs.len() != vocab_len {
        return Err(Error::Shape(format!(
            "{} log-probs for a vocabulary of {vocab_len}",
            log_probs.len()
        )));
    }
    if log_probs.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::InvalidArgument("log-probs contain NaN or +inf".into()));
    }
    let lse = log_sum_exp(log_probs);
    if !(lse.abs() <= tol) {
        return Err(Error::Unnormalized(lse));
    }
    Ok(())
}

/// Table-driven scorer for tests and offline runs. Lookup order: entry for
/// `(prompt, prefix)`, entry for `prefix` under any prompt, then the
/// fallback (uniform unless replaced).
#[derive(Debug, Clone)]
pub struct MockScorer {
    vocab: Vocabulary,
    entries: HashMap<(Option<String>, Vec<TokenId>), Vec<f64>>,
    fallback: Vec<f64>,
}

impl MockScorer {
    pub fn new(vocab: Vocabulary) -> Self {
        let uniform = -(vocab.len() as f64).ln();
        let fallback = vec![uniform; vocab.len()];
        Self {
            vocab,
            entries: HashMap::new(),
            fallback,
        }
    }

    fn checked(&self, log_probs: Vec<f64>) -> Result<Vec<f64>> {
        check_distribution(&log_probs, self.vocab.len(), NORMALIZATION_TOL)?;
        Ok(log_probs)
    }

    pub fn with_entry(mut self, prefix: &[TokenId], log_probs: Vec<f64>) -> Result<Self> {
        let lp = self.checked(log_probs)?;
        self.entries.insert((None, prefix.to_vec()), lp);
        Ok(self)
    }

    pub fn with_prompt_entry(mut self, prompt: &str, prefix: &[TokenId], log_probs: Vec<f64>) -> Result<Self> {
        let lp = self.checked(log_probs)?;
        self.entries.insert((Some(prompt.to_owned()), prefix.to_vec()), lp);
        Ok(self)
    }

    pub fn with_fallback(mut self, log_probs: Vec<f64>) -> Result<Self> {
        self.fallback = self.checked(log_probs)?;
        Ok(self)
    }
}

impl TokenScorer for MockScorer {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_log_probs(&self, prompt: &str, prefix: &[TokenId]) -> Result<Vec<f64>> {
        let key = (Some(prompt.to_owned()), prefix.to_vec());
        if let Some(lp) = self.entries.get(&key) {
            return Ok(lp.clone());
        }
        let key = (None, key.1);
        Ok(self.entries.get(&key).unwrap_or(&self.fallback).clone())
    }
}
