//! Thresholding and micro-averaged precision/recall/F1 for multi-label output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

pub fn select_properties(scores: &[f64], threshold: f64) -> Vec<bool> {
    scores.iter().map(|&s| s >= threshold).collect()
}

fn confusion<P: AsRef<[bool]>, G: AsRef<[bool]>>(pred: &[P], gold: &[G]) -> Result<(usize, usize, usize)> {
    if pred.len() != gold.len() {
        return Err(Error::Shape(format!("{} predicted rows vs {} gold rows", pred.len(), gold.len())));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        let (p, g) = (p.as_ref(), g.as_ref());
        if p.len() != g.len() {
            return Err(Error::Shape(format!("row {i}: {} vs {} labels", p.len(), g.len())));
        }
        for (&a, &b) in p.iter().zip(g) {
            match (a, b) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok((tp, fp, fn_))
}

/// Micro-averaged scores over every entity-label cell; `0/0` counts as 0.
pub fn micro_prf<P: AsRef<[bool]>, G: AsRef<[bool]>>(pred: &[P], gold: &[G]) -> Result<Prf> {
    let (tp, fp, fn_) = confusion(pred, gold)?;
    Ok(Prf::from_counts(tp, fp, fn_))
}

/// `0.05, 0.10, ..., 0.95`.
pub fn default_threshold_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

/// Grid value with the best micro-F1 on validation data; ties go to the
/// smaller threshold. With no positive gold labels at all the largest grid
/// value is returned, i.e. predict as little as possible.
pub fn tune_threshold<S: AsRef<[f64]>, G: AsRef<[bool]>>(scores: &[S], gold: &[G], grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Empty("threshold grid"));
    }
    if scores.len() != gold.len()
        || scores.iter().zip(gold).any(|(s, g)| s.as_ref().len() != g.as_ref().len())
    {
        return Err(Error::Shape("scores and gold differ in shape".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    if !gold.iter().any(|g| g.as_ref().iter().any(|&b| b)) {
        return Ok(*sorted.last().unwrap());
    }
    let mut best = (sorted[0], f64::NEG_INFINITY);
    for &t in &sorted {
        let pred: Vec<Vec<bool>> = scores.iter().map(|s| select_properties(s.as_ref(), t)).collect();
        let f1 = micro_prf(&pred, gold)?.f1;
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    Ok(best.0)
}
