use serde::{Deserialize, Serialize};

use super::calibration::{ece, DEFAULT_ECE_BINS};
use super::churn::{accuracy, churn, confidence, schurn, slice_churn};
use super::distance::entropy;
use super::prob::{check_labels, check_same_shape, ProbMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchurnPoint {
    pub alpha: f64,
    pub value: f64,
}

/// Churn and per-model quality measures for one pair of models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChurnReport {
    pub churn: f64,
    pub schurn: Vec<SchurnPoint>,
    pub churn_correct: f64,
    pub churn_incorrect: f64,
    pub correct_slice_empty: bool,
    pub incorrect_slice_empty: bool,
    pub mean_confidence: [f64; 2],
    pub mean_entropy: [f64; 2],
    pub ece: [f64; 2],
    pub accuracy: [f64; 2],
}

impl ChurnReport {
    pub fn schurn_at(&self, alpha: f64) -> Option<f64> {
        self.schurn.iter().find(|s| s.alpha == alpha).map(|s| s.value)
    }
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn mean_confidence(p: &ProbMatrix) -> f64 {
    mean(confidence(p))
}

pub fn mean_entropy(p: &ProbMatrix) -> f64 {
    mean(p.rows().map(entropy))
}

/// Builds the report for `(p1, p2)`; slices condition on model 1.
pub fn churn_report(
    p1: &ProbMatrix,
    p2: &ProbMatrix,
    labels: &[usize],
    alphas: &[f64],
) -> Result<ChurnReport> {
    check_same_shape(p1, p2)?;
    check_labels(p1, labels)?;
    let c = churn(p1, p2)?;
    let schurn = alphas
        .iter()
        .map(|&alpha| Ok(SchurnPoint { alpha, value: schurn(p1, p2, alpha)? }))
        .collect::<Result<Vec<_>>>()?;
    let slices = slice_churn(p1, p2, labels)?;
    let accuracy = [accuracy(p1, labels)?, accuracy(p2, labels)?];
    if c > (1.0 - accuracy[0]) + (1.0 - accuracy[1]) + 1e-12 {
        return Err(Error::Experiment(format!(
            "churn {c} exceeds the summed error rates {} + {}",
            1.0 - accuracy[0],
            1.0 - accuracy[1]
        )));
    }
    Ok(ChurnReport {
        churn: c,
        schurn,
        churn_correct: slices.correct,
        churn_incorrect: slices.incorrect,
        correct_slice_empty: slices.correct_empty(),
        incorrect_slice_empty: slices.incorrect_empty(),
        mean_confidence: [mean_confidence(p1), mean_confidence(p2)],
        mean_entropy: [mean_entropy(p1), mean_entropy(p2)],
        ece: [ece(p1, labels, DEFAULT_ECE_BINS)?, ece(p2, labels, DEFAULT_ECE_BINS)?],
        accuracy,
    })
}
