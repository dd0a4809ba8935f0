use serde::{Deserialize, Serialize};

use super::prob::{check_labels, check_same_shape, ProbMatrix};
use crate::error::{Error, Result};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub fn predict_labels(p: &ProbMatrix) -> Vec<usize> {
    p.rows().map(argmax).collect()
}

fn disagreements<'a>(p1: &'a ProbMatrix, p2: &'a ProbMatrix) -> impl Iterator<Item = bool> + 'a {
    p1.rows().zip(p2.rows()).map(|(a, b)| argmax(a) != argmax(b))
}

/// Fraction of rows on which the two argmax predictions differ.
pub fn churn(p1: &ProbMatrix, p2: &ProbMatrix) -> Result<f64> {
    check_same_shape(p1, p2)?;
    if p1.n() == 0 {
        return Ok(0.0);
    }
    let d = disagreements(p1, p2).filter(|&x| x).count();
    Ok(d as f64 / p1.n() as f64)
}

/// Surrogate churn: half the mean L1 distance between max-normalized rows
/// raised elementwise to `alpha`.
pub fn schurn(p1: &ProbMatrix, p2: &ProbMatrix, alpha: f64) -> Result<f64> {
    check_same_shape(p1, p2)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Usage(format!("schurn alpha must be > 0, got {alpha}")));
    }
    if p1.n() == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, (a, b)) in p1.rows().zip(p2.rows()).enumerate() {
        let ma = a[argmax(a)];
        let mb = b[argmax(b)];
        if ma <= 0.0 || mb <= 0.0 {
            return Err(Error::Usage(format!("row {i} has no positive entry")));
        }
        let mut l1 = 0.0;
        for (x, y) in a.iter().zip(b) {
            l1 += ((x / ma).powf(alpha) - (y / mb).powf(alpha)).abs();
        }
        total += l1;
    }
    Ok(0.5 * total / p1.n() as f64)
}

/// Gap between the top two probabilities of a row.
pub fn row_confidence(row: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in row {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    first - second
}

pub fn confidence(p: &ProbMatrix) -> Vec<f64> {
    p.rows().map(row_confidence).collect()
}

/// Churn restricted to the rows model 1 classifies correctly / incorrectly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceChurn {
    pub correct: f64,
    pub incorrect: f64,
    pub n_correct: usize,
    pub n_incorrect: usize,
}

impl SliceChurn {
    pub fn correct_empty(&self) -> bool {
        self.n_correct == 0
    }

    pub fn incorrect_empty(&self) -> bool {
        self.n_incorrect == 0
    }
}

pub fn slice_churn(p1: &ProbMatrix, p2: &ProbMatrix, labels: &[usize]) -> Result<SliceChurn> {
    check_same_shape(p1, p2)?;
    check_labels(p1, labels)?;
    let (mut nc, mut ni, mut dc, mut di) = (0usize, 0usize, 0usize, 0usize);
    for ((a, b), &y) in p1.rows().zip(p2.rows()).zip(labels) {
        let ya = argmax(a);
        let differ = ya != argmax(b);
        if ya == y {
            nc += 1;
            dc += differ as usize;
        } else {
            ni += 1;
            di += differ as usize;
        }
    }
    let frac = |d: usize, n: usize| if n == 0 { 0.0 } else { d as f64 / n as f64 };
    Ok(SliceChurn { correct: frac(dc, nc), incorrect: frac(di, ni), n_correct: nc, n_incorrect: ni })
}

pub fn accuracy(p: &ProbMatrix, labels: &[usize]) -> Result<f64> {
    check_labels(p, labels)?;
    if p.n() == 0 {
        return Ok(0.0);
    }
    let hits = p.rows().zip(labels).filter(|(r, &y)| argmax(r) == y).count();
    Ok(hits as f64 / p.n() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm(rows: &[&[f64]]) -> ProbMatrix {
        ProbMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.25, 0.375, 0.375]), 1);
    }

    #[test]
    fn churn_counts_disagreements() {
        let a = pm(&[&[0.8, 0.1, 0.1], &[0.1, 0.8, 0.1], &[0.1, 0.1, 0.8]]);
        let b = pm(&[&[0.8, 0.1, 0.1], &[0.1, 0.1, 0.8], &[0.1, 0.1, 0.8]]);
        assert_eq!(churn(&a, &b).unwrap(), 1.0 / 3.0);
        assert_eq!(churn(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn churn_total_disagreement() {
        let a = pm(&[&[0.7, 0.3], &[0.4, 0.6]]);
        let b = pm(&[&[0.3, 0.7], &[0.6, 0.4]]);
        assert_eq!(churn(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn churn_rejects_shape_mismatch() {
        let a = pm(&[&[0.7, 0.3]]);
        let b = pm(&[&[0.7, 0.3], &[0.7, 0.3]]);
        assert!(matches!(churn(&a, &b), Err(Error::Usage(_))));
    }

    #[test]
    fn schurn_hand_value() {
        let a = pm(&[&[0.8, 0.2]]);
        let b = pm(&[&[0.6, 0.4]]);
        let v = schurn(&a, &b, 1.0).unwrap();
        // ½ (|1 − 1| + |0.25 − 2/3|)
        assert!((v - 0.5 * (2.0 / 3.0 - 0.25)).abs() < 1e-15);
        assert!((v - 0.208_333_333_333).abs() < 1e-9);
        assert_eq!(schurn(&a, &a, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn schurn_rejects_non_positive_alpha() {
        let a = pm(&[&[0.8, 0.2]]);
        assert!(schurn(&a, &a, 0.0).is_err());
        assert!(schurn(&a, &a, -1.0).is_err());
    }

    #[test]
    fn confidence_examples() {
        assert!((row_confidence(&[0.7, 0.2, 0.1]) - 0.5).abs() < 1e-15);
        assert_eq!(row_confidence(&[0.25; 4]), 0.0);
        assert_eq!(row_confidence(&[0.0, 1.0, 0.0]), 1.0);
        assert_eq!(row_confidence(&[0.5, 0.5]), 0.0);
    }

    #[test]
    fn slice_churn_partitions() {
        // model 1 correct on rows 0,1; disagreement on rows 1,3
        let p1 = pm(&[&[0.9, 0.1], &[0.8, 0.2], &[0.7, 0.3], &[0.6, 0.4]]);
        let p2 = pm(&[&[0.9, 0.1], &[0.2, 0.8], &[0.7, 0.3], &[0.4, 0.6]]);
        let labels = [0, 0, 1, 1];
        let s = slice_churn(&p1, &p2, &labels).unwrap();
        assert_eq!((s.correct, s.incorrect), (0.5, 0.5));
        let mix = (s.correct * s.n_correct as f64 + s.incorrect * s.n_incorrect as f64) / 4.0;
        assert_eq!(mix, churn(&p1, &p2).unwrap());
    }

    #[test]
    fn empty_slice_is_flagged() {
        let p1 = pm(&[&[0.9, 0.1], &[0.2, 0.8]]);
        let s = slice_churn(&p1, &p1, &[0, 1]).unwrap();
        assert_eq!(s.correct, 0.0);
        assert_eq!(s.incorrect, 0.0);
        assert!(s.incorrect_empty());
        assert!(!s.correct_empty());
    }
}
