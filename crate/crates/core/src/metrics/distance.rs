use serde::{Deserialize, Serialize};

use crate::PROB_EPS;

/// Floors every entry at [`PROB_EPS`] and renormalizes the row.
pub fn clamp_row(row: &[f64]) -> Vec<f64> {
    let mut q: Vec<f64> = row.iter().map(|&v| v.max(PROB_EPS)).collect();
    let s: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= s);
    q
}

/// Shannon entropy (natural log) of the clamped row.
pub fn entropy(row: &[f64]) -> f64 {
    -clamp_row(row).iter().map(|&p| p * p.ln()).sum::<f64>()
}

fn kl_clamped(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * (x / y).ln()).sum()
}

/// Symmetric KL between the clamped row and the uniform distribution,
/// `Σ (p_i − 1/K) ln(K p_i)`.
pub fn skl_to_uniform(row: &[f64]) -> f64 {
    let q = clamp_row(row);
    let k = q.len() as f64;
    q.iter().map(|&p| (p - 1.0 / k) * (k * p).ln()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distances {
    pub l1: f64,
    pub kl: f64,
    pub skl: f64,
}

/// L1, KL(a‖b) and symmetric KL between two rows.
///
/// All three are evaluated on the clamped rows so that Pinsker's inequality
/// `l1 ≤ √(2·kl)` holds between the returned values.
pub fn distances(a: &[f64], b: &[f64]) -> Distances {
    debug_assert_eq!(a.len(), b.len());
    let (qa, qb) = (clamp_row(a), clamp_row(b));
    let l1 = qa.iter().zip(&qb).map(|(x, y)| (x - y).abs()).sum();
    let kl = kl_clamped(&qa, &qb).max(0.0);
    let skl = kl + kl_clamped(&qb, &qa).max(0.0);
    Distances { l1, kl, skl }
}

/// Plain L1 distance on the raw rows.
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
