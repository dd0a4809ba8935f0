use super::churn::argmax;
use super::prob::{check_labels, ProbMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_ECE_BINS: usize = 15;

/// Top-label expected calibration error over equal-width bins
/// `(m/M, (m+1)/M]` (a zero confidence falls in the first bin).
///
/// Computed as `Σ_bins |Σ_{i∈bin}(correct_i − conf_i)| / n`, which equals the
/// usual `Σ (|bin|/n)·|acc − conf|`.
pub fn ece(p: &ProbMatrix, labels: &[usize], n_bins: usize) -> Result<f64> {
    check_labels(p, labels)?;
    if n_bins == 0 {
        return Err(Error::Usage("ece needs at least one bin".into()));
    }
    if p.n() == 0 {
        return Ok(0.0);
    }
    let mut gap = vec![0.0f64; n_bins];
    for (row, &y) in p.rows().zip(labels) {
        let top = argmax(row);
        let conf = row[top];
        let bin = ((conf * n_bins as f64).ceil() as usize).clamp(1, n_bins) - 1;
        let correct = if top == y { 1.0 } else { 0.0 };
        gap[bin] += correct - conf;
    }
    Ok(gap.iter().map(|g| g.abs()).sum::<f64>() / p.n() as f64)
}
