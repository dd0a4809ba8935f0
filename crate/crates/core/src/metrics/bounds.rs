//! Executable audits of the churn bounds.
//!
//! - churn ≤ Perr(w1) + Perr(w2)
//! - a row whose argmaxes differ has L1 distance > min(γ1, γ2)
//! - Pinsker: L1 ≤ √(2·KL) per row
//! - binary case: lower entropy (or larger SKL to uniform) implies larger γ

use serde::{Deserialize, Serialize};

use super::churn::{argmax, row_confidence};
use super::distance::{distances, l1_distance};
use super::prob::{check_labels, check_same_shape, ProbMatrix};
use crate::error::Result;

/// Slack allowed on the Pinsker comparison for rounding.
pub const PINSKER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub ok: bool,
    /// First violating row when `ok` is false.
    pub witness: Option<usize>,
}

impl Check {
    fn from_witness(witness: Option<usize>) -> Self {
        Self { ok: witness.is_none(), witness }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundAudit {
    pub lemma1: Check,
    pub lemma2: Check,
    pub pinsker: Check,
    /// `perr1 + perr2 − churn`.
    pub lemma1_slack: f64,
    /// Per row `l1 − min(γ1, γ2)`; only constrained on disagreement rows.
    pub lemma2_slack: Vec<f64>,
    /// Per row `√(2·kl) − l1` on clamped rows.
    pub pinsker_slack: Vec<f64>,
}

impl BoundAudit {
    pub fn all_ok(&self) -> bool {
        self.lemma1.ok && self.lemma2.ok && self.pinsker.ok
    }
}

pub fn audit_bounds(p1: &ProbMatrix, p2: &ProbMatrix, labels: &[usize]) -> Result<BoundAudit> {
    check_same_shape(p1, p2)?;
    check_labels(p1, labels)?;
    let n = p1.n();

    // Integer counts keep the first check free of rounding.
    let (mut disagree, mut err1, mut err2) = (0usize, 0usize, 0usize);
    let mut first_disagreement = None;
    let mut lemma2_witness = None;
    let mut pinsker_witness = None;
    let mut lemma2_slack = Vec::with_capacity(n);
    let mut pinsker_slack = Vec::with_capacity(n);

    for (i, ((a, b), &y)) in p1.rows().zip(p2.rows()).zip(labels).enumerate() {
        let (ya, yb) = (argmax(a), argmax(b));
        err1 += (ya != y) as usize;
        err2 += (yb != y) as usize;

        let slack = l1_distance(a, b) - row_confidence(a).min(row_confidence(b));
        lemma2_slack.push(slack);
        if ya != yb {
            disagree += 1;
            first_disagreement.get_or_insert(i);
            if (slack <= 0.0 || slack.is_nan()) && lemma2_witness.is_none() {
                lemma2_witness = Some(i);
            }
        }

        let d = distances(a, b);
        let ps = (2.0 * d.kl).sqrt() - d.l1;
        pinsker_slack.push(ps);
        if ps < -PINSKER_TOL && pinsker_witness.is_none() {
            pinsker_witness = Some(i);
        }
    }

    let lemma1_ok = disagree <= err1 + err2;
    let denom = n.max(1) as f64;
    Ok(BoundAudit {
        lemma1: Check { ok: lemma1_ok, witness: if lemma1_ok { None } else { first_disagreement } },
        lemma2: Check::from_witness(lemma2_witness),
        pinsker: Check::from_witness(pinsker_witness),
        lemma1_slack: (err1 + err2) as f64 / denom - disagree as f64 / denom,
        lemma2_slack,
        pinsker_slack,
    })
}

fn binary_entropy(p: f64) -> f64 {
    let q = 1.0 - p;
    -(p * p.ln() + q * q.ln())
}

fn binary_skl_to_uniform(p: f64) -> f64 {
    (p - 0.5) * (2.0 * p).ln() + (0.5 - p) * (2.0 * (1.0 - p)).ln()
}

/// Which monotonicity direction a counterexample breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem1Direction {
    Entropy,
    Skl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Check {
    pub ok: bool,
    pub witness: Option<(usize, Theorem1Direction)>,
}

/// Confidences closer than this are treated as equal.
const GAMMA_TOL: f64 = 1e-12;

/// For each binary pair `(p, p′)` checks that `H(p) ≤ H(p′)` and
/// `SKL(p, Unif) ≥ SKL(p′, Unif)` each imply `γ_p ≥ γ_p′`.
pub fn check_theorem1(pairs: &[(f64, f64)]) -> Theorem1Check {
    let gamma = |p: f64| (2.0 * p - 1.0).abs();
    for (i, &(p, q)) in pairs.iter().enumerate() {
        let (gp, gq) = (gamma(p), gamma(q));
        let weaker = gp < gq - GAMMA_TOL;
        if binary_entropy(p) <= binary_entropy(q) && weaker {
            return Theorem1Check { ok: false, witness: Some((i, Theorem1Direction::Entropy)) };
        }
        if binary_skl_to_uniform(p) >= binary_skl_to_uniform(q) && weaker {
            return Theorem1Check { ok: false, witness: Some((i, Theorem1Direction::Skl)) };
        }
    }
    Theorem1Check { ok: true, witness: None }
}
