//! Training objectives as loss builders over a [`Tape`].
//!
//! Every builder takes probability nodes (rows of a softmax) and returns a
//! scalar node. Any log of a probability goes through [`clamped`]: entries
//! are floored at [`PROB_EPS`] and the row is renormalized.

mod landscape;
mod method;
mod ramp;

pub use landscape::{
    default_score_grid, landscape_scan, landscape_scan_with_scores, write_landscape_csv, CurveKind,
    CurveSample,
};
pub use method::{MethodKind, MethodSpec, RampStyleSpec, RegKind};
pub use ramp::{coefficient_at, RampSchedule, RampStyle};

use crate::error::{Error, Result};
use crate::metrics::ProbMatrix;
use crate::tensor::{Matrix, NodeId, Tape};
use crate::PROB_EPS;

/// Floors every entry at [`PROB_EPS`] and renormalizes each row.
pub fn clamped(tape: &mut Tape, probs: NodeId) -> NodeId {
    let c = tape.clamp_min(probs, PROB_EPS);
    tape.row_normalize(c)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Usage(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

fn check_coefficient(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::Usage(format!("{name} must be finite and ≥ 0, got {v}")));
    }
    Ok(())
}

/// Mean of `−ln p_y` over the batch.
pub fn ce_loss(tape: &mut Tape, probs: NodeId, labels: &[usize]) -> Result<NodeId> {
    let q = clamped(tape, probs);
    let py = tape.gather(q, labels)?;
    let lp = tape.ln(py);
    let m = tape.mean(lp);
    Ok(tape.scale(m, -1.0))
}

/// Top-`k` indicator per row, chosen from forward values only.
fn top_k_mask(values: &Matrix, k: usize) -> Matrix {
    let mut mask = Matrix::zeros(values.rows(), values.cols());
    let mut order: Vec<usize> = Vec::with_capacity(values.cols());
    for i in 0..values.rows() {
        let row = values.row(i);
        order.clear();
        order.extend(0..row.len());
        // Stable sort: ties keep the lower index.
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
        for &j in &order[..k] {
            mask.row_mut(i)[j] = 1.0;
        }
    }
    mask
}

fn check_top_k(tape: &Tape, probs: NodeId, top_k: Option<usize>) -> Result<()> {
    let k = tape.value(probs).cols();
    match top_k {
        Some(t) if t > k => Err(Error::Usage(format!("top_k {t} exceeds the {k} classes"))),
        Some(t) if t < 2 => Err(Error::Usage(format!("top_k must be at least 2, got {t}"))),
        _ => Ok(()),
    }
}

/// Clamped rows restricted to the top-k entries and renormalized, plus the
/// mask (`None` means every class participates).
fn restricted(tape: &mut Tape, probs: NodeId, top_k: Option<usize>) -> (NodeId, Option<NodeId>) {
    let q = clamped(tape, probs);
    match top_k {
        Some(k) if k < tape.value(q).cols() => {
            let mask = top_k_mask(tape.value(q), k);
            let mask = tape.constant(mask);
            let kept = tape.mul(q, mask).expect("mask shape");
            (tape.row_normalize(kept), Some(mask))
        }
        _ => (q, None),
    }
}

/// `ln r` with masked-out entries mapped to `ln 1 = 0`.
fn masked_ln(tape: &mut Tape, r: NodeId, mask: Option<NodeId>) -> NodeId {
    match mask {
        None => tape.ln(r),
        Some(m) => {
            let (rows, cols) = tape.value(m).shape();
            let off = Matrix::new(rows, cols, tape.value(m).data().iter().map(|v| 1.0 - v).collect())
                .expect("mask shape");
            let off = tape.constant(off);
            let shifted = tape.add(r, off).expect("mask shape");
            tape.ln(shifted)
        }
    }
}

/// Per-row entropy `−Σ q ln q`, shape `[n,1]`.
pub fn entropy_rows(tape: &mut Tape, probs: NodeId, top_k: Option<usize>) -> NodeId {
    let (r, mask) = restricted(tape, probs, top_k);
    let lr = masked_ln(tape, r, mask);
    let t = tape.mul(r, lr).expect("same shape");
    let s = tape.row_sum(t);
    tape.scale(s, -1.0)
}

/// Per-row `SKL(q, Unif) = Σ (q − 1/K) ln(K q)`, shape `[n,1]`. With top-k the
/// uniform reference is over the `k` kept classes.
pub fn skl_to_uniform_rows(tape: &mut Tape, probs: NodeId, top_k: Option<usize>) -> NodeId {
    let (r, mask) = restricted(tape, probs, top_k);
    let (rows, cols) = tape.value(r).shape();
    let k = match mask {
        Some(_) => top_k.expect("mask implies top_k") as f64,
        None => cols as f64,
    };
    let (uniform, log_k) = match mask {
        None => (Matrix::filled(rows, cols, 1.0 / k), Matrix::filled(rows, cols, k.ln())),
        Some(m) => {
            let m = tape.value(m);
            (
                Matrix::new(rows, cols, m.data().iter().map(|v| v / k).collect()).expect("shape"),
                Matrix::new(rows, cols, m.data().iter().map(|v| v * k.ln()).collect()).expect("shape"),
            )
        }
    };
    let uniform = tape.constant(uniform);
    let log_k = tape.constant(log_k);
    let centered = tape.sub(r, uniform).expect("shape");
    let lr = masked_ln(tape, r, mask);
    let log_kr = tape.add(lr, log_k).expect("shape");
    let t = tape.mul(centered, log_kr).expect("shape");
    tape.row_sum(t)
}

/// `(1−α)·CE + α·mean H`, entropy optionally over the top-k classes.
pub fn entropy_regularized_loss(
    tape: &mut Tape,
    probs: NodeId,
    labels: &[usize],
    alpha: f64,
    top_k: Option<usize>,
) -> Result<NodeId> {
    check_alpha(alpha)?;
    check_top_k(tape, probs, top_k)?;
    let ce = ce_loss(tape, probs, labels)?;
    let h = entropy_rows(tape, probs, top_k);
    let h = tape.mean(h);
    let a = tape.scale(ce, 1.0 - alpha);
    let b = tape.scale(h, alpha);
    tape.add(a, b)
}

/// `(1−α)·CE − α·mean SKL(q, Unif)`.
pub fn skl_regularized_loss(
    tape: &mut Tape,
    probs: NodeId,
    labels: &[usize],
    alpha: f64,
    top_k: Option<usize>,
) -> Result<NodeId> {
    check_alpha(alpha)?;
    check_top_k(tape, probs, top_k)?;
    let ce = ce_loss(tape, probs, labels)?;
    let s = skl_to_uniform_rows(tape, probs, top_k);
    let s = tape.mean(s);
    let a = tape.scale(ce, 1.0 - alpha);
    let b = tape.scale(s, -alpha);
    tape.add(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodistillVariant {
    L1,
    Skl,
    /// Each model is pulled toward a frozen copy of the other's predictions.
    CeIndependent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodistillLoss {
    Joint(NodeId),
    /// Losses for model 1 and model 2; neither depends on the other's params.
    Independent(NodeId, NodeId),
}

fn check_pair(tape: &Tape, p1: NodeId, p2: NodeId) -> Result<()> {
    let (a, b) = (tape.value(p1).shape(), tape.value(p2).shape());
    if a != b {
        return Err(Error::Usage(format!("co-distillation batches differ: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// Per-row L1 distance on raw probabilities.
pub fn l1_rows(tape: &mut Tape, p1: NodeId, p2: NodeId) -> Result<NodeId> {
    let d = tape.sub(p1, p2)?;
    let a = tape.abs(d);
    Ok(tape.row_sum(a))
}

/// Per-row symmetric KL `Σ (a − b)(ln a − ln b)` on clamped rows.
pub fn skl_rows(tape: &mut Tape, p1: NodeId, p2: NodeId) -> Result<NodeId> {
    let a = clamped(tape, p1);
    let b = clamped(tape, p2);
    let la = tape.ln(a);
    let lb = tape.ln(b);
    let d = tape.sub(a, b)?;
    let ld = tape.sub(la, lb)?;
    let t = tape.mul(d, ld)?;
    Ok(tape.row_sum(t))
}

/// Mean over rows of `−Σ teacher · ln q`, with the teacher side detached.
pub fn cross_entropy_to(tape: &mut Tape, probs: NodeId, teacher: NodeId) -> Result<NodeId> {
    let t = tape.detach(teacher);
    let q = clamped(tape, probs);
    let lq = tape.ln(q);
    let prod = tape.mul(t, lq)?;
    let rows = tape.row_sum(prod);
    let m = tape.mean(rows);
    Ok(tape.scale(m, -1.0))
}

/// Independent-update losses given explicit (possibly stale) teachers:
/// `teacher1` guides model 1, `teacher2` guides model 2.
pub fn codistill_independent(
    tape: &mut Tape,
    p1: NodeId,
    p2: NodeId,
    teacher1: NodeId,
    teacher2: NodeId,
    labels: &[usize],
    beta_t: f64,
) -> Result<(NodeId, NodeId)> {
    check_coefficient("beta", beta_t)?;
    check_pair(tape, p1, p2)?;
    check_pair(tape, p1, teacher1)?;
    check_pair(tape, p2, teacher2)?;
    let one = |tape: &mut Tape, p: NodeId, t: NodeId| -> Result<NodeId> {
        let ce = ce_loss(tape, p, labels)?;
        let x = cross_entropy_to(tape, p, t)?;
        let x = tape.scale(x, beta_t);
        tape.add(ce, x)
    };
    let l1 = one(tape, p1, teacher1)?;
    let l2 = one(tape, p2, teacher2)?;
    Ok((l1, l2))
}

/// Two-model co-distillation. For [`CodistillVariant::CeIndependent`] each
/// model's teacher is the other's current (detached) prediction; use
/// [`codistill_independent`] to supply stale teachers.
pub fn codistill_loss(
    tape: &mut Tape,
    p1: NodeId,
    p2: NodeId,
    labels: &[usize],
    beta_t: f64,
    variant: CodistillVariant,
) -> Result<CodistillLoss> {
    check_coefficient("beta", beta_t)?;
    check_pair(tape, p1, p2)?;
    if variant == CodistillVariant::CeIndependent {
        let (l1, l2) = codistill_independent(tape, p1, p2, p2, p1, labels, beta_t)?;
        return Ok(CodistillLoss::Independent(l1, l2));
    }
    let ce1 = ce_loss(tape, p1, labels)?;
    let ce2 = ce_loss(tape, p2, labels)?;
    let rows = match variant {
        CodistillVariant::L1 => l1_rows(tape, p1, p2)?,
        _ => skl_rows(tape, p1, p2)?,
    };
    let d = tape.mean(rows);
    let d = tape.scale(d, beta_t);
    let both = tape.add(ce1, ce2)?;
    Ok(CodistillLoss::Joint(tape.add(both, d)?))
}

/// SKL co-distillation plus `α_t` times the summed regularizer of both
/// models (mean entropy, or negated mean SKL to uniform).
pub fn combined_loss(
    tape: &mut Tape,
    p1: NodeId,
    p2: NodeId,
    labels: &[usize],
    alpha_t: f64,
    beta_t: f64,
    reg: RegKind,
) -> Result<NodeId> {
    check_coefficient("alpha", alpha_t)?;
    let CodistillLoss::Joint(base) = codistill_loss(tape, p1, p2, labels, beta_t, CodistillVariant::Skl)? else {
        unreachable!("SKL co-distillation is joint")
    };
    let term = |tape: &mut Tape, p: NodeId| {
        let rows = match reg {
            RegKind::Entropy => entropy_rows(tape, p, None),
            RegKind::Skl => skl_to_uniform_rows(tape, p, None),
        };
        tape.mean(rows)
    };
    let r1 = term(tape, p1);
    let r2 = term(tape, p2);
    let r = tape.add(r1, r2)?;
    let sign = match reg {
        RegKind::Entropy => 1.0,
        RegKind::Skl => -1.0,
    };
    let r = tape.scale(r, sign * alpha_t);
    tape.add(base, r)
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Usage(format!("temperature must be positive, got {t}")));
    }
    Ok(())
}

/// Row-wise `softmax(ln(clamp(p)) / τ)` on plain data.
pub fn soften(probs: &ProbMatrix, temperature: f64) -> Result<ProbMatrix> {
    check_temperature(temperature)?;
    let mut t = Tape::new();
    let p = t.constant(Matrix::new(probs.n(), probs.k(), probs.data().to_vec())?);
    let s = soften_node(&mut t, p, temperature);
    ProbMatrix::new(probs.k(), t.value(s).data().to_vec())
}

fn soften_node(tape: &mut Tape, probs: NodeId, temperature: f64) -> NodeId {
    let q = clamped(tape, probs);
    let logits = tape.ln(q);
    let z = tape.scale(logits, 1.0 / temperature);
    tape.softmax(z)
}

/// Cross-entropy between the temperature-softened teacher and student, mean
/// over the batch. The teacher is fixed data.
pub fn distill_loss(
    tape: &mut Tape,
    student: NodeId,
    teacher: &ProbMatrix,
    temperature: f64,
) -> Result<NodeId> {
    check_temperature(temperature)?;
    let shape = tape.value(student).shape();
    if shape != (teacher.n(), teacher.k()) {
        return Err(Error::Usage(format!(
            "teacher is {}x{}, student batch is {}x{}",
            teacher.n(),
            teacher.k(),
            shape.0,
            shape.1
        )));
    }
    let soft_teacher = soften(teacher, temperature)?;
    let t = tape.constant(Matrix::new(teacher.n(), teacher.k(), soft_teacher.data().to_vec())?);
    let s = soften_node(tape, student, temperature);
    cross_entropy_to(tape, s, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs_node(t: &mut Tape, rows: &[Vec<f64>]) -> NodeId {
        t.param(Matrix::from_rows(rows).unwrap())
    }

    #[test]
    fn ce_examples() {
        let mut t = Tape::new();
        let p = probs_node(&mut t, &[vec![0.5, 0.5], vec![0.25, 0.75]]);
        let l = ce_loss(&mut t, p, &[0, 1]).unwrap();
        let want = (2f64.ln() + (4.0f64 / 3.0).ln()) / 2.0;
        assert!((t.scalar(l) - want).abs() < 1e-12);
        assert!((want - 0.490415).abs() < 1e-6);

        let mut t = Tape::new();
        let p = probs_node(&mut t, &[vec![1.0 / 3.0; 3]]);
        let l = ce_loss(&mut t, p, &[2]).unwrap();
        assert!((t.scalar(l) - 3f64.ln()).abs() < 1e-12);

        let mut t = Tape::new();
        let p = probs_node(&mut t, &[vec![1.0, 0.0, 0.0]]);
        let l = ce_loss(&mut t, p, &[0]).unwrap();
        let want = -(1.0 / (1.0 + 2.0 * PROB_EPS)).ln();
        assert!((t.scalar(l) - want).abs() < 1e-15);
    }

    #[test]
    fn ce_rejects_bad_label() {
        let mut t = Tape::new();
        let p = probs_node(&mut t, &[vec![0.5, 0.5]]);
        assert!(matches!(ce_loss(&mut t, p, &[2]), Err(Error::Usage(_))));
    }

    #[test]
    fn entropy_regularizer_examples() {
        let mut t = Tape::new();
        let p = probs_node(&mut t, &[vec![0.7, 0.2, 0.1]]);
        let l = entropy_regularized_loss(&mut t, p, &[0], 0.3, None).unwrap();
        assert!((t.scalar(l) - 0.490218).abs() < 1e-6, "{}", t.scalar(l));

        let mut t = Tape::new();
        let p = probs_node(&mut t, &[vec![1.0 / 3.0; 3]]);
        let l = entropy_regularized_loss(&mut t, p, &[0], 1.0, None).unwrap();
        assert!((t.scalar(l) - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_alpha_is_exactly_ce() {
        let rows = [vec![0.7, 0.2, 0.1], vec![0.05, 0.15, 0.8]];
        let mut t = Tape::new();
        let p = probs_node(&mut t, &rows);
        let ce = ce_loss(&mut t, p, &[0, 1]).unwrap();
        let e = entropy_regularized_loss(&mut t, p, &[0, 1], 0.0, Some(2)).unwrap();
        let s = skl_regularized_loss(&mut t, p, &[0, 1], 0.0, None).unwrap();
        assert_eq!(t.scalar(ce).to_bits(), t.scalar(e).to_bits());
        assert_eq!(t.scalar(ce).to_bits(), t.scalar(s).to_bits());
    }

    #[test]
    fn top_k_entropy_renormalizes() {
        let mut t = Tape::new();
        let p = probs_node(&mut t, &[vec![0.5, 0.3, 0.2]]);
        let h = entropy_rows(&mut t, p, Some(2));
        let (a, b) = (0.5 / 0.8, 0.3 / 0.8);
        let want = -(a * f64::ln(a) + b * f64::ln(b));
        assert!((t.value(h).data()[0] - want).abs() < 1e-6);
        assert!(matches!(
            entropy_regularized_loss(&mut t, p, &[0], 0.5, Some(4)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn skl_regularizer_examples() {
        let mut t = Tape::new();
        let p = probs_node(&mut t, &[vec![0.75, 0.25]]);
        let l = skl_regularized_loss(&mut t, p, &[0], 1.0, None).unwrap();
        assert!((t.scalar(l) + 0.25 * 3f64.ln()).abs() < 1e-6);

        let mut t = Tape::new();
        let p = probs_node(&mut t, &[vec![0.25; 4]]);
        let l = skl_regularized_loss(&mut t, p, &[0], 1.0, None).unwrap();
        assert!(t.scalar(l).abs() < 1e-15);
    }

    #[test]
    fn codistill_examples() {
        let mut t = Tape::new();
        let a = probs_node(&mut t, &[vec![0.75, 0.25]]);
        let b = probs_node(&mut t, &[vec![0.25, 0.75]]);
        let ce1 = ce_loss(&mut t, a, &[0]).unwrap();
        let ce2 = ce_loss(&mut t, b, &[0]).unwrap();
        let CodistillLoss::Joint(l) = codistill_loss(&mut t, a, b, &[0], 1.0, CodistillVariant::Skl).unwrap() else {
            panic!()
        };
        let d = t.scalar(l) - t.scalar(ce1) - t.scalar(ce2);
        assert!((d - 3f64.ln()).abs() < 1e-6, "{d}");

        let CodistillLoss::Joint(z) = codistill_loss(&mut t, a, b, &[0], 0.0, CodistillVariant::L1).unwrap() else {
            panic!()
        };
        assert_eq!(t.scalar(z), t.scalar(ce1) + t.scalar(ce2));
    }

    #[test]
    fn identical_models_have_no_disagreement() {
        for variant in [CodistillVariant::L1, CodistillVariant::Skl, CodistillVariant::CeIndependent] {
            let mut t = Tape::new();
            let a = probs_node(&mut t, &[vec![0.6, 0.4], vec![0.1, 0.9]]);
            let ce = ce_loss(&mut t, a, &[0, 1]).unwrap();
            match codistill_loss(&mut t, a, a, &[0, 1], 1.0, variant).unwrap() {
                CodistillLoss::Joint(l) => assert!((t.scalar(l) - 2.0 * t.scalar(ce)).abs() < 1e-12),
                // Cross-entropy to itself is the entropy, not zero; the
                // disagreement beyond that is zero.
                CodistillLoss::Independent(l1, _) => {
                    let h = entropy_rows(&mut t, a, None);
                    let h = t.mean(h);
                    assert!((t.scalar(l1) - t.scalar(ce) - t.scalar(h)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn independent_variant_blocks_teacher_gradient() {
        let mut t = Tape::new();
        let a = probs_node(&mut t, &[vec![0.6, 0.4]]);
        let b = probs_node(&mut t, &[vec![0.3, 0.7]]);
        let CodistillLoss::Independent(l1, _) =
            codistill_loss(&mut t, a, b, &[0], 0.5, CodistillVariant::CeIndependent).unwrap()
        else {
            panic!()
        };
        let g = t.backward(l1).unwrap();
        assert!(g.get(b).is_none_or(|m| m.data().iter().all(|&v| v == 0.0)));
        assert!(g.get(a).is_some());
    }

    #[test]
    fn combined_endpoints() {
        let mut t = Tape::new();
        let a = probs_node(&mut t, &[vec![0.6, 0.3, 0.1]]);
        let b = probs_node(&mut t, &[vec![0.2, 0.5, 0.3]]);
        let CodistillLoss::Joint(c) = codistill_loss(&mut t, a, b, &[0], 0.04, CodistillVariant::Skl).unwrap() else {
            panic!()
        };
        let m = combined_loss(&mut t, a, b, &[0], 0.0, 0.04, RegKind::Entropy).unwrap();
        assert_eq!(t.scalar(c).to_bits(), t.scalar(m).to_bits());
    }

    #[test]
    fn distill_examples() {
        // Student at logits [2, 0], τ = 3.
        let z = 2f64.exp() + 1.0;
        let student = vec![2f64.exp() / z, 1.0 / z];
        let sp = ProbMatrix::from_rows(std::slice::from_ref(&student)).unwrap();
        let soft = soften(&sp, 3.0).unwrap();
        let zz = (2.0f64 / 3.0).exp() + 1.0;
        assert!((soft.row(0)[0] - (2.0f64 / 3.0).exp() / zz).abs() < 1e-12);

        // Teacher equal to student at τ = 1: loss is the entropy.
        let mut t = Tape::new();
        let s = probs_node(&mut t, std::slice::from_ref(&student));
        let l = distill_loss(&mut t, s, &sp, 1.0).unwrap();
        let h: f64 = -student.iter().map(|p| p * p.ln()).sum::<f64>();
        assert!((t.scalar(l) - h).abs() < 1e-9);

        // One-hot teacher reduces to CE on its argmax.
        let mut t = Tape::new();
        let s = probs_node(&mut t, &[vec![0.6, 0.4]]);
        let teacher = ProbMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let l = distill_loss(&mut t, s, &teacher, 1.0).unwrap();
        assert!((t.scalar(l) + 0.4f64.ln()).abs() < 1e-6);
        assert!(distill_loss(&mut t, s, &teacher, 0.0).is_err());
    }
}
