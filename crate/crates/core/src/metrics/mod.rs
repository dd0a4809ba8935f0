//! Measurements over prediction matrices: churn, surrogate churn,
//! confidence, slice churn, distances, calibration and bound audits.
//!
//! Logarithms are natural. Any log of a probability is taken after flooring
//! at [`crate::PROB_EPS`] and renormalizing the row.

pub mod bounds;
pub mod calibration;
pub mod churn;
pub mod distance;
pub mod prob;
pub mod report;

pub use bounds::{audit_bounds, check_theorem1, BoundAudit, Check, Theorem1Check, Theorem1Direction};
pub use calibration::{ece, DEFAULT_ECE_BINS};
pub use churn::{accuracy, argmax, churn, confidence, predict_labels, row_confidence, schurn, slice_churn, SliceChurn};
pub use distance::{clamp_row, distances, entropy, l1_distance, skl_to_uniform, Distances};
pub use prob::{
    read_labels_csv, read_prob_csv, read_prob_jsonl, write_prob_csv, write_prob_jsonl, ProbMatrix,
};
pub use report::{churn_report, mean_confidence, mean_entropy, ChurnReport, SchurnPoint};
