use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::artifact::RunArtifact;
use crate::data::SeedBundle;
use crate::error::{Error, Result};
use crate::metrics::{churn_report, ece, ChurnReport, DEFAULT_ECE_BINS};

/// Sample mean and standard deviation (n−1 denominator; 0 for one value).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std, n }
    }

    /// True if `[mean−std, mean+std]` intervals do not touch.
    pub fn separated_from(&self, other: &MeanStd) -> bool {
        self.mean + self.std < other.mean - other.std || other.mean + other.std < self.mean - self.std
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub a: usize,
    pub b: usize,
    pub report: ChurnReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub run_index: usize,
    pub bundle: SeedBundle,
    pub accuracy: f64,
    pub ece: f64,
    pub mean_confidence: f64,
    pub mean_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config_digest: String,
    pub method: String,
    /// Training cost relative to one baseline run.
    pub train_cost: usize,
    pub n_runs: usize,
    pub n_failed: usize,
    pub eval_digest: String,
    pub churn: MeanStd,
    /// SChurn at α = 1.
    pub schurn: MeanStd,
    pub churn_correct: MeanStd,
    pub churn_incorrect: MeanStd,
    pub accuracy: MeanStd,
    pub ece: MeanStd,
    pub confidence: MeanStd,
    pub entropy: MeanStd,
    pub runs: Vec<RunStats>,
    pub pairs: Vec<PairReport>,
}

/// Pairwise churn over all unordered pairs of `artifacts`.
///
/// Slice churn averages skip pairs whose slice is empty.
pub fn summarize_pairwise(artifacts: &[RunArtifact]) -> Result<ExperimentSummary> {
    summarize_with(artifacts, 1, 0)
}

pub(crate) fn summarize_with(artifacts: &[RunArtifact], train_cost: usize, n_failed: usize) -> Result<ExperimentSummary> {
    if artifacts.len() < 2 {
        return Err(Error::Usage(format!("churn needs at least 2 runs, got {}", artifacts.len())));
    }
    let digests: BTreeSet<&str> = artifacts.iter().map(|a| a.eval_digest.as_str()).collect();
    if digests.len() > 1 {
        return Err(Error::Usage(format!(
            "artifacts were evaluated on different eval sets: {}",
            digests.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let first = &artifacts[0];

    let mut runs = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        runs.push(RunStats {
            run_index: a.run_index,
            bundle: a.bundle,
            accuracy: a.accuracy,
            ece: ece(&a.eval_probs, &a.eval_labels, DEFAULT_ECE_BINS)?,
            mean_confidence: a.mean_confidence,
            mean_entropy: a.mean_entropy,
        });
    }

    let mut pairs = Vec::new();
    for i in 0..artifacts.len() {
        for j in i + 1..artifacts.len() {
            let (a, b) = (&artifacts[i], &artifacts[j]);
            let report = churn_report(&a.eval_probs, &b.eval_probs, &a.eval_labels, &[1.0])?;
            pairs.push(PairReport { a: a.run_index, b: b.run_index, report });
        }
    }

    let collect = |f: &dyn Fn(&PairReport) -> Option<f64>| MeanStd::of(&pairs.iter().filter_map(f).collect::<Vec<_>>());
    let per_run = |f: &dyn Fn(&RunStats) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
    Ok(ExperimentSummary {
        config_digest: first.config_digest.clone(),
        method: first.method.clone(),
        train_cost,
        n_runs: artifacts.len(),
        n_failed,
        eval_digest: first.eval_digest.clone(),
        churn: collect(&|p| Some(p.report.churn)),
        schurn: collect(&|p| p.report.schurn_at(1.0)),
        churn_correct: collect(&|p| (!p.report.correct_slice_empty).then_some(p.report.churn_correct)),
        churn_incorrect: collect(&|p| (!p.report.incorrect_slice_empty).then_some(p.report.churn_incorrect)),
        accuracy: per_run(&|r| r.accuracy),
        ece: per_run(&|r| r.ece),
        confidence: per_run(&|r| r.mean_confidence),
        entropy: per_run(&|r| r.mean_entropy),
        runs,
        pairs,
    })
}

fn pct(m: &MeanStd) -> String {
    format!("{:.2}±{:.2}", 100.0 * m.mean, 100.0 * m.std)
}

pub const TABLE_HEADER: [&str; 8] =
    ["Method", "TrainCost", "Accuracy±std", "Churn%±std", "SChurn%±std", "ChurnCorrect", "ChurnIncorrect", "ECE"];

/// One formatted table row per summary; the lowest mean churn gets a `*`.
fn table_rows(summaries: &[ExperimentSummary]) -> Vec<[String; 8]> {
    let best = summaries.iter().map(|s| s.churn.mean).fold(f64::INFINITY, f64::min);
    summaries
        .iter()
        .map(|s| {
            let star = if summaries.len() > 1 && s.churn.mean == best { "*" } else { "" };
            [
                s.method.clone(),
                format!("{}x", s.train_cost),
                pct(&s.accuracy),
                format!("{}{star}", pct(&s.churn)),
                pct(&s.schurn),
                format!("{:.2}", 100.0 * s.churn_correct.mean),
                format!("{:.2}", 100.0 * s.churn_incorrect.mean),
                format!("{:.4}", s.ece.mean),
            ]
        })
        .collect()
}

/// Aligned text table with the columns of [`TABLE_HEADER`].
pub fn render_table(summaries: &[ExperimentSummary]) -> String {
    let rows = table_rows(summaries);
    let mut widths: Vec<usize> = TABLE_HEADER.iter().map(|h| h.chars().count()).collect();
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| {
                let pad = w - c.chars().count();
                if i == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(&mut TABLE_HEADER.iter().copied());
    out.push('\n');
    for r in &rows {
        out.push_str(&line(&mut r.iter().map(String::as_str)));
        out.push('\n');
    }
    out
}

pub const CSV_HEADER: [&str; 16] = [
    "method",
    "train_cost",
    "accuracy_mean",
    "accuracy_std",
    "churn_mean",
    "churn_std",
    "schurn_mean",
    "schurn_std",
    "churn_correct_mean",
    "churn_correct_std",
    "churn_incorrect_mean",
    "churn_incorrect_std",
    "ece_mean",
    "ece_std",
    "n_runs",
    "best_churn",
];

/// Report rows as CSV with full-precision fractions (not percentages).
pub fn report_csv(summaries: &[ExperimentSummary]) -> Result<String> {
    let best = summaries.iter().map(|s| s.churn.mean).fold(f64::INFINITY, f64::min);
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Experiment(format!("writing report csv: {e}"));
    w.write_record(CSV_HEADER).map_err(err)?;
    for s in summaries {
        let f = |v: f64| format!("{v:?}");
        w.write_record([
            s.method.clone(),
            s.train_cost.to_string(),
            f(s.accuracy.mean),
            f(s.accuracy.std),
            f(s.churn.mean),
            f(s.churn.std),
            f(s.schurn.mean),
            f(s.schurn.std),
            f(s.churn_correct.mean),
            f(s.churn_correct.std),
            f(s.churn_incorrect.mean),
            f(s.churn_incorrect.std),
            f(s.ece.mean),
            f(s.ece.std),
            s.n_runs.to_string(),
            (s.churn.mean == best).to_string(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Experiment(format!("writing report csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
