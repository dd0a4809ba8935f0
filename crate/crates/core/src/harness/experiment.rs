use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifact::{load_artifacts, write_atomic, write_json_atomic};
use super::config::{AblationFlags, ExperimentConfig};
use super::summary::{render_table, summarize_with, ExperimentSummary};
use super::train::{run_prepared, Prepared};
use crate::error::{Error, Result};

pub fn summary_file_name(config_digest: &str) -> String {
    format!("summary_{config_digest}.json")
}

fn run_all(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    if config.n_runs < 2 {
        return Err(Error::Config(format!("n_runs must be ≥ 2 to measure churn, got {}", config.n_runs)));
    }
    let prep = Prepared::load(config)?;
    let run = |i: usize| run_prepared(config, &prep, config.bundle(i), i, None);
    let results: Vec<_> = match config.jobs {
        Some(1) => (0..config.n_runs).map(run).collect(),
        jobs => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()
                .map_err(|e| Error::Experiment(format!("thread pool: {e}")))?;
            pool.install(|| (0..config.n_runs).into_par_iter().map(run).collect())
        }
    };
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(a) => ok.push(a),
            Err(e) => failures.push(format!("run {i}: {e}")),
        }
    }
    if !failures.is_empty() {
        log::warn!("{} of {} runs failed and are excluded: {}", failures.len(), config.n_runs, failures.join("; "));
    }
    if ok.is_empty() {
        return Err(Error::Experiment(format!("all {} runs failed: {}", config.n_runs, failures.join("; "))));
    }
    if ok.len() < 2 {
        return Err(Error::Experiment(format!(
            "only {} of {} runs succeeded; churn needs two",
            ok.len(),
            config.n_runs
        )));
    }
    summarize_with(&ok, config.method.train_cost(), failures.len())
}

/// Trains `n_runs` runs on derived seed bundles and summarizes all pairs.
/// With `out_dir` set, the summary is written as JSON and as a text table.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let summary = run_all(config)?;
    if let Some(dir) = &config.out_dir {
        save_summary(dir, &summary)?;
    }
    Ok(summary)
}

pub fn save_summary(dir: &Path, summary: &ExperimentSummary) -> Result<()> {
    write_json_atomic(&dir.join(summary_file_name(&summary.config_digest)), summary)?;
    let text = render_table(std::slice::from_ref(summary));
    write_atomic(&dir.join(format!("summary_{}.txt", summary.config_digest)), text.as_bytes())
}

/// Rebuilds a summary from the artifacts persisted for `config`.
pub fn summarize_dir(dir: &Path, config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let (arts, failed) = load_artifacts(dir, &config.digest())?;
    summarize_with(&arts, config.method.train_cost(), failed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub fix_init: bool,
    pub fix_order: bool,
    pub summary: ExperimentSummary,
}

/// Cell flags in table order: nothing fixed, init fixed, order fixed, both.
/// Augmentation follows the order flag.
pub fn ablation_cells() -> [AblationFlags; 4] {
    let cell = |fix_init, fix_order| AblationFlags { fix_init, fix_order, fix_augment: fix_order };
    [cell(false, false), cell(true, false), cell(false, true), cell(true, true)]
}

pub fn ablation_grid(config: &ExperimentConfig) -> Result<Vec<AblationCell>> {
    ablation_cells()
        .into_iter()
        .map(|flags| {
            let cfg = ExperimentConfig { ablation: flags, ..config.clone() };
            Ok(AblationCell { fix_init: flags.fix_init, fix_order: flags.fix_order, summary: run_experiment(&cfg)? })
        })
        .collect()
}

/// Churn per ablation cell, one line each.
pub fn render_ablation(cells: &[AblationCell]) -> String {
    let yn = |b: bool| if b { "yes" } else { "no" };
    let mut out = format!("{:<10}  {:<10}  {:>12}  {:>12}\n", "FixInit", "FixOrder", "Churn%±std", "Accuracy±std");
    for c in cells {
        let s = &c.summary;
        out.push_str(&format!(
            "{:<10}  {:<10}  {:>12}  {:>12}\n",
            yn(c.fix_init),
            yn(c.fix_order),
            format!("{:.2}±{:.2}", 100.0 * s.churn.mean, 100.0 * s.churn.std),
            format!("{:.2}±{:.2}", 100.0 * s.accuracy.mean, 100.0 * s.accuracy.std),
        ));
    }
    out
}
