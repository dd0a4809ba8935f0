//! Training runs, multi-seed experiments, the seed-channel ablation grid,
//! ensemble distillation, pairwise churn summaries and their persistence.

mod artifact;
mod config;
mod experiment;
mod summary;
mod train;

pub use artifact::{
    artifact_file_name, failed_file_name, load_artifacts, write_atomic, write_json_atomic, EnsembleInfo,
    FailedRun, RunArtifact, EMBED_ROW_LIMIT,
};
pub use config::{AblationFlags, DataSource, DatasetSpec, ExperimentConfig};
pub use experiment::{
    ablation_cells, ablation_grid, render_ablation, run_experiment, save_summary, summarize_dir,
    summary_file_name, AblationCell,
};
pub use summary::{
    render_table, report_csv, summarize_pairwise, ExperimentSummary, MeanStd, PairReport, RunStats,
    CSV_HEADER, TABLE_HEADER,
};
pub use train::{
    derive_seed, ensemble_distill_run, ensemble_distill_with_teachers, initial_params, run_prepared,
    run_training, run_training_indexed, split_digest, teacher_bundle, Prepared,
};
