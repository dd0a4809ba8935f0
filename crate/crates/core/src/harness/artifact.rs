use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SeedBundle;
use crate::error::{Error, Result};
use crate::metrics::{read_prob_csv, write_prob_csv, ProbMatrix};

/// Above this many eval rows the probabilities go to a sidecar CSV.
pub const EMBED_ROW_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleInfo {
    pub teacher_bundles: Vec<SeedBundle>,
    pub teacher_accuracy: Vec<f64>,
    pub ensemble_accuracy: f64,
}

/// Outcome of one training run. For two-model objectives this describes
/// model 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub config_digest: String,
    pub run_index: usize,
    pub method: String,
    pub bundle: SeedBundle,
    pub eval_probs: ProbMatrix,
    pub eval_labels: Vec<usize>,
    /// Digest of the eval features and labels the probabilities refer to.
    pub eval_digest: String,
    pub probs_digest: String,
    pub accuracy: f64,
    pub mean_entropy: f64,
    pub mean_confidence: f64,
    pub wall_clock_secs: f64,
    pub steps: usize,
    pub init_params_digest: String,
    pub final_params_digest: String,
    pub ensemble: Option<EnsembleInfo>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredArtifact {
    config_digest: String,
    run_index: usize,
    method: String,
    bundle: SeedBundle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eval_probs: Option<ProbMatrix>,
    /// Sidecar file name, relative to the artifact.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eval_probs_csv: Option<String>,
    eval_labels: Vec<usize>,
    eval_digest: String,
    probs_digest: String,
    accuracy: f64,
    mean_entropy: f64,
    mean_confidence: f64,
    wall_clock_secs: f64,
    steps: usize,
    init_params_digest: String,
    final_params_digest: String,
    #[serde(default)]
    ensemble: Option<EnsembleInfo>,
}

/// Record left behind by a run that diverged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub config_digest: String,
    pub run_index: usize,
    pub bundle: SeedBundle,
    pub step: Option<usize>,
    pub error: String,
}

pub fn artifact_file_name(config_digest: &str, run_index: usize) -> String {
    format!("run_{config_digest}_{run_index}.json")
}

pub fn failed_file_name(config_digest: &str, run_index: usize) -> String {
    format!("run_{config_digest}_{run_index}.failed.json")
}

fn sidecar_name(config_digest: &str, run_index: usize) -> String {
    format!("run_{config_digest}_{run_index}.probs.csv")
}

/// Writes `bytes` to a temporary file in the target directory and renames
/// it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

impl RunArtifact {
    /// Persists into `dir`, returning the JSON path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let (eval_probs, eval_probs_csv) = if self.eval_probs.n() > EMBED_ROW_LIMIT {
            let name = sidecar_name(&self.config_digest, self.run_index);
            let side = dir.join(&name);
            let tmp = dir.join(format!("{name}.tmp"));
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            write_prob_csv(&tmp, &self.eval_probs, &self.eval_labels)?;
            fs::rename(&tmp, &side).map_err(|e| Error::io(&side, e))?;
            (None, Some(name))
        } else {
            (Some(self.eval_probs.clone()), None)
        };
        let stored = StoredArtifact {
            config_digest: self.config_digest.clone(),
            run_index: self.run_index,
            method: self.method.clone(),
            bundle: self.bundle,
            eval_probs,
            eval_probs_csv,
            eval_labels: self.eval_labels.clone(),
            eval_digest: self.eval_digest.clone(),
            probs_digest: self.probs_digest.clone(),
            accuracy: self.accuracy,
            mean_entropy: self.mean_entropy,
            mean_confidence: self.mean_confidence,
            wall_clock_secs: self.wall_clock_secs,
            steps: self.steps,
            init_params_digest: self.init_params_digest.clone(),
            final_params_digest: self.final_params_digest.clone(),
            ensemble: self.ensemble.clone(),
        };
        let path = dir.join(artifact_file_name(&self.config_digest, self.run_index));
        write_json_atomic(&path, &stored)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: StoredArtifact = serde_json::from_str(&text)
            .map_err(|e| Error::Schema { path: path.to_path_buf(), message: e.to_string() })?;
        let eval_probs = match (s.eval_probs, s.eval_probs_csv) {
            (Some(p), _) => p,
            (None, Some(name)) => {
                let side = path.parent().unwrap_or(Path::new(".")).join(name);
                read_prob_csv(&side)?.0
            }
            (None, None) => {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    message: "artifact has neither eval_probs nor eval_probs_csv".into(),
                })
            }
        };
        if eval_probs.n() != s.eval_labels.len() {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: format!("{} probability rows but {} labels", eval_probs.n(), s.eval_labels.len()),
            });
        }
        Ok(Self {
            config_digest: s.config_digest,
            run_index: s.run_index,
            method: s.method,
            bundle: s.bundle,
            eval_probs,
            eval_labels: s.eval_labels,
            eval_digest: s.eval_digest,
            probs_digest: s.probs_digest,
            accuracy: s.accuracy,
            mean_entropy: s.mean_entropy,
            mean_confidence: s.mean_confidence,
            wall_clock_secs: s.wall_clock_secs,
            steps: s.steps,
            init_params_digest: s.init_params_digest,
            final_params_digest: s.final_params_digest,
            ensemble: s.ensemble,
        })
    }
}

/// Loads every `run_<digest>_<i>.json` in `dir` (ordered by run index) and
/// counts the failed-run records next to them.
pub fn load_artifacts(dir: &Path, config_digest: &str) -> Result<(Vec<RunArtifact>, usize)> {
    let prefix = format!("run_{config_digest}_");
    let mut found = Vec::new();
    let mut failed = 0;
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(rest) = name.strip_prefix(&prefix) else { continue };
        if rest.ends_with(".failed.json") {
            failed += 1;
        } else if let Some(idx) = rest.strip_suffix(".json").and_then(|i| i.parse::<usize>().ok()) {
            found.push((idx, entry.path()));
        }
    }
    found.sort();
    let arts = found.iter().map(|(_, p)| RunArtifact::load(p)).collect::<Result<Vec<_>>>()?;
    Ok((arts, failed))
}
