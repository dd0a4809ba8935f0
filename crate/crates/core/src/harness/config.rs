use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{gen_blobs, load_csv, Dataset, SeedBundle};
use crate::digest::{fnv1a, hex};
use crate::error::{Error, Result};
use crate::losses::MethodSpec;
use crate::tensor::{LrSchedule, DEFAULT_MOMENTUM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Blobs,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub source: DataSource,
    pub n_per_class: usize,
    pub k: usize,
    pub d: usize,
    pub spread: f64,
    pub seed: u64,
    /// CSV file when `source` is `csv`.
    pub path: Option<PathBuf>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self { source: DataSource::Blobs, n_per_class: 200, k: 3, d: 2, spread: 1.0, seed: 0, path: None }
    }
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset> {
        match self.source {
            DataSource::Blobs => gen_blobs(self.n_per_class, self.k, self.d, self.spread, self.seed),
            DataSource::Csv => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("dataset.path is required when dataset.source is csv".into()))?;
                load_csv(path)
            }
        }
    }
}

/// Which seed channels stay at their base value across runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    pub fix_init: bool,
    pub fix_order: bool,
    pub fix_augment: bool,
}

impl AblationFlags {
    pub fn all_fixed() -> Self {
        Self { fix_init: true, fix_order: true, fix_augment: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden: Vec<usize>,
    pub schedule: LrSchedule,
    pub total_steps: usize,
    pub batch_size: usize,
    pub momentum: f64,
    /// Standard deviation of the Gaussian feature noise.
    pub augment_sigma: f64,
    pub method: MethodSpec,
    pub n_runs: usize,
    pub seeds: SeedBundle,
    pub ablation: AblationFlags,
    /// Where artifacts go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    /// Worker threads for concurrent runs; defaults to the available cores.
    pub jobs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            hidden: vec![32, 32],
            schedule: LrSchedule::default(),
            total_steps: 2000,
            batch_size: 32,
            momentum: DEFAULT_MOMENTUM,
            augment_sigma: 0.05,
            method: MethodSpec::default(),
            n_runs: 10,
            seeds: SeedBundle::uniform(0),
            ablation: AblationFlags::default(),
            out_dir: None,
            jobs: None,
        }
    }
}

impl ExperimentConfig {
    /// Checks everything that does not need the data itself.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.schedule.validate()?;
        if self.total_steps < self.schedule.warmup_steps {
            return bad(format!(
                "total_steps {} is shorter than warmup_steps {}",
                self.total_steps, self.schedule.warmup_steps
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1".into());
        }
        if self.hidden.contains(&0) {
            return bad(format!("hidden widths must be positive: {:?}", self.hidden));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.augment_sigma.is_finite() && self.augment_sigma >= 0.0) {
            return bad(format!("augment_sigma must be ≥ 0, got {}", self.augment_sigma));
        }
        let k = match self.dataset.source {
            DataSource::Blobs => self.dataset.k,
            // Checked once the file is read.
            DataSource::Csv => usize::MAX,
        };
        self.method.validate(k)
    }

    pub fn layer_sizes(&self, data: &Dataset) -> Vec<usize> {
        let mut sizes = vec![data.dim()];
        sizes.extend(&self.hidden);
        sizes.push(data.k());
        sizes
    }

    /// Stable hash of everything that affects results (not `out_dir` or
    /// `jobs`).
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        c.jobs = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex(fnv1a(&bytes))
    }

    /// Seeds for run `i`: base + i on every channel not held fixed.
    pub fn bundle(&self, i: usize) -> SeedBundle {
        let b = self.seeds;
        let i = i as u64;
        let step = |base: u64, fixed: bool| if fixed { base } else { base.wrapping_add(i) };
        SeedBundle {
            init_seed: step(b.init_seed, self.ablation.fix_init),
            order_seed: step(b.order_seed, self.ablation.fix_order),
            augment_seed: step(b.augment_seed, self.ablation.fix_augment),
        }
    }
}
