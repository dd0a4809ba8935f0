//! Datasets, the seeded randomness channels used during training, and CSV
//! ingestion.

pub mod rng;

use std::path::Path;

use serde::{Deserialize, Serialize};

use self::rng::{channel, CounterRng};
use crate::digest::fnv1a;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Every fifth row (index ≡ 4 mod 5) belongs to the eval split.
const EVAL_STRIDE: usize = 5;

/// Radius of the sphere on which blob centers are placed.
const BLOB_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

fn split_of(i: usize) -> Split {
    if i % EVAL_STRIDE == EVAL_STRIDE - 1 {
        Split::Eval
    } else {
        Split::Train
    }
}

/// Seeds of the three randomness channels of one training run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedBundle {
    pub init_seed: u64,
    pub order_seed: u64,
    pub augment_seed: u64,
}

impl SeedBundle {
    pub fn new(init_seed: u64, order_seed: u64, augment_seed: u64) -> Self {
        Self { init_seed, order_seed, augment_seed }
    }

    /// The same seed on every channel.
    pub fn uniform(seed: u64) -> Self {
        Self::new(seed, seed, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    k: usize,
    split: Vec<Split>,
}

impl Dataset {
    /// Rows are split 80/20 by index stride.
    pub fn new(features: Matrix, labels: Vec<usize>, k: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Usage(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if k < 2 {
            return Err(Error::Usage(format!("need at least 2 classes, got {k}")));
        }
        if let Some(y) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::Usage(format!("label {y} out of range for {k} classes")));
        }
        if !features.is_finite() {
            return Err(Error::Usage("features contain NaN or infinite values".into()));
        }
        let split = (0..labels.len()).map(split_of).collect();
        Ok(Self { features, labels, k, split })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == which).collect()
    }

    fn part(&self, which: Split) -> (Matrix, Vec<usize>) {
        let idx = self.indices(which);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        (self.features.select_rows(&idx), labels)
    }

    pub fn train(&self) -> (Matrix, Vec<usize>) {
        self.part(Split::Train)
    }

    pub fn eval(&self) -> (Matrix, Vec<usize>) {
        self.part(Split::Eval)
    }

    /// FNV-1a over `n, d, k`, feature bits (little-endian) and labels.
    pub fn digest(&self) -> u64 {
        let mut bytes = Vec::with_capacity(24 + 8 * (self.features.data().len() + self.len()));
        for v in [self.len(), self.dim(), self.k] {
            bytes.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for v in self.features.data() {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        for &y in &self.labels {
            bytes.extend_from_slice(&(y as u64).to_le_bytes());
        }
        fnv1a(&bytes)
    }

    /// Writes `label,f0,...,f{D-1}` with round-trip float formatting.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| Error::Parse { path: path.to_path_buf(), line: 0, message: e.to_string() };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        let mut header = vec!["label".to_string()];
        header.extend((0..self.dim()).map(|j| format!("f{j}")));
        w.write_record(&header).map_err(err)?;
        for i in 0..self.len() {
            let mut rec = vec![self.labels[i].to_string()];
            rec.extend(self.features.row(i).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// `k` isotropic Gaussian clusters with centers on a sphere of radius 3.
/// Row `i` has class `i mod k`.
pub fn gen_blobs(n_per_class: usize, k: usize, d: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if k < 2 || d < 1 || n_per_class < 1 {
        return Err(Error::Usage(format!(
            "blobs need k ≥ 2, d ≥ 1 and n_per_class ≥ 1 (got k={k}, d={d}, n={n_per_class})"
        )));
    }
    if !(spread.is_finite() && spread > 0.0) {
        return Err(Error::Usage(format!("blob spread must be positive, got {spread}")));
    }
    let mut centers = CounterRng::keyed(&[channel::BLOBS, seed, 0]);
    let mut means = Vec::with_capacity(k * d);
    for _ in 0..k {
        let dir: Vec<f64> = (0..d).map(|_| centers.gaussian()).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        means.extend(dir.iter().map(|v| BLOB_RADIUS * v / norm));
    }
    let n = n_per_class * k;
    let mut noise = CounterRng::keyed(&[channel::BLOBS, seed, 1]);
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % k;
        labels.push(y);
        for j in 0..d {
            features.push(means[y * d + j] + spread * noise.gaussian());
        }
    }
    Dataset::new(Matrix::new(n, d, features)?, labels, k)
}

/// Reads `label,f0,...,f{D-1}`; the class count is `max label + 1` (at
/// least 2).
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Parse { path: path.to_path_buf(), line: 0, message: e.to_string() })?;
    let header = r
        .headers()
        .map_err(|e| Error::Parse { path: path.to_path_buf(), line: 1, message: e.to_string() })?
        .clone();
    let d = header.len().saturating_sub(1);
    let header_ok = header.get(0) == Some("label")
        && d >= 1
        && (0..d).all(|j| header.get(j + 1) == Some(format!("f{j}").as_str()));
    if !header_ok {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: "expected header label,f0,...,f{D-1}".into(),
        });
    }
    let mut labels = Vec::new();
    let mut features = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse { path: path.to_path_buf(), line, message: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != d + 1 {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: format!("line {line}: expected {} fields, found {}", d + 1, rec.len()),
            });
        }
        let parse_err = |message: String| Error::Parse { path: path.to_path_buf(), line, message };
        let y: usize = rec[0].trim().parse().map_err(|_| parse_err(format!("bad label {:?}", &rec[0])))?;
        labels.push(y);
        for j in 0..d {
            let v: f64 = rec[j + 1]
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad value {:?} in column f{j}", &rec[j + 1])))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value in column f{j}")));
            }
            features.push(v);
        }
    }
    let k = labels.iter().max().map_or(2, |&m| (m + 1).max(2));
    let n = labels.len();
    Dataset::new(Matrix::new(n, d, features)?, labels, k)
}

/// Permutation of `0..n` for one epoch, computable without earlier epochs.
pub fn epoch_order(order_seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = CounterRng::keyed(&[channel::ORDER, order_seed, epoch]);
    for i in (1..n).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Adds `N(0, σ²)` noise keyed by `(augment_seed, epoch, batch_index)`.
pub fn augment(batch: &Matrix, augment_seed: u64, epoch: u64, batch_index: u64, sigma: f64) -> Matrix {
    if sigma == 0.0 {
        return batch.clone();
    }
    let mut rng = CounterRng::keyed(&[channel::AUGMENT, augment_seed, epoch, batch_index]);
    let mut out = batch.clone();
    for v in out.data_mut() {
        *v += sigma * rng.gaussian();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_deterministic_and_split() {
        let a = gen_blobs(20, 3, 2, 1.0, 7).unwrap();
        let b = gen_blobs(20, 3, 2, 1.0, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), gen_blobs(20, 3, 2, 1.0, 8).unwrap().digest());
        let (xe, ye) = a.eval();
        assert_eq!(xe.rows(), 12);
        assert_eq!(ye.len(), 12);
        assert_eq!(a.train().1.len(), 48);
        // Stride 5 is coprime with 3, so every class reaches the eval split.
        assert!((0..3).all(|c| ye.contains(&c)));
    }

    #[test]
    fn blobs_reject_bad_sizes() {
        assert!(gen_blobs(10, 1, 2, 1.0, 0).is_err());
        assert!(gen_blobs(10, 3, 0, 1.0, 0).is_err());
        assert!(gen_blobs(10, 3, 2, 0.0, 0).is_err());
    }

    #[test]
    fn epoch_order_basics() {
        assert_eq!(epoch_order(3, 0, 1), vec![0]);
        let p = epoch_order(3, 5, 50);
        assert_eq!(p, epoch_order(3, 5, 50));
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(p, epoch_order(3, 6, 50));
    }

    #[test]
    fn zero_sigma_augment_is_identity() {
        let m = Matrix::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(augment(&m, 1, 2, 3, 0.0), m);
        assert_eq!(augment(&m, 1, 2, 3, 0.5), augment(&m, 1, 2, 3, 0.5));
        assert_ne!(augment(&m, 1, 2, 3, 0.5), augment(&m, 1, 2, 4, 0.5));
    }
}
