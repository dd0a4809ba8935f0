use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest::digest_f64s;
use crate::error::{Error, Result};

/// Tolerance on row sums when validating probability rows.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// `n x k` row-stochastic matrix of predicted class probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProbMatrixRepr", into = "ProbMatrixRepr")]
pub struct ProbMatrix {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ProbMatrixRepr {
    k: usize,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<ProbMatrixRepr> for ProbMatrix {
    type Error = Error;

    fn try_from(r: ProbMatrixRepr) -> Result<Self> {
        if let Some(i) = r.rows.iter().position(|row| row.len() != r.k) {
            return Err(Error::Usage(format!("row {i} does not have k={} entries", r.k)));
        }
        ProbMatrix::new(r.k, r.rows.concat())
    }
}

impl From<ProbMatrix> for ProbMatrixRepr {
    fn from(p: ProbMatrix) -> Self {
        let rows = p.data.chunks(p.k).map(<[f64]>::to_vec).collect();
        ProbMatrixRepr { k: p.k, rows }
    }
}

fn validate_row(i: usize, row: &[f64]) -> Result<()> {
    if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Usage(format!("row {i}: probability {v} outside [0,1]")));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::Usage(format!("row {i}: probabilities sum to {s}")));
    }
    Ok(())
}

impl ProbMatrix {
    pub fn new(k: usize, data: Vec<f64>) -> Result<Self> {
        if k < 2 {
            return Err(Error::Usage(format!("need at least 2 classes, got {k}")));
        }
        if !data.len().is_multiple_of(k) {
            return Err(Error::Usage(format!("{} values do not form rows of {k}", data.len())));
        }
        for (i, row) in data.chunks(k).enumerate() {
            validate_row(i, row)?;
        }
        Ok(Self { n: data.len() / k, k, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != k) {
            return Err(Error::Usage(format!("row {i} has a different width")));
        }
        Self::new(k, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.k)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn digest(&self) -> u64 {
        digest_f64s(&self.data)
    }

    /// Row-wise average of several matrices with equal shape.
    pub fn mean_of(mats: &[&ProbMatrix]) -> Result<ProbMatrix> {
        let first = mats.first().ok_or_else(|| Error::Usage("mean of zero matrices".into()))?;
        for m in mats {
            check_same_shape(first, m)?;
        }
        let scale = 1.0 / mats.len() as f64;
        let data = (0..first.data.len())
            .map(|i| mats.iter().map(|m| m.data[i]).sum::<f64>() * scale)
            .collect();
        ProbMatrix::new(first.k, data)
    }
}

pub(crate) fn check_same_shape(a: &ProbMatrix, b: &ProbMatrix) -> Result<()> {
    if a.n != b.n || a.k != b.k {
        return Err(Error::Usage(format!(
            "prediction matrices differ in shape: {}x{} vs {}x{}",
            a.n, a.k, b.n, b.k
        )));
    }
    Ok(())
}

pub(crate) fn check_labels(p: &ProbMatrix, labels: &[usize]) -> Result<()> {
    if labels.len() != p.n {
        return Err(Error::Usage(format!("{} labels for {} rows", labels.len(), p.n)));
    }
    if let Some(y) = labels.iter().find(|&&y| y >= p.k) {
        return Err(Error::Usage(format!("label {y} out of range for k={}", p.k)));
    }
    Ok(())
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse { path: path.to_path_buf(), line, message: e.to_string() }
}

/// Writes `label,p0,...,p{K-1}` with shortest round-trip float formatting.
pub fn write_prob_csv(path: &Path, probs: &ProbMatrix, labels: &[usize]) -> Result<()> {
    check_labels(probs, labels)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["label".to_string()];
    header.extend((0..probs.k).map(|j| format!("p{j}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (row, y) in probs.rows().zip(labels) {
        let mut rec = vec![y.to_string()];
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a prediction CSV written by [`write_prob_csv`].
pub fn read_prob_csv(path: &Path) -> Result<(ProbMatrix, Vec<usize>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let k = header.len().saturating_sub(1);
    let header_ok = header.get(0) == Some("label")
        && (0..k).all(|j| header.get(j + 1) == Some(format!("p{j}").as_str()));
    if !header_ok || k < 2 {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: "expected header label,p0,...,p{K-1} with K >= 2".into(),
        });
    }
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse { path: path.to_path_buf(), line, message };
        let y: usize = rec[0].trim().parse().map_err(|_| parse_err(format!("bad label {:?}", &rec[0])))?;
        labels.push(y);
        for j in 0..k {
            let v: f64 = rec[j + 1]
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad probability {:?}", &rec[j + 1])))?;
            data.push(v);
        }
        validate_row(labels.len() - 1, &data[data.len() - k..]).map_err(|e| parse_err(e.to_string()))?;
    }
    let probs = ProbMatrix::new(k, data)?;
    check_labels(&probs, &labels).map_err(|e| Error::Schema { path: path.to_path_buf(), message: e.to_string() })?;
    Ok((probs, labels))
}

/// Reads the `label` column of any CSV whose first column is `label`.
pub fn read_labels_csv(path: &Path) -> Result<Vec<usize>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.get(0) != Some("label") {
        return Err(Error::Schema { path: path.to_path_buf(), message: "first column must be `label`".into() });
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            rec[0].trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("bad label {:?}", &rec[0]),
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct JsonlRecord {
    label: usize,
    probs: Vec<f64>,
}

/// One JSON object per line: `{"label":y,"probs":[...]}`.
pub fn write_prob_jsonl(path: &Path, probs: &ProbMatrix, labels: &[usize]) -> Result<()> {
    check_labels(probs, labels)?;
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for (row, &label) in probs.rows().zip(labels) {
        let line = serde_json::to_string(&JsonlRecord { label, probs: row.to_vec() })?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_prob_jsonl(path: &Path) -> Result<(ProbMatrix, Vec<usize>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut k = None;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i as u64 + 1;
        let rec: JsonlRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        if *k.get_or_insert(rec.probs.len()) != rec.probs.len() {
            return Err(Error::Schema { path: path.to_path_buf(), message: format!("line {lineno}: inconsistent width") });
        }
        labels.push(rec.label);
        data.extend(rec.probs);
    }
    let probs = ProbMatrix::new(k.unwrap_or(2), data)?;
    check_labels(&probs, &labels)?;
    Ok((probs, labels))
}
