use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Config(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn scalar(value: f64) -> Self {
        Self { rows: 1, cols: 1, data: vec![value] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Config(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: indices.len(), cols: self.cols, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn as_scalar(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }
}

// Kernels shared by the tape and the tape-free forward pass. Every reduction
// runs left to right in index order so results are reproducible bit for bit.

/// `a[m,k] · b[k,n]`.
pub(crate) fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Matrix { rows: m, cols: n, data: out }
}

/// `aᵀ[k,m] · g[m,n]`, used for weight gradients.
pub(crate) fn matmul_tn(a: &Matrix, g: &Matrix) -> Matrix {
    let (m, k, n) = (a.rows, a.cols, g.cols);
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g.data[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    Matrix { rows: k, cols: n, data: out }
}

/// `g[m,n] · bᵀ[n,k]`, used for input gradients.
pub(crate) fn matmul_nt(g: &Matrix, b: &Matrix) -> Matrix {
    let (m, n, k) = (g.rows, g.cols, b.rows);
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g.data[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b.data[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (gv, bv) in grow.iter().zip(brow) {
                acc += gv * bv;
            }
            out[i * k + p] = acc;
        }
    }
    Matrix { rows: m, cols: k, data: out }
}

pub(crate) fn add_bias(a: &Matrix, bias: &[f64]) -> Matrix {
    let mut out = a.clone();
    for i in 0..out.rows {
        for (o, b) in out.row_mut(i).iter_mut().zip(bias) {
            *o += b;
        }
    }
    out
}

pub(crate) fn tanh(a: &Matrix) -> Matrix {
    map(a, f64::tanh)
}

/// Row-wise softmax with max subtraction.
pub(crate) fn softmax_rows(a: &Matrix) -> Matrix {
    let mut out = a.clone();
    for i in 0..out.rows {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

pub(crate) fn map(a: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    Matrix { rows: a.rows, cols: a.cols, data: a.data.iter().map(|&v| f(v)).collect() }
}

pub(crate) fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    Matrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}
