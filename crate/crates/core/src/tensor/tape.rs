//! Matrix-valued Wengert tape.
//!
//! Operations are recorded in creation order, so every node's inputs precede
//! it and a single reverse sweep is a valid backward pass. Parameter leaves
//! are tracked separately; their gradients come back in registration order.

use super::matrix::{self, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    /// Constant data; never receives a gradient.
    Constant,
    /// Trainable leaf.
    Param,
    /// Copy of another node's value with the gradient path cut.
    Detached,
    MatMul(NodeId, NodeId),
    /// `[m,n] + [1,n]` broadcast over rows.
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Softmax(NodeId),
    Ln(NodeId),
    Abs(NodeId),
    ClampMin(NodeId, f64),
    /// Divide each row by its sum.
    RowNormalize(NodeId),
    RowSum(NodeId),
    Sum(NodeId),
    /// `out[i] = x[i, idx[i]]`, shape `[m,1]`.
    Gather(NodeId, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Matrix,
    needs_grad: bool,
}

/// Records a computation over matrices for one reverse-mode pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient of `id` as a flat slice, zeros when the node was unreachable.
    pub fn flat(&self, id: NodeId, len: usize) -> Vec<f64> {
        match self.get(id) {
            Some(g) => g.data().to_vec(),
            None => vec![0.0; len],
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Value of a `1x1` node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.as_scalar()
    }

    /// Parameter leaves in registration order.
    pub fn params(&self) -> &[NodeId] {
        &self.params
    }

    /// True if `id` transitively depends on a parameter.
    pub fn needs_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn push(&mut self, op: Op, value: Matrix, needs_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, value, needs_grad });
        id
    }

    fn ng(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].needs_grad)
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Usage(format!(
                "{what}: shape {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Constant, value, false)
    }

    pub fn param(&mut self, value: Matrix) -> NodeId {
        let id = self.push(Op::Param, value, true);
        self.params.push(id);
        id
    }

    /// Stop-gradient copy of `a`.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).clone();
        self.push(Op::Detached, v, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Error::Config(format!("matmul: {sa:?} x {sb:?}")));
        }
        let v = matrix::matmul(self.value(a), self.value(b));
        Ok(self.push(Op::MatMul(a, b), v, self.ng(&[a, b])))
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb != (1, sa.1) {
            return Err(Error::Config(format!("add_bias: {sa:?} + {sb:?}")));
        }
        let v = matrix::add_bias(self.value(a), self.value(bias).data());
        Ok(self.push(Op::AddBias(a, bias), v, self.ng(&[a, bias])))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let v = matrix::zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), v, self.ng(&[a, b])))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        let v = matrix::zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), v, self.ng(&[a, b])))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let v = matrix::zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), v, self.ng(&[a, b])))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = matrix::map(self.value(a), |x| x * c);
        self.push(Op::Scale(a, c), v, self.ng(&[a]))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = matrix::tanh(self.value(a));
        self.push(Op::Tanh(a), v, self.ng(&[a]))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let v = matrix::softmax_rows(self.value(a));
        self.push(Op::Softmax(a), v, self.ng(&[a]))
    }

    /// Natural logarithm. Callers clamp first; see [`crate::losses`].
    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = matrix::map(self.value(a), f64::ln);
        self.push(Op::Ln(a), v, self.ng(&[a]))
    }

    /// Elementwise absolute value; subgradient 0 at 0.
    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let v = matrix::map(self.value(a), f64::abs);
        self.push(Op::Abs(a), v, self.ng(&[a]))
    }

    pub fn clamp_min(&mut self, a: NodeId, floor: f64) -> NodeId {
        let v = matrix::map(self.value(a), |x| x.max(floor));
        self.push(Op::ClampMin(a, floor), v, self.ng(&[a]))
    }

    pub fn row_normalize(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let s: f64 = row.iter().sum();
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        self.push(Op::RowNormalize(a), v, self.ng(&[a]))
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let src = self.value(a);
        let data = (0..src.rows()).map(|i| src.row(i).iter().sum()).collect();
        let v = Matrix::new(src.rows(), 1, data).expect("row_sum shape");
        self.push(Op::RowSum(a), v, self.ng(&[a]))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Matrix::scalar(s), self.ng(&[a]))
    }

    /// Mean over all entries, as `sum · (1/len)`.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).data().len();
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn gather(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        let src = self.value(a);
        if idx.len() != src.rows() {
            return Err(Error::Usage(format!(
                "gather: {} indices for {} rows",
                idx.len(),
                src.rows()
            )));
        }
        if let Some(bad) = idx.iter().find(|&&j| j >= src.cols()) {
            return Err(Error::Usage(format!(
                "gather: index {bad} out of range for {} columns",
                src.cols()
            )));
        }
        let data = idx.iter().enumerate().map(|(i, &j)| src.get(i, j)).collect();
        let v = Matrix::new(idx.len(), 1, data).expect("gather shape");
        Ok(self.push(Op::Gather(a, idx.to_vec()), v, self.ng(&[a])))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let val = |id: NodeId| &self.nodes[id.0].value;
        let mut send = |id: NodeId, contrib: Matrix| {
            if !self.nodes[id.0].needs_grad {
                return;
            }
            match &mut grads[id.0] {
                Some(acc) => {
                    for (a, c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                        *a += c;
                    }
                }
                slot @ None => *slot = Some(contrib),
            }
        };

        match &node.op {
            Op::Constant | Op::Param | Op::Detached => {}
            Op::MatMul(a, b) => {
                if self.nodes[a.0].needs_grad {
                    send(*a, matrix::matmul_nt(g, val(*b)));
                }
                if self.nodes[b.0].needs_grad {
                    send(*b, matrix::matmul_tn(val(*a), g));
                }
            }
            Op::AddBias(a, b) => {
                send(*a, g.clone());
                let cols = g.cols();
                let mut db = vec![0.0; cols];
                for i in 0..g.rows() {
                    for (d, x) in db.iter_mut().zip(g.row(i)) {
                        *d += x;
                    }
                }
                send(*b, Matrix::new(1, cols, db).expect("bias grad"));
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, matrix::map(g, |x| -x));
            }
            Op::Mul(a, b) => {
                send(*a, matrix::zip_map(g, val(*b), |x, y| x * y));
                send(*b, matrix::zip_map(g, val(*a), |x, y| x * y));
            }
            Op::Scale(a, c) => send(*a, matrix::map(g, |x| x * c)),
            Op::Tanh(a) => send(*a, matrix::zip_map(g, &node.value, |x, y| x * (1.0 - y * y))),
            Op::Softmax(a) => {
                let y = &node.value;
                let mut d = g.clone();
                for i in 0..y.rows() {
                    let yr = y.row(i);
                    let dot: f64 = g.row(i).iter().zip(yr).map(|(p, q)| p * q).sum();
                    for (dv, yv) in d.row_mut(i).iter_mut().zip(yr) {
                        *dv = yv * (*dv - dot);
                    }
                }
                send(*a, d);
            }
            Op::Ln(a) => send(*a, matrix::zip_map(g, val(*a), |x, y| x / y)),
            Op::Abs(a) => send(
                *a,
                matrix::zip_map(g, val(*a), |x, y| {
                    if y > 0.0 {
                        x
                    } else if y < 0.0 {
                        -x
                    } else {
                        0.0
                    }
                }),
            ),
            Op::ClampMin(a, floor) => send(
                *a,
                matrix::zip_map(g, val(*a), |x, y| if y > *floor { x } else { 0.0 }),
            ),
            Op::RowNormalize(a) => {
                let src = val(*a);
                let y = &node.value;
                let mut d = g.clone();
                for i in 0..y.rows() {
                    let s: f64 = src.row(i).iter().sum();
                    let dot: f64 = g.row(i).iter().zip(y.row(i)).map(|(p, q)| p * q).sum();
                    for dv in d.row_mut(i).iter_mut() {
                        *dv = (*dv - dot) / s;
                    }
                }
                send(*a, d);
            }
            Op::RowSum(a) => {
                let (r, c) = val(*a).shape();
                let mut d = Matrix::zeros(r, c);
                for i in 0..r {
                    let gi = g.get(i, 0);
                    d.row_mut(i).iter_mut().for_each(|v| *v = gi);
                }
                send(*a, d);
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                send(*a, Matrix::filled(r, c, g.as_scalar()));
            }
            Op::Gather(a, idx) => {
                let (r, c) = val(*a).shape();
                let mut d = Matrix::zeros(r, c);
                for (i, &j) in idx.iter().enumerate() {
                    d.row_mut(i)[j] = g.get(i, 0);
                }
                send(*a, d);
            }
        }
    }
}

/// Flat gradient over every parameter leaf of `tape`, in registration order.
pub fn compute_gradients(tape: &Tape, loss: NodeId) -> Result<Vec<f64>> {
    let grads = tape.backward(loss)?;
    let mut flat = Vec::new();
    for &p in tape.params() {
        let len = tape.value(p).data().len();
        flat.extend(grads.flat(p, len));
    }
    Ok(flat)
}
