use serde::{Deserialize, Serialize};

use super::matrix::{self, Matrix};
use super::tape::{Gradients, NodeId, Tape};
use crate::data::rng::{channel, CounterRng};
use crate::digest::digest_f64s;
use crate::error::{Error, Result};
use crate::metrics::ProbMatrix;

/// Parameters of a dense tanh network with a softmax head.
///
/// `values` holds, for each layer in order, the `in x out` weight matrix
/// (row-major) followed by the `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    layer_shapes: Vec<(usize, usize)>,
    values: Vec<f64>,
}

fn param_count(shapes: &[(usize, usize)]) -> usize {
    shapes.iter().map(|&(i, o)| i * o + o).sum()
}

fn shapes_from_sizes(sizes: &[usize]) -> Result<Vec<(usize, usize)>> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::Config(format!(
            "layer sizes need an input and an output width, all positive: {sizes:?}"
        )));
    }
    Ok(sizes.windows(2).map(|w| (w[0], w[1])).collect())
}

impl ModelParams {
    pub fn new(layer_shapes: Vec<(usize, usize)>, values: Vec<f64>) -> Result<Self> {
        if layer_shapes.is_empty() {
            return Err(Error::Config("a model needs at least one layer".into()));
        }
        for w in layer_shapes.windows(2) {
            if w[0].1 != w[1].0 {
                return Err(Error::Config(format!(
                    "layer output {} does not feed next input {}",
                    w[0].1, w[1].0
                )));
            }
        }
        let want = param_count(&layer_shapes);
        if values.len() != want {
            return Err(Error::Config(format!(
                "expected {want} parameter values, got {}",
                values.len()
            )));
        }
        Ok(Self { layer_shapes, values })
    }

    /// All-zero parameters for the widths `sizes = [in, hidden.., out]`.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        let shapes = shapes_from_sizes(sizes)?;
        let n = param_count(&shapes);
        Ok(Self { layer_shapes: shapes, values: vec![0.0; n] })
    }

    /// Glorot-uniform weights and zero biases, drawn from the init channel.
    pub fn init(sizes: &[usize], init_seed: u64) -> Result<Self> {
        let mut params = Self::zeros(sizes)?;
        let mut offset = 0;
        for (layer, &(fan_in, fan_out)) in params.layer_shapes.clone().iter().enumerate() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut rng = CounterRng::keyed(&[channel::INIT, init_seed, layer as u64]);
            for w in &mut params.values[offset..offset + fan_in * fan_out] {
                *w = rng.uniform(-limit, limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(params)
    }

    pub fn layer_shapes(&self) -> &[(usize, usize)] {
        &self.layer_shapes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_shapes[0].0
    }

    pub fn output_dim(&self) -> usize {
        self.layer_shapes[self.layer_shapes.len() - 1].1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn digest(&self) -> u64 {
        digest_f64s(&self.values)
    }

    fn offsets(&self) -> impl Iterator<Item = (usize, (usize, usize))> + '_ {
        self.layer_shapes.iter().scan(0, |off, &(i, o)| {
            let start = *off;
            *off += i * o + o;
            Some((start, (i, o)))
        })
    }

    fn layer(&self, start: usize, (i, o): (usize, usize)) -> (Matrix, Matrix) {
        let w = Matrix::new(i, o, self.values[start..start + i * o].to_vec()).expect("weight shape");
        let b = Matrix::new(1, o, self.values[start + i * o..start + i * o + o].to_vec())
            .expect("bias shape");
        (w, b)
    }

    /// Registers every layer as parameter leaves on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let mut layers = Vec::with_capacity(self.layer_shapes.len());
        for (start, shape) in self.offsets() {
            let (w, b) = self.layer(start, shape);
            layers.push((tape.param(w), tape.param(b)));
        }
        BoundModel { layers, n_params: self.len() }
    }
}

fn check_input(params: &ModelParams, batch: &Matrix) -> Result<()> {
    if batch.cols() != params.input_dim() {
        return Err(Error::Config(format!(
            "batch has {} features, model expects {}",
            batch.cols(),
            params.input_dim()
        )));
    }
    Ok(())
}

fn non_finite(layer: usize) -> Error {
    Error::numeric(format!("non-finite activation in layer {layer}"))
}

/// Final-layer logits without recording a tape.
pub fn forward_logits(params: &ModelParams, batch: &Matrix) -> Result<Matrix> {
    check_input(params, batch)?;
    let last = params.layer_shapes.len() - 1;
    let mut h = batch.clone();
    for (layer, (start, shape)) in params.offsets().enumerate() {
        let (w, b) = params.layer(start, shape);
        let z = matrix::add_bias(&matrix::matmul(&h, &w), b.data());
        h = if layer < last { matrix::tanh(&z) } else { z };
        if !h.is_finite() {
            return Err(non_finite(layer));
        }
    }
    Ok(h)
}

/// Class probabilities `f(x; w)` for each row of `batch`.
pub fn forward_probs(params: &ModelParams, batch: &Matrix) -> Result<ProbMatrix> {
    let logits = forward_logits(params, batch)?;
    let probs = matrix::softmax_rows(&logits);
    if !probs.is_finite() {
        return Err(non_finite(params.layer_shapes.len() - 1));
    }
    let k = probs.cols();
    ProbMatrix::new(k, probs.into_data())
}

/// Parameter leaves of one model on a tape.
#[derive(Debug, Clone)]
pub struct BoundModel {
    layers: Vec<(NodeId, NodeId)>,
    n_params: usize,
}

impl BoundModel {
    pub fn logits(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId> {
        let last = self.layers.len() - 1;
        let mut h = input;
        for (layer, &(w, b)) in self.layers.iter().enumerate() {
            let z = tape.matmul(h, w)?;
            let z = tape.add_bias(z, b)?;
            h = if layer < last { tape.tanh(z) } else { z };
            if !tape.value(h).is_finite() {
                return Err(non_finite(layer));
            }
        }
        Ok(h)
    }

    pub fn probs(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId> {
        let logits = self.logits(tape, input)?;
        Ok(tape.softmax(logits))
    }

    /// Gradient of this model's parameters in [`ModelParams`] layout.
    pub fn flat_grad(&self, tape: &Tape, grads: &Gradients) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params);
        for &(w, b) in &self.layers {
            flat.extend(grads.flat(w, tape.value(w).data().len()));
            flat.extend(grads.flat(b, tape.value(b).data().len()));
        }
        flat
    }

    pub fn param_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_is_uniform() {
        let p = ModelParams::zeros(&[4, 3]).unwrap();
        let x = Matrix::new(2, 4, vec![1.0, -2.0, 3.0, 0.5, 9.0, 9.0, -9.0, 0.0]).unwrap();
        let probs = forward_probs(&p, &x).unwrap();
        for i in 0..2 {
            for &v in probs.row(i) {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn large_logits_do_not_overflow() {
        // One layer, identity-like weights: logits = [1000, 0].
        let p = ModelParams::new(vec![(1, 2)], vec![1000.0, 0.0, 0.0, 0.0]).unwrap();
        let x = Matrix::new(1, 1, vec![1.0]).unwrap();
        let probs = forward_probs(&p, &x).unwrap();
        assert!((probs.row(0)[0] - 1.0).abs() < 1e-15);
        assert!(probs.row(0)[1] < 1e-300);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let p = ModelParams::zeros(&[2, 3]).unwrap();
        let x = Matrix::zeros(1, 5);
        assert!(matches!(forward_probs(&p, &x), Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_activation_names_layer() {
        let mut p = ModelParams::zeros(&[1, 2, 2]).unwrap();
        p.values_mut()[0] = f64::NAN;
        let x = Matrix::new(1, 1, vec![1.0]).unwrap();
        let err = forward_probs(&p, &x).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
    }

    #[test]
    fn layout_matches_param_count() {
        let p = ModelParams::init(&[2, 32, 32, 3], 0).unwrap();
        assert_eq!(p.len(), 2 * 32 + 32 + 32 * 32 + 32 + 32 * 3 + 3);
        let limit = (6.0f64 / 34.0).sqrt();
        assert!(p.values()[..64].iter().all(|w| w.abs() <= limit));
        // biases start at zero
        assert!(p.values()[64..96].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn tape_and_direct_forward_agree_bitwise() {
        let p = ModelParams::init(&[2, 16, 3], 5).unwrap();
        let x = Matrix::new(3, 2, vec![0.1, -0.4, 2.0, 1.0, -3.0, 0.7]).unwrap();
        let direct = forward_probs(&p, &x).unwrap();
        let mut t = Tape::new();
        let bound = p.bind(&mut t);
        let xin = t.constant(x);
        let probs = bound.probs(&mut t, xin).unwrap();
        assert_eq!(t.value(probs).data(), direct.data());
    }
}
