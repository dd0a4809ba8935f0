use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use crate::error::{Error, Result};

pub const DEFAULT_MOMENTUM: f64 = 0.9;

/// Nesterov momentum buffer for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub velocity: Vec<f64>,
    pub momentum: f64,
}

impl OptState {
    pub fn new(n_params: usize, momentum: f64) -> Self {
        Self { velocity: vec![0.0; n_params], momentum }
    }

    pub fn for_params(params: &ModelParams, momentum: f64) -> Self {
        Self::new(params.len(), momentum)
    }
}

/// One SGD step with Nesterov momentum:
/// `v ← μv − lr·g`, then `w ← w + μv − lr·g`.
///
/// `step` is only used to label a failure. Non-finite gradients abort before
/// any parameter is touched.
pub fn optimizer_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptState,
    lr: f64,
    step: usize,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::Usage(format!(
            "optimizer lengths differ: params {}, grads {}, velocity {}",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric {
            step: Some(step),
            message: format!("non-finite gradient at coordinate {i}"),
        });
    }
    let mu = state.momentum;
    for ((w, v), &g) in params.iter_mut().zip(state.velocity.iter_mut()).zip(grads) {
        let lg = lr * g;
        *v = mu * *v - lg;
        *w += mu * *v - lg;
    }
    if let Some(i) = params.iter().position(|w| !w.is_finite()) {
        return Err(Error::Numeric {
            step: Some(step),
            message: format!("parameter {i} became non-finite"),
        });
    }
    Ok(())
}

pub fn step_model(
    params: &mut ModelParams,
    grads: &[f64],
    state: &mut OptState,
    lr: f64,
    step: usize,
) -> Result<()> {
    optimizer_step(params.values_mut(), grads, state, lr, step)
}
