//! RMSprop: per-parameter moving average of squared gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_RHO: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;

/// Serializable optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RmspropSettings {
    pub rho: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl Default for RmspropSettings {
    fn default() -> Self {
        RmspropSettings {
            rho: DEFAULT_RHO,
            epsilon: DEFAULT_EPSILON,
            learning_rate: DEFAULT_LEARNING_RATE,
        }
    }
}

impl RmspropSettings {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.rho && self.rho < 1.0) {
            return Err(Error::config("rmsprop.rho", format!("must be in (0, 1), got {}", self.rho)));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::config(
                "rmsprop.epsilon",
                format!("must be positive, got {}", self.epsilon),
            ));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::config(
                "rmsprop.learning_rate",
                format!("must be finite and nonnegative, got {}", self.learning_rate),
            ));
        }
        Ok(())
    }
}

/// Optimizer state: decay, stability epsilon, step size, and one
/// nonnegative accumulator per parameter tensor.
#[derive(Debug, Clone)]
pub struct RmspropState {
    pub rho: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    accumulator: Vec<Tensor>,
}

impl RmspropState {
    pub fn new(rho: f64, epsilon: f64, learning_rate: f64, params: &[Tensor]) -> Result<Self> {
        if !(0.0 < rho && rho < 1.0) {
            return Err(Error::config("rho", format!("must be in (0, 1), got {rho}")));
        }
        if epsilon <= 0.0 {
            return Err(Error::config("epsilon", format!("must be positive, got {epsilon}")));
        }
        if learning_rate < 0.0 || !learning_rate.is_finite() {
            return Err(Error::config(
                "learning_rate",
                format!("must be finite and nonnegative, got {learning_rate}"),
            ));
        }
        Ok(RmspropState {
            rho,
            epsilon,
            learning_rate,
            accumulator: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        })
    }

    pub fn with_defaults(params: &[Tensor]) -> Self {
        Self::new(DEFAULT_RHO, DEFAULT_EPSILON, DEFAULT_LEARNING_RATE, params)
            .expect("defaults are valid")
    }

    pub fn accumulator(&self) -> &[Tensor] {
        &self.accumulator
    }
}

/// One RMSprop update, elementwise over every parameter tensor:
///
/// ```text
/// s ← ρ·s + (1−ρ)·g²
/// p ← p − lr·g / (√s + ε)
/// ```
pub fn rmsprop_step(
    params: &mut [Tensor],
    gradients: &[Tensor],
    state: &mut RmspropState,
) -> Result<()> {
    if params.len() != gradients.len() || params.len() != state.accumulator.len() {
        return Err(Error::Shape(format!(
            "rmsprop_step: {} params, {} gradients, {} accumulators",
            params.len(),
            gradients.len(),
            state.accumulator.len()
        )));
    }
    for (i, ((param, grad), accum)) in params
        .iter_mut()
        .zip(gradients)
        .zip(state.accumulator.iter_mut())
        .enumerate()
    {
        if param.shape() != grad.shape() {
            return Err(Error::Shape(format!(
                "rmsprop_step: tensor {i} has shape {:?} but gradient {:?}",
                param.shape(),
                grad.shape()
            )));
        }
        let rho = state.rho;
        for ((p, &g), s) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(accum.data_mut())
        {
            *s = rho * *s + (1.0 - rho) * g * g;
            *p -= state.learning_rate * g / (s.sqrt() + state.epsilon);
        }
    }
    Ok(())
}
