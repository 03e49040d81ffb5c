//! Small dense networks with reverse-mode gradients.
//!
//! Everything needed by the adversaries and predictors: Xavier-initialized
//! tanh layers, inverted dropout, batch standardization that can be
//! differentiated through its mean and variance, and SGD/Adam updates in
//! either direction (descent for predictors, ascent for adversaries).

mod mlp;
mod optim;
mod tape;

pub use mlp::{Activation, DenseParams, DropoutMode, Forward, LayerSpec, Mlp, MlpBinding, MlpGrads};
pub use optim::{Direction, OptimizerKind, OptimizerState};
pub use tape::{Gradients, NodeId, Tape};

pub(crate) use tape::mean_var;

use crate::error::{Error, Result};

/// Default ε added to the variance before taking the square root.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Result of [`standardize_batch`].
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Population variance (divides by the batch size).
    pub variance: f64,
}

/// `(v − mean) / sqrt(var + ε)` over one batch.
pub fn standardize_batch(values: &[f64], epsilon: f64) -> Result<Standardized> {
    if values.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: values.len(),
        });
    }
    if !values.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("standardize_batch input".into()));
    }
    let (mean, variance) = mean_var(values);
    let inv = 1.0 / (variance + epsilon).sqrt();
    Ok(Standardized {
        values: values.iter().map(|v| (v - mean) * inv).collect(),
        mean,
        variance,
    })
}
