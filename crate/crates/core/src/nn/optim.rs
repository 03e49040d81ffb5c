use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::nn::mlp::{Mlp, MlpGrads};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub const fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adam()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Descend,
    Ascend,
}

/// Per-network optimizer state; moments mirror the flattened parameters.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    steps: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, mlp: &Mlp) -> Self {
        let n = mlp.parameter_count();
        Self {
            kind,
            learning_rate,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step(&mut self, mlp: &mut Mlp, grads: &MlpGrads, direction: Direction) -> Result<()> {
        let g = grads.flatten();
        if g.len() != self.first_moment.len() {
            return Err(shape_err("OptimizerState::step", self.first_moment.len(), g.len()));
        }
        self.steps += 1;
        let sign = match direction {
            Direction::Descend => -1.0,
            Direction::Ascend => 1.0,
        };
        let lr = self.learning_rate;
        let mut params = mlp.flatten();
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, gi) in params.iter_mut().zip(&g) {
                    *p += sign * lr * gi;
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let t = self.steps as i32;
                let bias1 = 1.0 - beta1.powi(t);
                let bias2 = 1.0 - beta2.powi(t);
                for (((p, gi), m), v) in params
                    .iter_mut()
                    .zip(&g)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    *m = beta1 * *m + (1.0 - beta1) * gi;
                    *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    *p += sign * lr * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
        mlp.set_flat(&params)
    }
}
