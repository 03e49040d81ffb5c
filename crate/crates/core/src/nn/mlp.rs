use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::Matrix;
use crate::nn::tape::{Gradients, NodeId, Tape};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

/// One dense layer: `activation(x · Wᵀ + b)`, optionally followed by
/// inverted dropout while training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_width: usize,
    pub output_width: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
}

impl LayerSpec {
    pub fn new(input_width: usize, output_width: usize, activation: Activation) -> Self {
        Self {
            input_width,
            output_width,
            activation,
            dropout_rate: 0.0,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    /// `input → hidden[0] → … → output` with tanh hidden layers and a linear
    /// output layer.
    pub fn stack(input: usize, hidden: &[usize], output: usize) -> Vec<LayerSpec> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let last = widths.len() - 2;
        widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { Activation::Identity } else { Activation::Tanh };
                LayerSpec::new(w[0], w[1], act)
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.output_width == 0 {
            return Err(Error::InvalidConfig("layer widths must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Weights (out × in) and bias (1 × out) of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub weights: Matrix,
    pub bias: Matrix,
}

/// A dense feed-forward network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<LayerSpec>,
    params: Vec<DenseParams>,
    seed: u64,
}

/// Gradients for every parameter of one [`Mlp`], in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<DenseParams>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .params
                .iter()
                .map(|p| DenseParams {
                    weights: Matrix::zeros(p.weights.rows(), p.weights.cols()),
                    bias: Matrix::zeros(1, p.bias.cols()),
                })
                .collect(),
        }
    }

    /// All gradient entries, weights before bias within each layer.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|p| p.weights.data().iter().chain(p.bias.data()).copied())
            .collect()
    }

    /// `self + factor · other`.
    pub fn add_scaled(&mut self, other: &MlpGrads, factor: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.data_mut().iter_mut().zip(b.weights.data()) {
                *x += factor * y;
            }
            for (x, y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                *x += factor * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|p| p.weights.is_finite() && p.bias.is_finite())
    }
}

/// Node handles of one network's parameters on a tape.
#[derive(Debug, Clone)]
pub struct MlpBinding {
    params: Vec<(NodeId, NodeId)>,
}

impl MlpBinding {
    /// Extracts this network's parameter gradients; untouched parameters get zeros.
    pub fn grads(&self, mlp: &Mlp, grads: &Gradients) -> MlpGrads {
        let mut out = MlpGrads::zeros_like(mlp);
        for ((w, b), layer) in self.params.iter().zip(out.layers.iter_mut()) {
            if let Some(g) = grads.get(*w) {
                layer.weights = g.clone();
            }
            if let Some(g) = grads.get(*b) {
                layer.bias = g.clone();
            }
        }
        out
    }
}

/// How dropout behaves during a forward pass.
pub enum DropoutMode<'a> {
    Inference,
    Training(&'a mut StreamRng),
}

impl Mlp {
    /// Xavier-uniform weights, zero biases, deterministic per seed.
    pub fn new(layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        for l in &layers {
            l.validate()?;
        }
        for pair in layers.windows(2) {
            if pair[0].output_width != pair[1].input_width {
                return Err(shape_err(
                    "Mlp::new",
                    format!("input width {}", pair[0].output_width),
                    pair[1].input_width,
                ));
            }
        }
        let mut init = rng::stream(seed, 0x1417);
        let params = layers
            .iter()
            .map(|l| {
                let bound = (6.0 / (l.input_width + l.output_width) as f64).sqrt();
                let weights = Matrix::from_fn(l.output_width, l.input_width, |_, _| {
                    init.random_range(-bound..=bound)
                });
                DenseParams {
                    weights,
                    bias: Matrix::zeros(1, l.output_width),
                }
            })
            .collect();
        Ok(Self { layers, params, seed })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[DenseParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [DenseParams] {
        &mut self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width
    }

    pub fn parameter_count(&self) -> usize {
        self.params
            .iter()
            .map(|p| p.weights.data().len() + p.bias.data().len())
            .sum()
    }

    /// All parameters, weights before bias within each layer.
    pub fn flatten(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.weights.data().iter().chain(p.bias.data()).copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(shape_err("Mlp::set_flat", self.parameter_count(), values.len()));
        }
        let mut it = values.iter().copied();
        for p in &mut self.params {
            for v in p.weights.data_mut().iter_mut().chain(p.bias.data_mut()) {
                *v = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// Records this network applied to `input` on `tape`.
    pub fn record(&self, tape: &mut Tape, input: NodeId, mut dropout: DropoutMode<'_>) -> Result<(NodeId, MlpBinding)> {
        let width = tape.value(input).cols();
        if width != self.input_width() {
            return Err(shape_err("Mlp::record", format!("{} input columns", self.input_width()), width));
        }
        let mut x = input;
        let mut params = Vec::with_capacity(self.layers.len());
        for (spec, p) in self.layers.iter().zip(&self.params) {
            let w = tape.variable(p.weights.clone());
            let b = tape.variable(p.bias.clone());
            params.push((w, b));
            let z = tape.matmul_t(x, w)?;
            let z = tape.add_bias(z, b)?;
            x = match spec.activation {
                Activation::Tanh => tape.tanh(z),
                Activation::Identity => z,
            };
            if spec.dropout_rate > 0.0 {
                if let DropoutMode::Training(rng) = &mut dropout {
                    let keep = 1.0 - spec.dropout_rate;
                    let len = tape.value(x).data().len();
                    let mask = (0..len)
                        .map(|_| if rng::open_unit(*rng) < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    x = tape.dropout(x, mask)?;
                }
            }
        }
        Ok((x, MlpBinding { params }))
    }

    /// Forward pass over a batch, keeping the tape for a later backward pass.
    ///
    /// `seed` drives the dropout masks and is ignored in inference mode.
    pub fn forward(&self, batch: &Matrix, training: bool, seed: u64) -> Result<(Matrix, Forward)> {
        if !batch.is_finite() {
            return Err(Error::NonFinite("network input".into()));
        }
        let mut tape = Tape::new();
        let input = tape.constant(batch.clone());
        let mut drop_rng = rng::stream(seed, 0xD209);
        let mode = if training {
            DropoutMode::Training(&mut drop_rng)
        } else {
            DropoutMode::Inference
        };
        let (output, binding) = self.record(&mut tape, input, mode)?;
        let values = tape.value(output).clone();
        if !values.is_finite() {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok((
            values,
            Forward {
                tape,
                output,
                binding,
                mlp: self.clone(),
                consumed: false,
            },
        ))
    }

    /// Inference-mode outputs.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        self.forward(batch, false, 0).map(|(out, _)| out)
    }
}

/// A completed forward pass of a single network.
pub struct Forward {
    tape: Tape,
    output: NodeId,
    binding: MlpBinding,
    mlp: Mlp,
    consumed: bool,
}

impl Forward {
    /// Gradients of `Σ output_grad ⊙ outputs` with respect to every parameter.
    /// A forward pass can be differentiated only once.
    pub fn backward(&mut self, output_grad: &Matrix) -> Result<MlpGrads> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        self.consumed = true;
        let grads = self.tape.backward(self.output, output_grad)?;
        let out = self.binding.grads(&self.mlp, &grads);
        if !out.is_finite() {
            return Err(Error::NonFinite("parameter gradients".into()));
        }
        Ok(out)
    }
}
