//! Neural dependence estimators and the adversaries built from them.
//!
//! A [`Critic`] owns the networks of one estimator and knows how to record its
//! objective `J` on a [`Tape`] given a (possibly differentiable) `u` column and
//! a constant `v` column. The stand-alone estimators ([`hgr_nn`], [`chi2_nn`],
//! [`mine`]) run gradient ascent on `J` over mini-batches; the fair training
//! loop reuses the same critic with `u` produced by the predictor, so the
//! predictor receives gradients through the critic's forward pass.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{zscore, Diagnostics, Estimate, SamplePairs};
use crate::linalg::Matrix;
use crate::nn::{
    Direction, DropoutMode, Gradients, LayerSpec, Mlp, MlpBinding, MlpGrads, NodeId, OptimizerKind, OptimizerState,
    Tape, DEFAULT_EPSILON,
};
use crate::rng::{self, StreamRng};

/// Outputs of the MINE statistics network are clamped to this magnitude
/// before exponentiation.
pub const MINE_CLIP: f64 = 50.0;

const FINAL_MARGINAL_DRAWS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticKind {
    /// Two networks `f(u)`, `g(v)`; `J = mean(f̂ · ĝ)` with batch-standardized outputs.
    Hgr,
    /// One network `f(u, v)`; `J = E_joint[f] − E_marginal[f + f²/4]`.
    Chi2,
    /// One network `f(u, v)`; `J = E_joint[f] − ln E_marginal[e^f]`.
    Mine,
}

/// Hyperparameters of one neural estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralEstimatorConfig {
    pub f_layers: Vec<LayerSpec>,
    /// Only used by the HGR estimator.
    pub g_layers: Vec<LayerSpec>,
    pub learning_rate_f: f64,
    pub learning_rate_g: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub iterations: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl NeuralEstimatorConfig {
    /// Three tanh layers of ten units for both `f` and `g`.
    pub fn hgr_default(seed: u64) -> Self {
        Self {
            f_layers: LayerSpec::stack(1, &[10, 10, 10], 1),
            g_layers: LayerSpec::stack(1, &[10, 10, 10], 1),
            learning_rate_f: 5e-3,
            learning_rate_g: 5e-3,
            optimizer: OptimizerKind::adam(),
            batch_size: 256,
            iterations: 2000,
            epsilon: DEFAULT_EPSILON,
            seed,
        }
    }

    /// Three tanh layers of 32 units over the pair `(u, v)`.
    pub fn chi2_default(seed: u64) -> Self {
        Self {
            f_layers: LayerSpec::stack(2, &[32, 32, 32], 1),
            g_layers: Vec::new(),
            learning_rate_f: 3e-3,
            learning_rate_g: 3e-3,
            optimizer: OptimizerKind::adam(),
            batch_size: 512,
            iterations: 4000,
            epsilon: DEFAULT_EPSILON,
            seed,
        }
    }

    /// Same network as [`Self::chi2_default`] with a smaller step and budget.
    pub fn mine_default(seed: u64) -> Self {
        Self {
            learning_rate_f: 1e-3,
            learning_rate_g: 1e-3,
            iterations: 2000,
            ..Self::chi2_default(seed)
        }
    }

    pub fn default_for(kind: CriticKind, seed: u64) -> Self {
        match kind {
            CriticKind::Hgr => Self::hgr_default(seed),
            CriticKind::Chi2 => Self::chi2_default(seed),
            CriticKind::Mine => Self::mine_default(seed),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn validate(&self, kind: CriticKind) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(self.learning_rate_f > 0.0 && self.learning_rate_g > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.epsilon < 0.0 || !self.epsilon.is_finite() {
            return bad("epsilon must be a nonnegative real");
        }
        let (f_in, needs_g) = match kind {
            CriticKind::Hgr => (1, true),
            CriticKind::Chi2 | CriticKind::Mine => (2, false),
        };
        let check_net = |layers: &[LayerSpec], input: usize, name: &str| -> Result<()> {
            match (layers.first(), layers.last()) {
                (Some(first), Some(last)) if first.input_width == input && last.output_width == 1 => Ok(()),
                _ => Err(Error::InvalidConfig(format!(
                    "{name} network must map {input} input(s) to 1 output"
                ))),
            }
        };
        check_net(&self.f_layers, f_in, "f")?;
        if needs_g {
            check_net(&self.g_layers, 1, "g")?;
        }
        Ok(())
    }
}

/// The adversary networks of one estimator plus their optimizer state.
#[derive(Debug, Clone)]
pub struct Critic {
    kind: CriticKind,
    f: Mlp,
    g: Option<Mlp>,
    opt_f: OptimizerState,
    opt_g: Option<OptimizerState>,
    epsilon: f64,
}

/// Tape handles produced by [`Critic::record`].
#[derive(Debug, Clone)]
pub struct CriticBinding {
    f: Vec<MlpBinding>,
    g: Option<MlpBinding>,
}

impl Critic {
    pub fn new(kind: CriticKind, cfg: &NeuralEstimatorConfig) -> Result<Self> {
        cfg.validate(kind)?;
        let f = Mlp::new(cfg.f_layers.clone(), rng::derive_seed(cfg.seed, 0xF))?;
        let opt_f = OptimizerState::new(cfg.optimizer, cfg.learning_rate_f, &f);
        let (g, opt_g) = match kind {
            CriticKind::Hgr => {
                let g = Mlp::new(cfg.g_layers.clone(), rng::derive_seed(cfg.seed, 0x6))?;
                let opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate_g, &g);
                (Some(g), Some(opt))
            }
            _ => (None, None),
        };
        Ok(Self {
            kind,
            f,
            g,
            opt_f,
            opt_g,
            epsilon: cfg.epsilon,
        })
    }

    pub fn kind(&self) -> CriticKind {
        self.kind
    }

    pub fn f(&self) -> &Mlp {
        &self.f
    }

    pub fn g(&self) -> Option<&Mlp> {
        self.g.as_ref()
    }

    /// Records the objective `J` (a 1 × 1 node).
    ///
    /// `u` is a b × 1 node; `v` are the matching sensitive/second-variable
    /// values; `v_marginal` are independently resampled `v` values used for the
    /// product-of-marginals term (ignored by the HGR critic).
    pub fn record(&self, tape: &mut Tape, u: NodeId, v: &[f64], v_marginal: &[f64]) -> Result<(NodeId, CriticBinding)> {
        let v_node = tape.constant(Matrix::column_vector(v));
        match self.kind {
            CriticKind::Hgr => {
                let g = self.g.as_ref().expect("hgr critic has g");
                let (fu, fb) = self.f.record(tape, u, DropoutMode::Inference)?;
                let (gv, gb) = g.record(tape, v_node, DropoutMode::Inference)?;
                let f_hat = tape.standardize(fu, self.epsilon)?;
                let g_hat = tape.standardize(gv, self.epsilon)?;
                let prod = tape.mul(f_hat, g_hat)?;
                let j = tape.mean(prod);
                Ok((j, CriticBinding { f: vec![fb], g: Some(gb) }))
            }
            CriticKind::Chi2 | CriticKind::Mine => {
                let vm_node = tape.constant(Matrix::column_vector(v_marginal));
                let joint_in = tape.concat_cols(u, v_node)?;
                let marg_in = tape.concat_cols(u, vm_node)?;
                let (fj, b1) = self.f.record(tape, joint_in, DropoutMode::Inference)?;
                let (fm, b2) = self.f.record(tape, marg_in, DropoutMode::Inference)?;
                let j = if self.kind == CriticKind::Chi2 {
                    let e_joint = tape.mean(fj);
                    let sq = tape.square(fm);
                    let quarter = tape.scale(sq, 0.25);
                    let term = tape.add(fm, quarter)?;
                    let e_marg = tape.mean(term);
                    tape.sub(e_joint, e_marg)?
                } else {
                    let fj = tape.clamp(fj, -MINE_CLIP, MINE_CLIP);
                    let fm = tape.clamp(fm, -MINE_CLIP, MINE_CLIP);
                    let e_joint = tape.mean(fj);
                    let ex = tape.exp(fm);
                    let mean_ex = tape.mean(ex);
                    let log_term = tape.ln(mean_ex);
                    tape.sub(e_joint, log_term)?
                };
                Ok((j, CriticBinding { f: vec![b1, b2], g: None }))
            }
        }
    }

    /// One gradient-ascent step using gradients of `J` from [`Tape::backward`].
    pub fn ascend(&mut self, binding: &CriticBinding, grads: &Gradients) -> Result<()> {
        let mut gf = MlpGrads::zeros_like(&self.f);
        for b in &binding.f {
            gf.add_scaled(&b.grads(&self.f, grads), 1.0);
        }
        self.opt_f.step(&mut self.f, &gf, Direction::Ascend)?;
        if let (Some(g), Some(opt), Some(gb)) = (self.g.as_mut(), self.opt_g.as_mut(), binding.g.as_ref()) {
            let gg = gb.grads(g, grads);
            opt.step(g, &gg, Direction::Ascend)?;
        }
        Ok(())
    }
}

/// Draws `len` values uniformly with replacement from `pool`.
pub(crate) fn resample(rng: &mut StreamRng, pool: &[f64], len: usize) -> Vec<f64> {
    (0..len).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

/// Cycles through seed-shuffled mini-batches, reshuffling after each pass.
pub(crate) struct BatchSampler {
    n: usize,
    batch: usize,
    order: Vec<usize>,
    cursor: usize,
    rng: StreamRng,
}

impl BatchSampler {
    pub(crate) fn new(n: usize, batch: usize, rng: StreamRng) -> Self {
        let mut s = Self {
            n,
            batch: batch.min(n),
            order: Vec::new(),
            cursor: n,
            rng,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order = rng::permutation(&mut self.rng, self.n);
        self.cursor = 0;
    }

    pub(crate) fn next_batch(&mut self) -> &[usize] {
        if self.cursor + self.batch > self.n {
            self.reshuffle();
        }
        let start = self.cursor;
        self.cursor += self.batch;
        &self.order[start..start + self.batch]
    }
}

fn run_neural(kind: CriticKind, pairs: &SamplePairs, cfg: &NeuralEstimatorConfig) -> Result<Estimate> {
    cfg.validate(kind)?;
    if pairs.len() < cfg.batch_size {
        return Err(Error::InsufficientSamples {
            needed: cfg.batch_size,
            got: pairs.len(),
        });
    }
    let context = match kind {
        CriticKind::Hgr => "hgr_nn",
        CriticKind::Chi2 => "chi2_nn",
        CriticKind::Mine => "mine",
    };
    // Every measure here is invariant to affine rescaling of either variable.
    let u = zscore(pairs.u())?;
    let v = zscore(pairs.v())?;

    let mut critic = Critic::new(kind, cfg)?;
    let mut sampler = BatchSampler::new(u.len(), cfg.batch_size, rng::stream(cfg.seed, 0xBA7C));
    let mut marg_rng = rng::stream(cfg.seed, 0x3A26);
    let mut trace = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let idx = sampler.next_batch();
        let ub: Vec<f64> = idx.iter().map(|&i| u[i]).collect();
        let vb: Vec<f64> = idx.iter().map(|&i| v[i]).collect();
        let vm = if kind == CriticKind::Hgr {
            Vec::new()
        } else {
            resample(&mut marg_rng, &vb, vb.len())
        };
        let mut tape = Tape::new();
        let u_node = tape.constant(Matrix::column_vector(&ub));
        let (j, binding) = critic.record(&mut tape, u_node, &vb, &vm)?;
        let value = tape.scalar(j);
        trace.push(value);
        if !value.is_finite() {
            return Err(Error::Diverged {
                context,
                iterations: it + 1,
                trace: trace.iter().rev().take(10).rev().copied().collect(),
            });
        }
        let grads = tape.backward(j, &Matrix::from_fn(1, 1, |_, _| 1.0))?;
        critic.ascend(&binding, &grads)?;
    }

    // Final evaluation on the whole sample, averaged over a few independent
    // product-of-marginals draws.
    let draws = if kind == CriticKind::Hgr { 1 } else { FINAL_MARGINAL_DRAWS };
    let mut value = 0.0;
    for _ in 0..draws {
        let vm = if kind == CriticKind::Hgr {
            Vec::new()
        } else {
            resample(&mut marg_rng, &v, v.len())
        };
        let mut tape = Tape::new();
        let u_node = tape.constant(Matrix::column_vector(&u));
        let (j, _) = critic.record(&mut tape, u_node, &v, &vm)?;
        value += tape.scalar(j) / draws as f64;
    }
    if !value.is_finite() {
        return Err(Error::Diverged {
            context,
            iterations: cfg.iterations,
            trace: trace.iter().rev().take(10).rev().copied().collect(),
        });
    }
    let mut diagnostics = Diagnostics {
        trace,
        iterations: Some(cfg.iterations),
        ..Default::default()
    };
    if kind == CriticKind::Hgr && value < 0.0 {
        diagnostics.flags.push("negative_estimate".into());
    }
    Estimate::new(value, diagnostics)
}

/// Neural estimate of the HGR maximal correlation.
///
/// Two networks `f`, `g` are trained by gradient ascent on the mean product of
/// their batch-standardized outputs, back-propagating through the batch mean
/// and variance. The reported value is that mean product over the full sample,
/// standardized on the full sample.
pub fn hgr_nn(pairs: &SamplePairs, cfg: &NeuralEstimatorConfig) -> Result<Estimate> {
    run_neural(CriticKind::Hgr, pairs, cfg)
}

/// Neural lower bound of χ²(P_UV ‖ P_U ⊗ P_V) from the variational form
/// `sup_f E_P[f] − E_Q[f + f²/4]`.
pub fn chi2_nn(pairs: &SamplePairs, cfg: &NeuralEstimatorConfig) -> Result<Estimate> {
    run_neural(CriticKind::Chi2, pairs, cfg)
}

/// Donsker–Varadhan lower bound of the mutual information, in nats.
pub fn mine(pairs: &SamplePairs, cfg: &NeuralEstimatorConfig) -> Result<Estimate> {
    run_neural(CriticKind::Mine, pairs, cfg)
}
