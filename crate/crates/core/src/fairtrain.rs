//! Adversarially penalized regression.
//!
//! The predictor `h` minimizes `MSE + λ·Ψ`, where `Ψ` penalizes the dependence
//! between `U` and the sensitive attribute `V = S`. In demographic-parity mode
//! `U = h(X)`; in equalized-residuals mode `U = h(X) − Y`. For the neural
//! penalties an adversary ascends its objective `J` one step before every
//! predictor step on the same batch; `Ψ = J²` for HGR and `Ψ = J` for the χ²
//! and MINE bounds. The Pearson penalty is the squared batch correlation.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{shape_err, Error, Result};
use crate::estimators::{resample, Critic, CriticKind, NeuralEstimatorConfig, SamplePairs};
use crate::linalg::Matrix;
use crate::nn::{mean_var, Direction, DropoutMode, LayerSpec, Mlp, NodeId, OptimizerKind, OptimizerState, Tape};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessMode {
    DemographicParity,
    EqualizedResiduals,
}

impl FairnessMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::DemographicParity => "demographic_parity",
            Self::EqualizedResiduals => "equalized_residuals",
        }
    }
}

impl std::str::FromStr for FairnessMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "demographic_parity" | "dp" => Ok(Self::DemographicParity),
            "equalized_residuals" | "er" => Ok(Self::EqualizedResiduals),
            _ => Err(Error::InvalidConfig(format!("unknown fairness mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    HgrNn,
    Chi2Nn,
    Mine,
    /// Squared batch Pearson correlation.
    Pearson,
    None,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 5] = [Self::HgrNn, Self::Chi2Nn, Self::Mine, Self::Pearson, Self::None];

    pub fn name(self) -> &'static str {
        match self {
            Self::HgrNn => "hgr_nn",
            Self::Chi2Nn => "chi2_nn",
            Self::Mine => "mine",
            Self::Pearson => "pearson",
            Self::None => "none",
        }
    }

    fn critic_kind(self) -> Option<CriticKind> {
        match self {
            Self::HgrNn => Some(CriticKind::Hgr),
            Self::Chi2Nn => Some(CriticKind::Chi2),
            Self::Mine => Some(CriticKind::Mine),
            Self::Pearson | Self::None => None,
        }
    }
}

impl std::str::FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown penalty `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairTrainConfig {
    pub mode: FairnessMode,
    pub penalty: PenaltyKind,
    pub lambda: f64,
    pub predictor_layers: Vec<LayerSpec>,
    /// Adversary networks, learning rates and optimizer. Its `batch_size`,
    /// `iterations` and `seed` are not used here.
    pub adversary: NeuralEstimatorConfig,
    /// Predictor learning rate.
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub epsilon: f64,
}

impl FairTrainConfig {
    /// 200 epochs of batches of 128 with a `p → 32 → 32 → 1` tanh predictor and
    /// the default adversary for `penalty`.
    pub fn new(n_features: usize, mode: FairnessMode, penalty: PenaltyKind, lambda: f64, seed: u64) -> Self {
        let adversary = match penalty {
            // MINE shares the χ² critic settings.
            PenaltyKind::Chi2Nn | PenaltyKind::Mine => NeuralEstimatorConfig::chi2_default(seed),
            _ => NeuralEstimatorConfig::hgr_default(seed),
        };
        Self {
            mode,
            penalty,
            lambda,
            predictor_layers: LayerSpec::stack(n_features, &[32, 32], 1),
            adversary,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::adam(),
            batch_size: 128,
            epochs: 200,
            seed,
            epsilon: crate::nn::DEFAULT_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be ≥ 0, got {}", self.lambda)));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("batch_size must be at least 2".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.predictor_layers.last().map(|l| l.output_width) != Some(1) {
            return Err(Error::InvalidConfig("predictor must have a single output".into()));
        }
        if let Some(kind) = self.penalty.critic_kind() {
            self.adversary.validate(kind)?;
        }
        Ok(())
    }
}

/// Epoch means over the training batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean squared error in standardized target units.
    pub mse: f64,
    /// Dependence objective `J` (0 for [`PenaltyKind::None`]).
    pub objective: f64,
    /// λ times the penalty term the predictor minimizes.
    pub weighted_penalty: f64,
}

/// Column means and standard deviations of the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let (m, var) = mean_var(values);
    // Constant columns pass through centered but unscaled.
    (m, if var > 0.0 { var.sqrt() } else { 1.0 })
}

impl Normalization {
    fn fit(dataset: &Dataset) -> Self {
        let (x_mean, x_std) = (0..dataset.n_features()).map(|c| mean_std(&dataset.x.column(c))).unzip();
        let (y_mean, y_std) = mean_std(&dataset.y);
        Self {
            x_mean,
            x_std,
            y_mean,
            y_std,
        }
    }

    fn features(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.x_mean.len() {
            return Err(shape_err("feature normalization", self.x_mean.len(), x.cols()));
        }
        Ok(Matrix::from_fn(x.rows(), x.cols(), |r, c| (x[(r, c)] - self.x_mean[c]) / self.x_std[c]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub predictor: Mlp,
    pub history: Vec<EpochRecord>,
    pub config: FairTrainConfig,
    pub normalization: Normalization,
}

/// `(ŷ, s)` in demographic-parity mode, `(ŷ − y, s)` in equalized-residuals mode.
pub fn select_uv(mode: FairnessMode, yhat: &[f64], y: &[f64], s: &[f64]) -> Result<SamplePairs> {
    if yhat.len() != s.len() || y.len() != s.len() {
        return Err(shape_err(
            "select_uv",
            format!("{} values", s.len()),
            format!("yhat={} y={}", yhat.len(), y.len()),
        ));
    }
    let u = match mode {
        FairnessMode::DemographicParity => yhat.to_vec(),
        FairnessMode::EqualizedResiduals => yhat.iter().zip(y).map(|(a, b)| a - b).collect(),
    };
    SamplePairs::new(u, s.to_vec())
}

/// Everything one alternating step needs about its batch. Both halves of the
/// step see the same rows, dropout masks and product-of-marginals draw.
#[derive(Debug, Clone)]
pub struct Batch {
    rows: Vec<usize>,
    dropout: StreamRng,
    v_marginal: Vec<f64>,
}

impl Batch {
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }
}

/// Losses of one predictor step, in standardized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub mse: f64,
    /// Dependence objective `J`.
    pub objective: f64,
    /// Penalty term before weighting by λ.
    pub penalty: f64,
}

/// Mutable state of a training run, exposed so the two halves of an
/// alternating step can be driven and inspected separately.
pub struct FairTrainer {
    cfg: FairTrainConfig,
    normalization: Normalization,
    x: Matrix,
    y: Vec<f64>,
    s: Vec<f64>,
    predictor: Mlp,
    optimizer: OptimizerState,
    critic: Option<Critic>,
    shuffle_rng: StreamRng,
    marginal_rng: StreamRng,
    batches_drawn: u64,
}

struct Recorded {
    mse: NodeId,
    /// The dependence objective `J`, ascended by the adversary.
    objective: Option<NodeId>,
    /// The term the predictor minimizes (weighted by λ).
    penalty: Option<NodeId>,
    predictor: crate::nn::MlpBinding,
    critic: Option<crate::estimators::CriticBinding>,
}

impl FairTrainer {
    pub fn new(dataset: &Dataset, cfg: &FairTrainConfig) -> Result<Self> {
        cfg.validate()?;
        if dataset.is_empty() {
            return Err(Error::InsufficientSamples { needed: 2 * cfg.batch_size, got: 0 });
        }
        if dataset.len() < 2 * cfg.batch_size {
            return Err(Error::InsufficientSamples {
                needed: 2 * cfg.batch_size,
                got: dataset.len(),
            });
        }
        if cfg.predictor_layers[0].input_width != dataset.n_features() {
            return Err(shape_err(
                "predictor input",
                cfg.predictor_layers[0].input_width,
                dataset.n_features(),
            ));
        }
        let normalization = Normalization::fit(dataset);
        let x = normalization.features(&dataset.x)?;
        let y = dataset
            .y
            .iter()
            .map(|v| (v - normalization.y_mean) / normalization.y_std)
            .collect();
        let (s_mean, s_std) = mean_std(&dataset.s);
        let s = dataset.s.iter().map(|v| (v - s_mean) / s_std).collect();

        let predictor = Mlp::new(cfg.predictor_layers.clone(), rng::derive_seed(cfg.seed, 0x9ED))?;
        let optimizer = OptimizerState::new(cfg.optimizer, cfg.learning_rate, &predictor);
        let critic = match cfg.penalty.critic_kind() {
            Some(kind) => {
                let adv = cfg.adversary.clone().with_seed(rng::derive_seed(cfg.seed, 0xAD7));
                Some(Critic::new(kind, &adv)?)
            }
            None => None,
        };
        Ok(Self {
            cfg: cfg.clone(),
            normalization,
            x,
            y,
            s,
            predictor,
            optimizer,
            critic,
            shuffle_rng: rng::stream(cfg.seed, 0x5F1),
            marginal_rng: rng::stream(cfg.seed, 0x3A27),
            batches_drawn: 0,
        })
    }

    pub fn predictor(&self) -> &Mlp {
        &self.predictor
    }

    pub fn critic(&self) -> Option<&Critic> {
        self.critic.as_ref()
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    /// Seed-shuffled row order for one epoch.
    pub fn epoch_order(&mut self) -> Vec<usize> {
        let n = self.n_rows();
        rng::permutation(&mut self.shuffle_rng, n)
    }

    pub fn batch(&mut self, rows: Vec<usize>) -> Batch {
        let dropout = rng::stream(rng::derive_seed(self.cfg.seed, 0xD90), self.batches_drawn);
        self.batches_drawn += 1;
        let v_marginal = if matches!(self.cfg.penalty, PenaltyKind::Chi2Nn | PenaltyKind::Mine) {
            let vb: Vec<f64> = rows.iter().map(|&r| self.s[r]).collect();
            resample(&mut self.marginal_rng, &vb, vb.len())
        } else {
            Vec::new()
        };
        Batch {
            rows,
            dropout,
            v_marginal,
        }
    }

    fn record(&self, tape: &mut Tape, batch: &Batch) -> Result<Recorded> {
        let p = self.x.cols();
        let mut xb = Vec::with_capacity(batch.rows.len() * p);
        for &r in &batch.rows {
            xb.extend_from_slice(self.x.row(r));
        }
        let yb: Vec<f64> = batch.rows.iter().map(|&r| self.y[r]).collect();
        let vb: Vec<f64> = batch.rows.iter().map(|&r| self.s[r]).collect();

        let x_node = tape.constant(Matrix::from_vec(batch.rows.len(), p, xb)?);
        let y_node = tape.constant(Matrix::column_vector(&yb));
        let mut dropout = batch.dropout.clone();
        let (yhat, predictor) = self.predictor.record(tape, x_node, DropoutMode::Training(&mut dropout))?;
        let resid = tape.sub(yhat, y_node)?;
        let sq = tape.square(resid);
        let mse = tape.mean(sq);
        let u = match self.cfg.mode {
            FairnessMode::DemographicParity => yhat,
            FairnessMode::EqualizedResiduals => resid,
        };

        let (nodes, critic) = match (&self.critic, self.cfg.penalty) {
            (Some(critic), _) => {
                // The adversary sees U standardized over the batch.
                let u_hat = tape.standardize(u, self.cfg.epsilon)?;
                let (j, binding) = critic.record(tape, u_hat, &vb, &batch.v_marginal)?;
                // HGR penalizes J², the other bounds J itself.
                let pen = if self.cfg.penalty == PenaltyKind::HgrNn { tape.square(j) } else { j };
                (Some((j, pen)), Some(binding))
            }
            (None, PenaltyKind::Pearson) => {
                let v_node = tape.constant(Matrix::column_vector(&vb));
                let u_hat = tape.standardize(u, self.cfg.epsilon)?;
                let v_hat = tape.standardize(v_node, self.cfg.epsilon)?;
                let prod = tape.mul(u_hat, v_hat)?;
                let rho = tape.mean(prod);
                let sq = tape.square(rho);
                (Some((sq, sq)), None)
            }
            (None, _) => (None, None),
        };
        Ok(Recorded {
            mse,
            objective: nodes.map(|n| n.0),
            penalty: nodes.map(|n| n.1),
            predictor,
            critic,
        })
    }

    /// One gradient-ascent step of the adversary. The predictor is untouched.
    /// Returns the objective before the step, or `None` without an adversary.
    pub fn adversary_step(&mut self, batch: &Batch) -> Result<Option<f64>> {
        if self.critic.is_none() {
            return Ok(None);
        }
        let mut tape = Tape::new();
        let rec = self.record(&mut tape, batch)?;
        let j = rec.objective.expect("critic records an objective");
        let value = tape.scalar(j);
        if !value.is_finite() {
            return Err(Error::NonFinite("adversary objective".into()));
        }
        let grads = tape.backward(j, &one())?;
        let critic = self.critic.as_mut().expect("checked above");
        critic.ascend(rec.critic.as_ref().expect("critic binding"), &grads)?;
        Ok(Some(value))
    }

    /// One gradient-descent step of the predictor on `MSE + λ·Ψ` with the
    /// adversary held fixed. With `λ = 0` only the MSE is differentiated.
    pub fn predictor_step(&mut self, batch: &Batch) -> Result<StepLoss> {
        let mut tape = Tape::new();
        let rec = self.record(&mut tape, batch)?;
        let mse = tape.scalar(rec.mse);
        let objective = rec.objective.map_or(0.0, |j| tape.scalar(j));
        let penalty = rec.penalty.map_or(0.0, |j| tape.scalar(j));
        if !(mse.is_finite() && objective.is_finite() && penalty.is_finite()) {
            return Err(Error::NonFinite("training loss".into()));
        }
        let root = match rec.penalty {
            Some(j) if self.cfg.lambda > 0.0 => {
                let weighted = tape.scale(j, self.cfg.lambda);
                tape.add(rec.mse, weighted)?
            }
            _ => rec.mse,
        };
        let grads = tape.backward(root, &one())?;
        let g = rec.predictor.grads(&self.predictor, &grads);
        self.optimizer.step(&mut self.predictor, &g, Direction::Descend)?;
        Ok(StepLoss { mse, objective, penalty })
    }

    pub fn into_model(self, history: Vec<EpochRecord>) -> TrainedModel {
        TrainedModel {
            predictor: self.predictor,
            history,
            config: self.cfg,
            normalization: self.normalization,
        }
    }
}

fn one() -> Matrix {
    Matrix::from_fn(1, 1, |_, _| 1.0)
}

/// Trains a predictor by alternating one adversary ascent step and one
/// predictor descent step per batch, for `cfg.epochs` passes of ⌊n/b⌋ batches.
pub fn train_fair(dataset: &Dataset, cfg: &FairTrainConfig) -> Result<TrainedModel> {
    let mut trainer = FairTrainer::new(dataset, cfg)?;
    let b = cfg.batch_size;
    let batches = trainer.n_rows() / b;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = trainer.epoch_order();
        let (mut mse, mut objective, mut penalty) = (0.0, 0.0, 0.0);
        for k in 0..batches {
            let batch = trainer.batch(order[k * b..(k + 1) * b].to_vec());
            let loss = trainer
                .adversary_step(&batch)
                .and_then(|_| trainer.predictor_step(&batch))
                .map_err(|e| match e {
                    Error::NonFinite(_) => Error::NonFiniteLoss { epoch },
                    other => other,
                })?;
            mse += loss.mse / batches as f64;
            objective += loss.objective / batches as f64;
            penalty += loss.penalty / batches as f64;
        }
        history.push(EpochRecord {
            epoch,
            mse,
            objective,
            weighted_penalty: cfg.lambda * penalty,
        });
    }
    Ok(trainer.into_model(history))
}

/// Predictions in original target units, inference mode.
pub fn predict(model: &TrainedModel, x: &Matrix) -> Result<Vec<f64>> {
    let z = model.normalization.features(x)?;
    let out = model.predictor.predict(&z)?;
    let n = &model.normalization;
    Ok(out.data().iter().map(|v| v * n.y_std + n.y_mean).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic_scenario, Provenance};
    use crate::nn::Activation;

    #[test]
    fn select_uv_modes() {
        let dp = select_uv(FairnessMode::DemographicParity, &[1.0, 2.0], &[1.0, 1.0], &[5.0, 6.0]).unwrap();
        assert_eq!((dp.u(), dp.v()), (&[1.0, 2.0][..], &[5.0, 6.0][..]));
        let er = select_uv(FairnessMode::EqualizedResiduals, &[1.0, 2.0], &[1.0, 1.0], &[5.0, 6.0]).unwrap();
        assert_eq!(er.u(), &[0.0, 1.0]);
        assert!(select_uv(FairnessMode::DemographicParity, &[1.0], &[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    fn small_cfg(penalty: PenaltyKind, lambda: f64) -> FairTrainConfig {
        let mut cfg = FairTrainConfig::new(3, FairnessMode::DemographicParity, penalty, lambda, 3);
        cfg.epochs = 2;
        cfg.batch_size = 32;
        cfg
    }

    #[test]
    fn history_has_one_record_per_epoch() {
        let d = gen_synthetic_scenario(200, 1).unwrap();
        let m = train_fair(&d, &small_cfg(PenaltyKind::HgrNn, 1.0)).unwrap();
        assert_eq!(m.history.len(), 2);
        assert!(m.history.iter().all(|h| h.mse.is_finite() && h.objective.is_finite()));
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = gen_synthetic_scenario(50, 1).unwrap();
        assert!(matches!(
            train_fair(&d, &small_cfg(PenaltyKind::None, 0.0)),
            Err(Error::InsufficientSamples { .. })
        ));
        let d = gen_synthetic_scenario(200, 1).unwrap();
        assert!(train_fair(&d, &small_cfg(PenaltyKind::None, -1.0)).is_err());
    }

    #[test]
    fn adversary_and_predictor_steps_touch_only_their_own_parameters() {
        let d = gen_synthetic_scenario(200, 2).unwrap();
        for penalty in [PenaltyKind::HgrNn, PenaltyKind::Chi2Nn, PenaltyKind::Mine] {
            let mut t = FairTrainer::new(&d, &small_cfg(penalty, 1.0)).unwrap();
            let order = t.epoch_order();
            let batch = t.batch(order[..32].to_vec());

            let predictor_before = t.predictor().flatten();
            let critic_before = t.critic().unwrap().f().flatten();
            t.adversary_step(&batch).unwrap();
            assert_eq!(t.predictor().flatten(), predictor_before);
            assert_ne!(t.critic().unwrap().f().flatten(), critic_before);

            let critic_before = t.critic().unwrap().f().flatten();
            let g_before = t.critic().unwrap().g().map(Mlp::flatten);
            t.predictor_step(&batch).unwrap();
            assert_ne!(t.predictor().flatten(), predictor_before);
            assert_eq!(t.critic().unwrap().f().flatten(), critic_before);
            assert_eq!(t.critic().unwrap().g().map(Mlp::flatten), g_before);
        }
    }

    #[test]
    fn nonfinite_loss_reports_epoch() {
        let d = gen_synthetic_scenario(200, 1).unwrap();
        let mut cfg = small_cfg(PenaltyKind::None, 0.0);
        cfg.learning_rate = 1e300;
        cfg.optimizer = OptimizerKind::Sgd;
        match train_fair(&d, &cfg) {
            Err(Error::NonFiniteLoss { epoch }) => assert!(epoch < 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn predict_applies_normalization() {
        let x = Matrix::from_rows(&[vec![1.0], vec![3.0], vec![5.0]]).unwrap();
        let d = Dataset::new(
            vec!["a".into()],
            x.clone(),
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0, 2.0],
            Provenance::SyntheticScenario,
            0,
        )
        .unwrap();
        let mut predictor = Mlp::new(vec![LayerSpec::new(1, 1, Activation::Identity)], 0).unwrap();
        predictor.params_mut()[0].weights[(0, 0)] = 1.0;
        predictor.params_mut()[0].bias[(0, 0)] = 0.0;
        let mut normalization = Normalization::fit(&d);
        normalization.y_mean = 0.0;
        normalization.y_std = 1.0;
        let model = TrainedModel {
            predictor,
            history: Vec::new(),
            config: FairTrainConfig::new(1, FairnessMode::DemographicParity, PenaltyKind::None, 0.0, 0),
            normalization,
        };
        let out = predict(&model, &x).unwrap();
        let sd = (8.0f64 / 3.0).sqrt();
        for (o, expected) in out.iter().zip([-2.0 / sd, 0.0, 2.0 / sd]) {
            assert!((o - expected).abs() < 1e-12);
        }
        assert_eq!(predict(&model, &x).unwrap(), out);
        assert!(predict(&model, &Matrix::zeros(2, 2)).is_err());
    }
}
