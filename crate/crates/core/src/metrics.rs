//! Accuracy and fairness metrics, and the Gaussian dominance experiment.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{gen_bivariate_gaussian, Dataset};
use crate::error::{shape_err, Error, Result};
use crate::estimators::{
    chi2_kde, chi2_nn, hgr_kde, hgr_nn, mine, rdc, KdeConfig, NeuralEstimatorConfig, RdcConfig, SamplePairs,
};
use crate::fairtrain::{predict, select_uv, FairnessMode, TrainedModel};
use crate::nn::mean_var;
use crate::rng;

pub fn mse(yhat: &[f64], y: &[f64]) -> Result<f64> {
    if yhat.len() != y.len() {
        return Err(shape_err("mse", y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    Ok(yhat.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// Means of `values` over `q` groups of rows ordered by `s`.
///
/// Rows are stably sorted by `s` (ties keep their original order) and split
/// into `q` consecutive groups of ⌊n/q⌋ rows, the first `n mod q` groups
/// taking one extra row.
pub fn quantile_group_means(values: &[f64], s: &[f64], q: usize) -> Result<Vec<f64>> {
    if values.len() != s.len() {
        return Err(shape_err("quantile groups", s.len(), values.len()));
    }
    let n = values.len();
    if q == 0 || n < q {
        return Err(Error::InsufficientSamples { needed: q.max(1), got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let (base, extra) = (n / q, n % q);
    let mut start = 0;
    Ok((0..q)
        .map(|g| {
            let len = base + usize::from(g < extra);
            let group = &order[start..start + len];
            start += len;
            group.iter().map(|&i| values[i]).sum::<f64>() / len as f64
        })
        .collect())
}

/// Mean absolute deviation of the per-quantile means of `values` from their
/// global mean, with quantiles taken over `s`.
pub fn fair_quant(values: &[f64], s: &[f64], q: usize) -> Result<f64> {
    // Centered on the first value; constant input gives exactly zero.
    let pivot = values.first().copied().unwrap_or(0.0);
    let centered: Vec<f64> = values.iter().map(|v| v - pivot).collect();
    let groups = quantile_group_means(&centered, s, q)?;
    let m = centered.iter().sum::<f64>() / centered.len() as f64;
    Ok(groups.iter().map(|g| (g - m).abs()).sum::<f64>() / q as f64)
}

/// Estimator settings used by [`evaluate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSuite {
    pub hgr_nn: NeuralEstimatorConfig,
    pub chi2_nn: NeuralEstimatorConfig,
    pub kde: KdeConfig,
    pub rdc: RdcConfig,
    pub quantiles: usize,
}

impl EstimatorSuite {
    pub fn new(seed: u64) -> Self {
        Self {
            hgr_nn: NeuralEstimatorConfig::hgr_default(rng::derive_seed(seed, 1)),
            chi2_nn: NeuralEstimatorConfig::chi2_default(rng::derive_seed(seed, 2)),
            kde: KdeConfig::default(),
            rdc: RdcConfig {
                seed: rng::derive_seed(seed, 3),
                ..Default::default()
            },
            quantiles: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse: f64,
    pub hgr_nn: f64,
    pub hgr_kde: f64,
    pub rdc: f64,
    pub chi2_kde: f64,
    pub chi2_nn: f64,
    pub fairquant: f64,
    pub mode: FairnessMode,
    pub model_seed: u64,
    pub estimators: EstimatorSuite,
}

#[derive(Serialize)]
struct EvalRow<'a> {
    mode: &'a str,
    model_seed: u64,
    mse: f64,
    hgr_nn: f64,
    hgr_kde: f64,
    rdc: f64,
    chi2_kde: f64,
    chi2_nn: f64,
    fairquant: f64,
}

impl EvalReport {
    /// One CSV row per report, with a header.
    pub fn write_csv<W: Write>(reports: &[EvalReport], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in reports {
            w.serialize(EvalRow {
                mode: r.mode.name(),
                model_seed: r.model_seed,
                mse: r.mse,
                hgr_nn: r.hgr_nn,
                hgr_kde: r.hgr_kde,
                rdc: r.rdc,
                chi2_kde: r.chi2_kde,
                chi2_nn: r.chi2_nn,
                fairquant: r.fairquant,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Dependence metrics of `(u, v)`. A constant `u` is independent of `v`, so
/// every measure is 0 there.
fn dependence(pairs: &SamplePairs, suite: &EstimatorSuite) -> Result<[f64; 5]> {
    if mean_var(pairs.u()).1 == 0.0 {
        return Ok([0.0; 5]);
    }
    Ok([
        hgr_nn(pairs, &suite.hgr_nn)?.value,
        hgr_kde(pairs, &suite.kde)?.value,
        rdc(pairs, &suite.rdc)?.value,
        chi2_kde(pairs, &suite.kde)?.value,
        chi2_nn(pairs, &suite.chi2_nn)?.value,
    ])
}

/// Scores `model` on `test`: MSE in original units, then every dependence
/// measure and FairQuant on `(U, S)` as selected by `mode`.
pub fn evaluate(model: &TrainedModel, test: &Dataset, mode: FairnessMode, suite: &EstimatorSuite) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let yhat = predict(model, &test.x)?;
    let pairs = select_uv(mode, &yhat, &test.y, &test.s)?;
    let [hgr_nn, hgr_kde, rdc, chi2_kde, chi2_nn] = dependence(&pairs, suite)?;
    let report = EvalReport {
        mse: mse(&yhat, &test.y)?,
        hgr_nn,
        hgr_kde,
        rdc,
        chi2_kde,
        chi2_nn,
        fairquant: fair_quant(pairs.u(), pairs.v(), suite.quantiles)?,
        mode,
        model_seed: model.config.seed,
        estimators: suite.clone(),
    };
    let all = [
        report.mse,
        report.hgr_nn,
        report.hgr_kde,
        report.rdc,
        report.chi2_kde,
        report.chi2_nn,
        report.fairquant,
    ];
    if !all.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("evaluation report".into()));
    }
    Ok(report)
}

/// Magnitude of `(e^{−1/(2 ln 2)} − 1) / (1 + e^{−1/(2 ln 2)})`, about 0.3458.
pub fn dominance_threshold() -> f64 {
    let e = (-1.0 / (2.0 * std::f64::consts::LN_2)).exp();
    ((e - 1.0) / (1.0 + e)).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceRow {
    pub rho: f64,
    pub hgr_sq_est: f64,
    pub chi2_est: f64,
    /// `1 − 2^{−2 I}` with the mutual information `I` in bits.
    pub mi_bound_est: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub rows: Vec<DominanceRow>,
    pub t: f64,
}

impl DominanceReport {
    /// One CSV row per ρ.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Neural estimator settings for [`gaussian_dominance_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceConfig {
    pub hgr_nn: NeuralEstimatorConfig,
    pub chi2_nn: NeuralEstimatorConfig,
    pub mine: NeuralEstimatorConfig,
}

impl Default for DominanceConfig {
    fn default() -> Self {
        Self {
            hgr_nn: NeuralEstimatorConfig::hgr_default(0),
            chi2_nn: NeuralEstimatorConfig::chi2_default(0),
            mine: NeuralEstimatorConfig::mine_default(0),
        }
    }
}

/// Seed of the sample drawn for one ρ; independent of the grid order.
pub fn dominance_sample_seed(seed: u64, rho: f64) -> u64 {
    rng::derive_seed(seed, rho.to_bits())
}

/// Estimates HGR², χ² and the mutual-information bound on bivariate Gaussian
/// samples for each ρ; rows come out sorted by ρ.
pub fn gaussian_dominance_check(
    rho_grid: &[f64],
    n: usize,
    cfg: &DominanceConfig,
    seed: u64,
) -> Result<DominanceReport> {
    let mut grid = rho_grid.to_vec();
    if let Some(bad) = grid.iter().find(|r| r.is_nan() || r.abs() >= 1.0) {
        return Err(Error::InvalidConfig(format!("|rho| must be < 1, got {bad}")));
    }
    grid.sort_by(f64::total_cmp);
    let rows = grid
        .into_iter()
        .map(|rho| {
            let sample_seed = dominance_sample_seed(seed, rho);
            let pairs = gen_bivariate_gaussian(n, rho, sample_seed)?;
            let est_seed = |tag| rng::derive_seed(sample_seed, tag);
            let h = hgr_nn(&pairs, &cfg.hgr_nn.clone().with_seed(est_seed(1)))?.value;
            let c = chi2_nn(&pairs, &cfg.chi2_nn.clone().with_seed(est_seed(2)))?.value;
            let i_nats = mine(&pairs, &cfg.mine.clone().with_seed(est_seed(3)))?.value;
            let i_bits = i_nats / std::f64::consts::LN_2;
            Ok(DominanceRow {
                rho,
                hgr_sq_est: h * h,
                chi2_est: c,
                mi_bound_est: 1.0 - 2f64.powf(-2.0 * i_bits),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DominanceReport {
        rows,
        t: dominance_threshold(),
    })
}
