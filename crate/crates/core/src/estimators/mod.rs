//! Dependence measures between two scalar samples.
//!
//! | estimator | kind |
//! |---|---|
//! | [`pearson`] | linear correlation |
//! | [`hgr_nn`] | neural maximal correlation (two standardized networks) |
//! | [`chi2_nn`] | neural χ² divergence lower bound |
//! | [`mine`] | Donsker–Varadhan mutual information lower bound |
//! | [`witsenhausen_discrete`] | exact maximal correlation of a discrete joint law |
//! | [`hgr_kde`], [`chi2_kde`] | the same two quantities on a KDE grid |
//! | [`rdc`] | randomized dependence coefficient |

mod kde;
mod neural;
mod null;
mod rdc;
mod witsenhausen;

pub use kde::{chi2_kde, hgr_kde, kde_joint_density, silverman_bandwidth, BandwidthRule, KdeConfig, KdeGrid};
pub use neural::{chi2_nn, hgr_nn, mine, Critic, CriticBinding, CriticKind, NeuralEstimatorConfig, MINE_CLIP};
pub(crate) use neural::resample;
pub use null::{null_calibration, NullSummary};
pub use rdc::{rdc, RdcConfig};
pub use witsenhausen::{witsenhausen_discrete, WitsenhausenMatrix};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::mean_var;

/// Paired realizations `(u_i, v_i)` of two scalar variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePairs {
    u: Vec<f64>,
    v: Vec<f64>,
}

impl SamplePairs {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(crate::error::shape_err("SamplePairs::new", u.len(), v.len()));
        }
        if u.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: u.len(),
            });
        }
        if !u.iter().chain(&v).all(|x| x.is_finite()) {
            return Err(Error::NonFinite("sample pairs".into()));
        }
        Ok(Self { u, v })
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// `(v, u)`.
    pub fn swapped(&self) -> Self {
        Self {
            u: self.v.clone(),
            v: self.u.clone(),
        }
    }

    /// Same `u`, with `v` reordered by `order`.
    pub fn with_v_permuted(&self, order: &[usize]) -> Self {
        Self {
            u: self.u.clone(),
            v: order.iter().map(|&i| self.v[i]).collect(),
        }
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.u, self.v)
    }
}

/// Extra information attached to an [`Estimate`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Objective value per training iteration (neural estimators).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iterations: Option<usize>,
    /// KDE bandwidths for u and v.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bandwidth: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub singular_values: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flags: Vec<String>,
}

/// A scalar dependence estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub diagnostics: Diagnostics,
}

impl Estimate {
    pub(crate) fn new(value: f64, diagnostics: Diagnostics) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite("estimate".into()));
        }
        Ok(Self { value, diagnostics })
    }
}

/// Sample Pearson correlation.
pub fn pearson(pairs: &SamplePairs) -> Result<f64> {
    let (mu, vu) = mean_var(pairs.u());
    let (mv, vv) = mean_var(pairs.v());
    if vu <= 0.0 {
        return Err(Error::ZeroVariance("u".into()));
    }
    if vv <= 0.0 {
        return Err(Error::ZeroVariance("v".into()));
    }
    let n = pairs.len() as f64;
    let cov = pairs
        .u()
        .iter()
        .zip(pairs.v())
        .map(|(a, b)| (a - mu) * (b - mv))
        .sum::<f64>()
        / n;
    Ok((cov / (vu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

/// Z-scores a sample with its own mean and population standard deviation.
pub(crate) fn zscore(values: &[f64]) -> Result<Vec<f64>> {
    let (m, var) = mean_var(values);
    if var <= 0.0 {
        return Err(Error::ZeroVariance("estimator input".into()));
    }
    let sd = var.sqrt();
    Ok(values.iter().map(|x| (x - m) / sd).collect())
}
