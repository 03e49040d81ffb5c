//! Gaussian product-kernel density on a regular grid, and the maximal
//! correlation / χ² divergence of the discretized law.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::witsenhausen::WitsenhausenMatrix;
use crate::estimators::{Diagnostics, Estimate, SamplePairs};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "h", rename_all = "snake_case")]
pub enum BandwidthRule {
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeConfig {
    /// Grid points per axis.
    pub grid_size: usize,
    pub bandwidth_rule: BandwidthRule,
    /// Grid extends this many bandwidths beyond the data range.
    pub grid_padding: f64,
}

impl Default for KdeConfig {
    fn default() -> Self {
        Self {
            grid_size: 64,
            bandwidth_rule: BandwidthRule::Silverman,
            grid_padding: 3.0,
        }
    }
}

impl KdeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 8 {
            return Err(Error::InvalidConfig(format!("grid_size {} < 8", self.grid_size)));
        }
        if !(self.grid_padding >= 0.0 && self.grid_padding.is_finite()) {
            return Err(Error::InvalidConfig("grid_padding must be a nonnegative real".into()));
        }
        if let BandwidthRule::Fixed(h) = self.bandwidth_rule {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidConfig(format!("fixed bandwidth {h} must be positive")));
            }
        }
        Ok(())
    }
}

/// Silverman's rule of thumb, `(4 / 3n)^{1/5} · σ̂`, with σ̂ the sample
/// standard deviation (n − 1 denominator).
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var <= 0.0 || !var.is_finite() {
        return Err(Error::ZeroVariance("silverman_bandwidth".into()));
    }
    Ok((4.0 / (3.0 * n as f64)).powf(0.2) * var.sqrt())
}

/// Joint density evaluated on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeGrid {
    pub grid_u: Vec<f64>,
    pub grid_v: Vec<f64>,
    /// `density[(i, j)]` at `(grid_u[i], grid_v[j])`.
    pub density: Matrix,
    pub bandwidth_u: f64,
    pub bandwidth_v: f64,
}

fn trapezoid_weights(len: usize, step: f64) -> Vec<f64> {
    (0..len)
        .map(|i| if i == 0 || i + 1 == len { 0.5 * step } else { step })
        .collect()
}

impl KdeGrid {
    /// Probability mass of each grid cell (trapezoid weights × density); sums to 1.
    pub fn cell_masses(&self) -> Matrix {
        let wu = trapezoid_weights(self.grid_u.len(), self.grid_u[1] - self.grid_u[0]);
        let wv = trapezoid_weights(self.grid_v.len(), self.grid_v[1] - self.grid_v[0]);
        Matrix::from_fn(self.grid_u.len(), self.grid_v.len(), |i, j| wu[i] * wv[j] * self.density[(i, j)])
    }

    /// Trapezoidal integral of the density.
    pub fn integral(&self) -> f64 {
        self.cell_masses().data().iter().sum()
    }
}

fn axis(samples: &[f64], h: f64, size: usize, padding: f64) -> Vec<f64> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - padding * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + padding * h;
    let step = (hi - lo) / (size - 1) as f64;
    (0..size).map(|i| lo + step * i as f64).collect()
}

/// Gaussian kernel matrix `K[g, i] = φ((grid[g] − x_i) / h) / h`.
fn kernel_matrix(grid: &[f64], samples: &[f64], h: f64) -> Matrix {
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    Matrix::from_fn(grid.len(), samples.len(), |g, i| {
        let z = (grid[g] - samples[i]) / h;
        norm * (-0.5 * z * z).exp()
    })
}

pub fn kde_joint_density(pairs: &SamplePairs, cfg: &KdeConfig) -> Result<KdeGrid> {
    cfg.validate()?;
    let (hu, hv) = match cfg.bandwidth_rule {
        BandwidthRule::Silverman => (silverman_bandwidth(pairs.u())?, silverman_bandwidth(pairs.v())?),
        BandwidthRule::Fixed(h) => (h, h),
    };
    let grid_u = axis(pairs.u(), hu, cfg.grid_size, cfg.grid_padding);
    let grid_v = axis(pairs.v(), hv, cfg.grid_size, cfg.grid_padding);
    if !(grid_u[1] > grid_u[0] && grid_v[1] > grid_v[0]) {
        return Err(Error::ZeroVariance("kde grid span".into()));
    }
    let ku = kernel_matrix(&grid_u, pairs.u(), hu);
    let kv = kernel_matrix(&grid_v, pairs.v(), hv);
    let n = pairs.len() as f64;
    let density = ku.matmul_transposed(&kv)?.map(|d| d / n);
    let mut grid = KdeGrid {
        grid_u,
        grid_v,
        density,
        bandwidth_u: hu,
        bandwidth_v: hv,
    };
    let total = grid.integral();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NonFinite("kde normalization".into()));
    }
    grid.density = grid.density.map(|d| d / total);
    Ok(grid)
}

fn discretize(pairs: &SamplePairs, cfg: &KdeConfig) -> Result<(KdeGrid, WitsenhausenMatrix)> {
    let grid = kde_joint_density(pairs, cfg)?;
    let w = WitsenhausenMatrix::from_masses(&grid.cell_masses());
    Ok((grid, w))
}

/// Maximal correlation of the KDE-discretized joint law.
pub fn hgr_kde(pairs: &SamplePairs, cfg: &KdeConfig) -> Result<Estimate> {
    let (grid, w) = discretize(pairs, cfg)?;
    let (value, sv) = w.maximal_correlation();
    Estimate::new(
        value,
        Diagnostics {
            bandwidth: Some((grid.bandwidth_u, grid.bandwidth_v)),
            singular_values: sv.into_iter().take(8).collect(),
            ..Default::default()
        },
    )
}

/// χ² divergence between the discretized joint law and the product of its
/// marginals: `Σ Q(j, j')² − 1`.
pub fn chi2_kde(pairs: &SamplePairs, cfg: &KdeConfig) -> Result<Estimate> {
    let (grid, w) = discretize(pairs, cfg)?;
    let value = (w.q.data().iter().map(|q| q * q).sum::<f64>() - 1.0).max(0.0);
    Estimate::new(
        value,
        Diagnostics {
            bandwidth: Some((grid.bandwidth_u, grid.bandwidth_v)),
            ..Default::default()
        },
    )
}
