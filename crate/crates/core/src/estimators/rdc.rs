//! Randomized dependence coefficient: the largest canonical correlation
//! between random sinusoidal features of the empirical copula.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Diagnostics, Estimate, SamplePairs};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdcConfig {
    /// Random features per variable.
    pub k: usize,
    /// Projection scale.
    pub s: f64,
    pub seed: u64,
}

impl Default for RdcConfig {
    fn default() -> Self {
        Self {
            k: 20,
            s: 1.0 / 6.0,
            seed: 0,
        }
    }
}

/// Empirical CDF values `#{x_j ≤ x_i} / n`.
fn ecdf(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (j + 1) as f64 / n as f64;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

/// `sin` of random projections of `[ecdf(x), 1]`, column-centered.
fn features(values: &[f64], k: usize, s: f64, stream: &mut rng::StreamRng) -> DMatrix<f64> {
    let copula = ecdf(values);
    // Two input columns (copula and constant), projection scale s / 2.
    let scale = s / 2.0;
    let w: Vec<(f64, f64)> = (0..k)
        .map(|_| (scale * rng::standard_normal(stream), scale * rng::standard_normal(stream)))
        .collect();
    let mut m = DMatrix::from_fn(values.len(), k, |i, j| (copula[i] * w[j].0 + w[j].1).sin());
    for mut col in m.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    m
}

/// Orthonormal basis of the column space, dropping numerically null directions.
fn column_basis(m: DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.svd(true, false);
    let u = svd.u.expect("u requested");
    let max = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| max > 0.0 && svd.singular_values[i] > 1e-10 * max)
        .collect();
    DMatrix::from_fn(u.nrows(), keep.len(), |i, j| u[(i, keep[j])])
}

pub fn rdc(pairs: &SamplePairs, cfg: &RdcConfig) -> Result<Estimate> {
    if cfg.k == 0 || !(cfg.s > 0.0 && cfg.s.is_finite()) {
        return Err(Error::InvalidConfig("rdc needs k ≥ 1 and s > 0".into()));
    }
    if pairs.len() <= cfg.k {
        return Err(Error::InsufficientSamples {
            needed: cfg.k + 1,
            got: pairs.len(),
        });
    }
    let fx = features(pairs.u(), cfg.k, cfg.s, &mut rng::stream(cfg.seed, 0x4DC1));
    let fy = features(pairs.v(), cfg.k, cfg.s, &mut rng::stream(cfg.seed, 0x4DC2));
    let qx = column_basis(fx);
    let qy = column_basis(fy);
    if qx.ncols() == 0 || qy.ncols() == 0 {
        return Err(Error::ZeroVariance("rdc features".into()));
    }
    let cross = qx.transpose() * qy;
    let sv = cross.singular_values();
    let value = sv.max().clamp(0.0, 1.0);
    let mut sorted: Vec<f64> = sv.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Estimate::new(
        value,
        Diagnostics {
            singular_values: sorted,
            ..Default::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecdf_with_ties() {
        assert_eq!(ecdf(&[3.0, 1.0, 3.0, 2.0]), vec![1.0, 0.25, 1.0, 0.5]);
    }

    #[test]
    fn identical_variables_are_perfectly_dependent() {
        let mut r = rng::stream(1, 1);
        let u: Vec<f64> = (0..300).map(|_| rng::standard_normal(&mut r)).collect();
        let pairs = SamplePairs::new(u.clone(), u).unwrap();
        assert!(rdc(&pairs, &RdcConfig::default()).unwrap().value >= 0.99);
    }

    #[test]
    fn rank_invariance_is_exact() {
        let mut r = rng::stream(2, 1);
        let u: Vec<f64> = (0..400).map(|_| rng::standard_normal(&mut r)).collect();
        let v: Vec<f64> = u.iter().map(|x| x * x + rng::standard_normal(&mut r)).collect();
        let cfg = RdcConfig { seed: 5, ..Default::default() };
        let a = rdc(&SamplePairs::new(u.clone(), v.clone()).unwrap(), &cfg).unwrap().value;
        let b = rdc(&SamplePairs::new(u.iter().map(|x| x.exp()).collect(), v).unwrap(), &cfg)
            .unwrap()
            .value;
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn needs_more_samples_than_features() {
        let pairs = SamplePairs::new((0..20).map(f64::from).collect(), (0..20).map(f64::from).collect()).unwrap();
        assert!(rdc(&pairs, &RdcConfig::default()).is_err());
    }
}
