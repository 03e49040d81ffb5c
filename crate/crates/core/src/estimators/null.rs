use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Estimate, SamplePairs};
use crate::rng;

/// Distribution of an estimator under the permutation null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
    pub q50: f64,
    pub q95: f64,
    pub q99: f64,
}

impl NullSummary {
    fn from_values(mut values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std_dev = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| {
            // Linear interpolation between order statistics.
            let pos = p * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        };
        let (q50, q95, q99) = (q(0.5), q(0.95), q(0.99));
        values.shrink_to_fit();
        Self {
            values,
            mean,
            std_dev,
            q50,
            q95,
            q99,
        }
    }
}

/// Re-runs `estimator` on `permutations` copies of `pairs` with `v` shuffled.
pub fn null_calibration<F>(estimator: F, pairs: &SamplePairs, permutations: usize, seed: u64) -> Result<NullSummary>
where
    F: Fn(&SamplePairs) -> Result<Estimate>,
{
    if permutations == 0 {
        return Err(Error::InvalidConfig("permutation count must be at least 1".into()));
    }
    let mut r = rng::stream(seed, 0x9011);
    let values = (0..permutations)
        .map(|_| {
            let order = rng::permutation(&mut r, pairs.len());
            estimator(&pairs.with_v_permuted(&order)).map(|e| e.value)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NullSummary::from_values(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{pearson, Diagnostics};

    fn pearson_estimate(p: &SamplePairs) -> Result<Estimate> {
        Estimate::new(pearson(p)?, Diagnostics::default())
    }

    #[test]
    fn zero_permutations_rejected() {
        let pairs = SamplePairs::new(vec![1.0, 2.0, 3.0], vec![3.0, 1.0, 2.0]).unwrap();
        assert!(null_calibration(pearson_estimate, &pairs, 0, 1).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let u: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let v: Vec<f64> = (0..50).map(|i| (i as f64 * 0.11).cos()).collect();
        let pairs = SamplePairs::new(u, v).unwrap();
        let a = null_calibration(pearson_estimate, &pairs, 20, 4).unwrap();
        let b = null_calibration(pearson_estimate, &pairs, 20, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.q50 <= a.q95 && a.q95 <= a.q99);
    }
}
