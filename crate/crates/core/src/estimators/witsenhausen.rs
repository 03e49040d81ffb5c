use crate::error::{Error, Result};
use crate::estimators::{Diagnostics, Estimate};
use crate::linalg::{singular_values, Matrix};

/// `Q(j, j') = P(j, j') / sqrt(P_U(j) · P_V(j'))` over rows and columns with
/// positive marginal mass.
#[derive(Debug, Clone, PartialEq)]
pub struct WitsenhausenMatrix {
    pub q: Matrix,
    pub p_u: Vec<f64>,
    pub p_v: Vec<f64>,
}

const SUM_TOL: f64 = 1e-9;

impl WitsenhausenMatrix {
    /// Validates a joint probability table and builds `Q`.
    pub fn from_joint(joint: &Matrix) -> Result<Self> {
        if joint.rows() == 0 || joint.cols() == 0 {
            return Err(Error::InvalidProbability("empty matrix".into()));
        }
        if let Some(bad) = joint.data().iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidProbability(format!("entry {bad} is not a probability")));
        }
        let total: f64 = joint.data().iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidProbability(format!("entries sum to {total}")));
        }
        Ok(Self::from_masses(joint))
    }

    /// Builds `Q` from nonnegative masses, normalizing them to sum to one.
    pub(crate) fn from_masses(joint: &Matrix) -> Self {
        let total: f64 = joint.data().iter().sum();
        let row_mass: Vec<f64> = (0..joint.rows()).map(|r| joint.row(r).iter().sum::<f64>() / total).collect();
        let col_mass: Vec<f64> = (0..joint.cols())
            .map(|c| (0..joint.rows()).map(|r| joint[(r, c)]).sum::<f64>() / total)
            .collect();
        let rows: Vec<usize> = (0..joint.rows()).filter(|&r| row_mass[r] > 0.0).collect();
        let cols: Vec<usize> = (0..joint.cols()).filter(|&c| col_mass[c] > 0.0).collect();
        let q = Matrix::from_fn(rows.len(), cols.len(), |i, j| {
            let (r, c) = (rows[i], cols[j]);
            joint[(r, c)] / total / (row_mass[r] * col_mass[c]).sqrt()
        });
        Self {
            q,
            p_u: rows.iter().map(|&r| row_mass[r]).collect(),
            p_v: cols.iter().map(|&c| col_mass[c]).collect(),
        }
    }

    /// Singular values of `Q`, largest first. The largest is always 1.
    pub fn singular_values(&self) -> Vec<f64> {
        singular_values(&self.q)
    }

    /// Second largest singular value, or 0 when `Q` has a single row or column.
    pub fn maximal_correlation(&self) -> (f64, Vec<f64>) {
        let sv = self.singular_values();
        let second = sv.get(1).copied().unwrap_or(0.0);
        (second, sv)
    }
}

/// Exact HGR maximal correlation of a discrete joint law, as the second
/// largest singular value of its normalized matrix `Q`.
pub fn witsenhausen_discrete(joint: &Matrix) -> Result<Estimate> {
    let w = WitsenhausenMatrix::from_joint(joint)?;
    let (value, sv) = w.maximal_correlation();
    Estimate::new(
        value,
        Diagnostics {
            singular_values: sv,
            ..Default::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn independent_table_is_zero() {
        let e = witsenhausen_discrete(&m(&[vec![0.25, 0.25], vec![0.25, 0.25]])).unwrap();
        assert!(e.value.abs() < 1e-15);
        assert!((e.diagnostics.singular_values[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_dependence_is_one() {
        let e = witsenhausen_discrete(&m(&[vec![0.5, 0.0], vec![0.0, 0.5]])).unwrap();
        assert!((e.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_two_by_two() {
        let e = witsenhausen_discrete(&m(&[vec![0.4, 0.1], vec![0.1, 0.4]])).unwrap();
        assert!((e.value - 0.6).abs() < 1e-14);
    }

    #[test]
    fn zero_marginals_are_dropped() {
        let w = WitsenhausenMatrix::from_joint(&m(&[vec![0.4, 0.0, 0.1], vec![0.0, 0.0, 0.0], vec![0.1, 0.0, 0.4]]))
            .unwrap();
        assert_eq!(w.q.shape(), (2, 2));
        assert!((w.maximal_correlation().0 - 0.6).abs() < 1e-14);
    }

    #[test]
    fn invalid_tables_rejected() {
        assert!(witsenhausen_discrete(&m(&[vec![0.5, 0.6]])).is_err());
        assert!(witsenhausen_discrete(&m(&[vec![1.5, -0.5]])).is_err());
        assert!(witsenhausen_discrete(&Matrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn single_row_has_no_second_singular_value() {
        let e = witsenhausen_discrete(&m(&[vec![0.3, 0.7]])).unwrap();
        assert_eq!(e.value, 0.0);
    }
}
