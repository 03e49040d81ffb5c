//! Datasets: deterministic generators and CSV ingestion.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::SamplePairs;
use crate::linalg::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    SyntheticScenario,
    Gaussian { rho: f64 },
    Pattern { name: String, sigma: f64 },
    Csv { path: PathBuf },
}

/// Regression examples `(x_i, s_i, y_i)` with a continuous sensitive attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: Matrix,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub provenance: Provenance,
    pub seed: u64,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        x: Matrix,
        s: Vec<f64>,
        y: Vec<f64>,
        provenance: Provenance,
        seed: u64,
    ) -> Result<Self> {
        let n = x.rows();
        if s.len() != n || y.len() != n {
            return Err(crate::error::shape_err("Dataset::new", format!("{n} rows"), format!("s={} y={}", s.len(), y.len())));
        }
        if feature_names.len() != x.cols() {
            return Err(crate::error::shape_err("Dataset::new", x.cols(), feature_names.len()));
        }
        if !x.is_finite() || !s.iter().chain(&y).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset".into()));
        }
        Ok(Self {
            feature_names,
            x,
            s,
            y,
            provenance,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    /// Rows in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let p = self.x.cols();
        let mut x = Vec::with_capacity(rows.len() * p);
        for &r in rows {
            x.extend_from_slice(self.x.row(r));
        }
        Dataset {
            feature_names: self.feature_names.clone(),
            x: Matrix::from_vec(rows.len(), p, x).expect("row-major subset"),
            s: rows.iter().map(|&r| self.s[r]).collect(),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            provenance: self.provenance.clone(),
            seed: self.seed,
        }
    }
}

/// Household-insurance toy scenario.
///
/// Age ~ N(40, 5²), Rooms = ⌊U(1, 5)⌋, ε ~ N(0, 1),
/// Surface = −0.25 (40 − Age)² + 120 + ε, BldgAge ~ N(30, 10²),
/// Y = 0.0005 · exp(0.07 Surface + 0.08 BldgAge + 0.4 Rooms) + 150.
/// Features are (Rooms, Surface, BldgAge); Age is the sensitive attribute and
/// is not a feature.
pub fn gen_synthetic_scenario(n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let mut age_rng = rng::stream(seed, 0xA6E);
    let mut rooms_rng = rng::stream(seed, 0x2003);
    let mut eps_rng = rng::stream(seed, 0xE95);
    let mut bldg_rng = rng::stream(seed, 0xB1D6);

    let mut x = Vec::with_capacity(3 * n);
    let mut s = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let age = rng::normal(&mut age_rng, 40.0, 5.0);
        let rooms = rng::uniform(&mut rooms_rng, 1.0, 5.0).floor();
        let eps = rng::standard_normal(&mut eps_rng);
        let surface = -0.25 * (40.0 - age).powi(2) + 120.0 + eps;
        let bldg_age = rng::normal(&mut bldg_rng, 30.0, 10.0);
        let target = 0.0005 * (0.07 * surface + 0.08 * bldg_age + 0.4 * rooms).exp() + 150.0;
        x.extend_from_slice(&[rooms, surface, bldg_age]);
        s.push(age);
        y.push(target);
    }
    Dataset::new(
        vec!["rooms".into(), "surface".into(), "bldg_age".into()],
        Matrix::from_vec(n, 3, x)?,
        s,
        y,
        Provenance::SyntheticScenario,
        seed,
    )
}

/// Standard bivariate normal with correlation `rho` (Cholesky construction).
pub fn gen_bivariate_gaussian(n: usize, rho: f64, seed: u64) -> Result<SamplePairs> {
    if rho.is_nan() || rho.abs() >= 1.0 {
        return Err(Error::InvalidConfig(format!("|rho| must be < 1, got {rho}")));
    }
    let mut a = rng::stream(seed, 0x6A05);
    let mut b = rng::stream(seed, 0x6A06);
    let c = (1.0 - rho * rho).sqrt();
    let (mut u, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let z1 = rng::standard_normal(&mut a);
        let z2 = rng::standard_normal(&mut b);
        u.push(z1);
        v.push(rho * z1 + c * z2);
    }
    SamplePairs::new(u, v)
}

/// Noiseless association patterns `v = F(u)` on `u ~ U(−10, 10)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    /// sin(u)
    Sine,
    /// u²
    Square,
    /// exp(−u²/2)
    GaussianPdf,
    /// sin(0.2^u)
    SinPow,
}

impl PatternKind {
    pub const ALL: [PatternKind; 4] = [Self::Sine, Self::Square, Self::GaussianPdf, Self::SinPow];

    pub fn apply(self, u: f64) -> f64 {
        match self {
            Self::Sine => u.sin(),
            Self::Square => u * u,
            Self::GaussianPdf => (-0.5 * u * u).exp(),
            Self::SinPow => 0.2f64.powf(u).sin(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sine => "sine",
            Self::Square => "square",
            Self::GaussianPdf => "gaussian_pdf",
            Self::SinPow => "sin_pow",
        }
    }
}

impl std::str::FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown pattern `{s}`")))
    }
}

/// `v = F(u) + N(0, σ²)` with `u ~ U(−10, 10)`.
pub fn gen_pattern(kind: PatternKind, n: usize, sigma: f64, seed: u64) -> Result<SamplePairs> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise sigma must be ≥ 0, got {sigma}")));
    }
    let mut ur = rng::stream(seed, 0x9A7);
    let mut nr = rng::stream(seed, 0x9A8);
    let u: Vec<f64> = (0..n).map(|_| rng::uniform(&mut ur, -10.0, 10.0)).collect();
    let v = u
        .iter()
        .map(|&x| kind.apply(x) + sigma * rng::standard_normal(&mut nr))
        .collect();
    SamplePairs::new(u, v)
}

/// Reads a numeric CSV with a header row; columns are addressed by name.
pub fn load_csv(path: &Path, feature_cols: &[String], sensitive_col: &str, target_col: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let feature_idx = feature_cols.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let s_idx = find(sensitive_col)?;
    let y_idx = find(target_col)?;

    let (mut x, mut s, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // Row numbers count data rows from 1, excluding the header.
        let row = i + 1;
        let cell = |idx: usize| -> Result<f64> {
            let raw = record.get(idx).unwrap_or("");
            raw.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::ParseCell {
                    row,
                    column: headers[idx].to_string(),
                    value: raw.to_string(),
                })
        };
        for &idx in &feature_idx {
            x.push(cell(idx)?);
        }
        s.push(cell(s_idx)?);
        y.push(cell(y_idx)?);
    }
    if y.is_empty() {
        return Err(Error::EmptyFile);
    }
    let n = y.len();
    Dataset::new(
        feature_cols.to_vec(),
        Matrix::from_vec(n, feature_cols.len(), x)?,
        s,
        y,
        Provenance::Csv {
            path: path.to_path_buf(),
        },
        0,
    )
}

/// Seed-shuffled train/test partition of sizes ⌈f·n⌉ and n − ⌈f·n⌉.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = dataset.len();
    let n_train = ((train_fraction * n as f64).ceil() as usize).min(n);
    let order = rng::permutation(&mut rng::stream(seed, 0x5917), n);
    Ok((dataset.subset(&order[..n_train]), dataset.subset(&order[n_train..])))
}
