use std::path::PathBuf;
use std::str::FromStr;

use fairhgr::data::{gen_bivariate_gaussian, gen_pattern, load_csv, PatternKind};
use fairhgr::estimators::{
    chi2_kde, chi2_nn, hgr_kde, hgr_nn, mine, pearson, rdc, Diagnostics, Estimate, KdeConfig, NeuralEstimatorConfig,
    RdcConfig, SamplePairs,
};
use fairhgr::rng::derive_seed;
use serde::Serialize;

use super::Context;
use crate::config::Section;
use crate::error::CliError;

pub const KEYS: &[&str] = &["source", "n", "rho", "pattern", "sigma", "csv", "u", "v", "estimators", "iterations"];
const FILES: &[&str] = &["estimate.json"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorName {
    HgrNn,
    Chi2Nn,
    Mine,
    HgrKde,
    Chi2Kde,
    Rdc,
    Pearson,
}

impl EstimatorName {
    pub const ALL: [Self; 7] = [
        Self::HgrNn,
        Self::Chi2Nn,
        Self::Mine,
        Self::HgrKde,
        Self::Chi2Kde,
        Self::Rdc,
        Self::Pearson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::HgrNn => "hgr_nn",
            Self::Chi2Nn => "chi2_nn",
            Self::Mine => "mine",
            Self::HgrKde => "hgr_kde",
            Self::Chi2Kde => "chi2_kde",
            Self::Rdc => "rdc",
            Self::Pearson => "pearson",
        }
    }

    /// Runs the estimator; `iterations` overrides the neural training budget
    /// and neural batches shrink to fit small samples.
    pub fn run(self, pairs: &SamplePairs, seed: u64, iterations: Option<usize>) -> fairhgr::Result<Estimate> {
        let neural = |mut cfg: NeuralEstimatorConfig| {
            cfg.batch_size = cfg.batch_size.min(pairs.len());
            match iterations {
                Some(it) => cfg.with_iterations(it),
                None => cfg,
            }
        };
        match self {
            Self::HgrNn => hgr_nn(pairs, &neural(NeuralEstimatorConfig::hgr_default(seed))),
            Self::Chi2Nn => chi2_nn(pairs, &neural(NeuralEstimatorConfig::chi2_default(seed))),
            Self::Mine => mine(pairs, &neural(NeuralEstimatorConfig::mine_default(seed))),
            Self::HgrKde => hgr_kde(pairs, &KdeConfig::default()),
            Self::Chi2Kde => chi2_kde(pairs, &KdeConfig::default()),
            Self::Rdc => rdc(pairs, &RdcConfig { seed, ..Default::default() }),
            Self::Pearson => Ok(Estimate {
                value: pearson(pairs)?,
                diagnostics: Diagnostics::default(),
            }),
        }
    }
}

impl FromStr for EstimatorName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown estimator `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Gaussian { rho: f64 },
    Pattern { pattern: String, sigma: f64 },
    Csv { path: PathBuf, u: String, v: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params {
    pub source: Source,
    pub n: usize,
    pub estimators: Vec<EstimatorName>,
    pub iterations: Option<usize>,
}

impl Params {
    pub fn from_section(sec: &Section) -> Result<Self, CliError> {
        sec.check_keys(KEYS)?;
        let source = match sec.get_or("source", "gaussian".to_string())?.as_str() {
            "gaussian" => {
                let rho: f64 = sec.get_or("rho", 0.5)?;
                sec.ensure(rho.abs() < 1.0, "rho", "must satisfy |rho| < 1")?;
                Source::Gaussian { rho }
            }
            "pattern" => {
                let pattern: String = sec.get_or("pattern", "sine".to_string())?;
                sec.ensure(pattern.parse::<PatternKind>().is_ok(), "pattern", "unknown pattern")?;
                let sigma: f64 = sec.get_or("sigma", 0.0)?;
                sec.ensure(sigma >= 0.0, "sigma", "must be ≥ 0")?;
                Source::Pattern { pattern, sigma }
            }
            "csv" => Source::Csv {
                path: sec.require("csv")?,
                u: sec.require("u")?,
                v: sec.require("v")?,
            },
            other => return Err(CliError::Config(format!("[estimate] key `source`: unknown source `{other}`"))),
        };
        let n = sec.get_or("n", 2000)?;
        sec.ensure(n >= 2, "n", "must be at least 2")?;
        let estimators = sec.get_list("estimators")?.unwrap_or_else(|| EstimatorName::ALL.to_vec());
        sec.ensure(!estimators.is_empty(), "estimators", "list is empty")?;
        let iterations = sec.get("iterations")?;
        sec.ensure(iterations != Some(0), "iterations", "must be at least 1")?;
        Ok(Self {
            source,
            n,
            estimators,
            iterations,
        })
    }
}

#[derive(Debug, Serialize)]
struct Row {
    estimator: &'static str,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    flags: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Output<'a> {
    seed: u64,
    params: &'a Params,
    n: usize,
    estimates: Vec<Row>,
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let params = Params::from_section(&ctx.ini.section("estimate"))?;
    let out = crate::output::OutputDir::prepare(&ctx.out, ctx.overwrite, FILES)?;
    let pairs = match &params.source {
        Source::Gaussian { rho } => gen_bivariate_gaussian(params.n, *rho, ctx.seed)?,
        Source::Pattern { pattern, sigma } => gen_pattern(pattern.parse()?, params.n, *sigma, ctx.seed)?,
        Source::Csv { path, u, v } => {
            let d = load_csv(path, std::slice::from_ref(u), v, v)?;
            SamplePairs::new(d.x.column(0), d.s)?
        }
    };
    let mut rows = Vec::new();
    println!("{:<10} {:>10}", "estimator", "value");
    for (i, e) in params.estimators.iter().enumerate() {
        let est = e.run(&pairs, derive_seed(ctx.seed, 0xE57 + i as u64), params.iterations)?;
        println!("{:<10} {:>10.4}", e.name(), est.value);
        rows.push(Row {
            estimator: e.name(),
            value: est.value,
            iterations: est.diagnostics.iterations,
            flags: est.diagnostics.flags,
        });
    }
    out.write_json(
        "estimate.json",
        &Output {
            seed: ctx.seed,
            params: &params,
            n: pairs.len(),
            estimates: rows,
        },
    )
}
