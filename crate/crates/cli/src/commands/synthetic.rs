use std::collections::BTreeMap;

use fairhgr::data::{gen_synthetic_scenario, split, Dataset};
use fairhgr::fairtrain::{predict, train_fair, FairTrainConfig, FairnessMode, PenaltyKind, TrainedModel};
use fairhgr::metrics::{evaluate, EstimatorSuite, EvalReport};
use fairhgr::nn::LayerSpec;
use fairhgr::rng::derive_seed;
use serde::Serialize;

use super::{par_map, Context};
use crate::config::Section;
use crate::error::CliError;
use crate::output::OutputDir;

const FILES: &[&str] = &["synthetic.json", "synthetic.csv", "age_bins.csv"];
const FAIR_PENALTIES: [PenaltyKind; 4] = [PenaltyKind::HgrNn, PenaltyKind::Chi2Nn, PenaltyKind::Mine, PenaltyKind::Pearson];

/// Keys shared with `train`.
pub const TRAINING_KEYS: &[&str] = &["epochs", "batch_size", "learning_rate", "hidden", "train_fraction", "estimator_iterations"];

/// Predictor training and evaluation settings common to `synthetic` and `train`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Training {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub train_fraction: f64,
    pub estimator_iterations: Option<usize>,
}

impl Training {
    pub fn from_section(sec: &Section) -> Result<Self, CliError> {
        let t = Self {
            epochs: sec.get_or("epochs", 200)?,
            batch_size: sec.get_or("batch_size", 128)?,
            learning_rate: sec.get_or("learning_rate", 1e-3)?,
            hidden: sec.get_list("hidden")?.unwrap_or_else(|| vec![32, 32]),
            train_fraction: sec.get_or("train_fraction", 0.8)?,
            estimator_iterations: sec.get("estimator_iterations")?,
        };
        sec.ensure(t.epochs >= 1, "epochs", "must be at least 1")?;
        sec.ensure(t.batch_size >= 2, "batch_size", "must be at least 2")?;
        sec.ensure(t.learning_rate > 0.0, "learning_rate", "must be positive")?;
        sec.ensure(t.hidden.iter().all(|h| *h > 0), "hidden", "widths must be positive")?;
        sec.ensure(
            t.train_fraction > 0.0 && t.train_fraction < 1.0,
            "train_fraction",
            "must lie strictly between 0 and 1",
        )?;
        sec.ensure(t.estimator_iterations != Some(0), "estimator_iterations", "must be at least 1")?;
        Ok(t)
    }

    pub fn config(&self, n_features: usize, mode: FairnessMode, penalty: PenaltyKind, lambda: f64, seed: u64) -> FairTrainConfig {
        let mut cfg = FairTrainConfig::new(n_features, mode, penalty, lambda, seed);
        cfg.epochs = self.epochs;
        cfg.batch_size = self.batch_size;
        cfg.learning_rate = self.learning_rate;
        cfg.predictor_layers = LayerSpec::stack(n_features, &self.hidden, 1);
        cfg
    }

    /// Estimator suite for a test split of `n_test` rows; neural batches
    /// shrink to fit small splits.
    pub fn suite(&self, seed: u64, n_test: usize) -> EstimatorSuite {
        let mut suite = EstimatorSuite::new(seed);
        for cfg in [&mut suite.hgr_nn, &mut suite.chi2_nn] {
            cfg.batch_size = cfg.batch_size.min(n_test);
            if let Some(it) = self.estimator_iterations {
                cfg.iterations = it;
            }
        }
        suite
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params {
    pub n: usize,
    pub modes: Vec<FairnessMode>,
    pub penalties: Vec<PenaltyKind>,
    /// λ per (mode, penalty), keyed `dp.hgr_nn` and so on.
    pub lambdas: BTreeMap<String, f64>,
    pub age_bins: usize,
    pub training: Training,
}

fn short(mode: FairnessMode) -> &'static str {
    match mode {
        FairnessMode::DemographicParity => "dp",
        FairnessMode::EqualizedResiduals => "er",
    }
}

fn default_lambda(mode: FairnessMode, penalty: PenaltyKind) -> f64 {
    match (mode, penalty) {
        (FairnessMode::DemographicParity, PenaltyKind::HgrNn) => 4.0,
        (_, PenaltyKind::Chi2Nn | PenaltyKind::Mine) => 10.0,
        _ => 1.0,
    }
}

fn lambda_keys() -> Vec<String> {
    [FairnessMode::DemographicParity, FairnessMode::EqualizedResiduals]
        .into_iter()
        .flat_map(|m| FAIR_PENALTIES.into_iter().map(move |p| format!("lambda.{}.{}", short(m), p.name())))
        .collect()
}

impl Params {
    pub fn from_section(sec: &Section) -> Result<Self, CliError> {
        let lambda_keys = lambda_keys();
        let mut known: Vec<&str> = vec!["n", "modes", "penalties", "age_bins"];
        known.extend_from_slice(TRAINING_KEYS);
        known.extend(lambda_keys.iter().map(String::as_str));
        sec.check_keys(&known)?;

        let n = sec.get_or("n", 10_000)?;
        let modes: Vec<FairnessMode> = sec
            .get_list("modes")?
            .unwrap_or_else(|| vec![FairnessMode::DemographicParity, FairnessMode::EqualizedResiduals]);
        sec.ensure(!modes.is_empty(), "modes", "list is empty")?;
        let penalties: Vec<PenaltyKind> = sec.get_list("penalties")?.unwrap_or_else(|| FAIR_PENALTIES.to_vec());
        sec.ensure(!penalties.contains(&PenaltyKind::None), "penalties", "the standard model is always trained; list only fair penalties")?;
        let mut lambdas = BTreeMap::new();
        for &m in &modes {
            for &p in &penalties {
                let key = format!("lambda.{}.{}", short(m), p.name());
                let value: f64 = sec.get_or(&key, default_lambda(m, p))?;
                sec.ensure(value >= 0.0 && value.is_finite(), &key, "must be a finite λ ≥ 0")?;
                lambdas.insert(format!("{}.{}", short(m), p.name()), value);
            }
        }
        let age_bins = sec.get_or("age_bins", 10)?;
        sec.ensure(age_bins >= 1, "age_bins", "must be at least 1")?;
        Ok(Self {
            n,
            modes,
            penalties,
            lambdas,
            age_bins,
            training: Training::from_section(sec)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variant {
    pub name: String,
    pub penalty: PenaltyKind,
    pub lambda: f64,
    pub report: EvalReport,
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    variant: &'a str,
    mode: &'static str,
    penalty: &'static str,
    lambda: f64,
    mse: f64,
    hgr_nn: f64,
    hgr_kde: f64,
    rdc: f64,
    chi2_kde: f64,
    chi2_nn: f64,
    fairquant: f64,
}

/// Mean prediction and residual per equal-width age bin of the test split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgeBinRow {
    pub variant: String,
    pub age_low: f64,
    pub age_high: f64,
    pub count: usize,
    pub mean_prediction: f64,
    pub mean_residual: f64,
}

pub fn age_bins(variant: &str, test: &Dataset, yhat: &[f64], bins: usize) -> Vec<AgeBinRow> {
    let lo = test.s.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = test.s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut acc = vec![(0usize, 0.0, 0.0); bins];
    for ((s, p), y) in test.s.iter().zip(yhat).zip(&test.y) {
        let b = if width > 0.0 { (((s - lo) / width) as usize).min(bins - 1) } else { 0 };
        acc[b].0 += 1;
        acc[b].1 += p;
        acc[b].2 += p - y;
    }
    acc.into_iter()
        .enumerate()
        .filter(|(_, (count, _, _))| *count > 0)
        .map(|(b, (count, sp, sr))| AgeBinRow {
            variant: variant.to_string(),
            age_low: lo + b as f64 * width,
            age_high: lo + (b + 1) as f64 * width,
            count,
            mean_prediction: sp / count as f64,
            mean_residual: sr / count as f64,
        })
        .collect()
}

#[derive(Serialize)]
struct Output<'a> {
    seed: u64,
    params: &'a Params,
    variants: &'a [Variant],
}

struct Job {
    mode: FairnessMode,
    penalty: PenaltyKind,
    lambda: f64,
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let params = Params::from_section(&ctx.ini.section("synthetic"))?;
    let out = OutputDir::prepare(&ctx.out, ctx.overwrite, FILES)?;
    let data = gen_synthetic_scenario(params.n, ctx.seed)?;
    let (train, test) = split(&data, params.training.train_fraction, ctx.seed)?;

    let mut jobs = vec![Job {
        mode: FairnessMode::DemographicParity,
        penalty: PenaltyKind::None,
        lambda: 0.0,
    }];
    for &mode in &params.modes {
        for &penalty in &params.penalties {
            let lambda = params.lambdas[&format!("{}.{}", short(mode), penalty.name())];
            jobs.push(Job { mode, penalty, lambda });
        }
    }
    let n_features = data.n_features();
    let models = par_map(&jobs, |job| -> Result<TrainedModel, CliError> {
        let cfg = params.training.config(n_features, job.mode, job.penalty, job.lambda, ctx.seed);
        Ok(train_fair(&train, &cfg)?)
    });
    let models = models.into_iter().collect::<Result<Vec<_>, _>>()?;

    let suite = params.training.suite(derive_seed(ctx.seed, 0xE7A1), test.len());
    let mut variants = Vec::new();
    let mut bins = Vec::new();
    for (job, model) in jobs.iter().zip(&models) {
        // The standard model is evaluated under every requested mode.
        let modes = if job.penalty == PenaltyKind::None { params.modes.clone() } else { vec![job.mode] };
        for mode in modes {
            let name = if job.penalty == PenaltyKind::None {
                format!("standard.{}", short(mode))
            } else {
                format!("fair_{}.{}", job.penalty.name(), short(mode))
            };
            let report = evaluate(model, &test, mode, &suite)?;
            println!(
                "{name:<20} mse {:>9.3}  hgr_nn {:.3}  hgr_kde {:.3}  fairquant {:.3}",
                report.mse, report.hgr_nn, report.hgr_kde, report.fairquant
            );
            variants.push(Variant {
                name,
                penalty: job.penalty,
                lambda: job.lambda,
                report,
            });
        }
        let label = if job.penalty == PenaltyKind::None {
            "standard".to_string()
        } else {
            format!("fair_{}.{}", job.penalty.name(), short(job.mode))
        };
        bins.extend(age_bins(&label, &test, &predict(model, &test.x)?, params.age_bins));
    }

    let rows: Vec<CsvRow> = variants
        .iter()
        .map(|v| CsvRow {
            variant: &v.name,
            mode: v.report.mode.name(),
            penalty: v.penalty.name(),
            lambda: v.lambda,
            mse: v.report.mse,
            hgr_nn: v.report.hgr_nn,
            hgr_kde: v.report.hgr_kde,
            rdc: v.report.rdc,
            chi2_kde: v.report.chi2_kde,
            chi2_nn: v.report.chi2_nn,
            fairquant: v.report.fairquant,
        })
        .collect();
    out.write_csv("synthetic.csv", &rows)?;
    out.write_csv("age_bins.csv", &bins)?;
    out.write_json(
        "synthetic.json",
        &Output {
            seed: ctx.seed,
            params: &params,
            variants: &variants,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use fairhgr::linalg::Matrix;

    #[test]
    fn age_bins_partition_rows() {
        let s: Vec<f64> = (0..10).map(f64::from).collect();
        let y = vec![1.0; 10];
        let d = Dataset::new(
            vec!["x".into()],
            Matrix::from_vec(10, 1, vec![0.0; 10]).unwrap(),
            s.clone(),
            y,
            fairhgr::data::Provenance::SyntheticScenario,
            0,
        )
        .unwrap();
        let rows = age_bins("v", &d, &s, 3);
        assert_eq!(rows.iter().map(|r| r.count).sum::<usize>(), 10);
        assert_eq!(rows[0].count, 3);
        assert_eq!(rows[0].mean_prediction, 1.0);
        assert_eq!(rows[0].mean_residual, 0.0);
        assert_eq!(rows[2].age_high, 9.0);
    }

    #[test]
    fn default_lambdas_cover_modes_and_penalties() {
        let ini = crate::config::Ini::parse("[synthetic]\nlambda.er.mine = 3\n").unwrap();
        let p = Params::from_section(&ini.section("synthetic")).unwrap();
        assert_eq!(p.lambdas.len(), 8);
        assert_eq!(p.lambdas["er.mine"], 3.0);
        assert_eq!(p.lambdas["dp.hgr_nn"], 4.0);
    }

    #[test]
    fn rejects_unknown_lambda_key() {
        let ini = crate::config::Ini::parse("[synthetic]\nlambda.eo.mine = 3\n").unwrap();
        let err = Params::from_section(&ini.section("synthetic")).unwrap_err();
        assert!(err.to_string().contains("lambda.eo.mine"));
    }
}
