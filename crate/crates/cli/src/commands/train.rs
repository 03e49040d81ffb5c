use std::path::PathBuf;

use fairhgr::data::{load_csv, split};
use fairhgr::fairtrain::{train_fair, FairnessMode, PenaltyKind};
use fairhgr::metrics::{evaluate, EvalReport};
use fairhgr::rng::derive_seed;
use serde::Serialize;

use super::synthetic::{Training, TRAINING_KEYS};
use super::{par_map, Context, MeanStd};
use crate::config::Section;
use crate::error::CliError;
use crate::output::OutputDir;

const OWN_KEYS: &[&str] = &["csv", "features", "sensitive", "target", "mode", "penalty", "lambda", "repetitions"];
const FILES: &[&str] = &["train.json", "train.csv"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params {
    pub csv: PathBuf,
    pub features: Vec<String>,
    pub sensitive: String,
    pub target: String,
    pub mode: FairnessMode,
    pub penalty: PenaltyKind,
    pub lambda: f64,
    pub repetitions: usize,
    pub training: Training,
}

impl Params {
    pub fn from_section(sec: &Section) -> Result<Self, CliError> {
        let mut known = OWN_KEYS.to_vec();
        known.extend_from_slice(TRAINING_KEYS);
        sec.check_keys(&known)?;
        let features: Vec<String> = sec.get_list("features")?.unwrap_or_default();
        sec.ensure(!features.is_empty(), "features", "at least one feature column is required")?;
        let lambda: f64 = sec.get_or("lambda", 1.0)?;
        sec.ensure(lambda >= 0.0 && lambda.is_finite(), "lambda", "must be a finite λ ≥ 0")?;
        let repetitions = sec.get_or("repetitions", 5)?;
        sec.ensure(repetitions >= 1, "repetitions", "must be at least 1")?;
        Ok(Self {
            csv: sec.require("csv")?,
            features,
            sensitive: sec.require("sensitive")?,
            target: sec.require("target")?,
            mode: sec.get_or("mode", FairnessMode::DemographicParity)?,
            penalty: sec.get_or("penalty", PenaltyKind::HgrNn)?,
            lambda,
            repetitions,
            training: Training::from_section(sec)?,
        })
    }
}

#[derive(Debug, Serialize)]
struct Summary {
    mse: MeanStd,
    hgr_nn: MeanStd,
    hgr_kde: MeanStd,
    rdc: MeanStd,
    chi2_kde: MeanStd,
    chi2_nn: MeanStd,
    fairquant: MeanStd,
}

impl Summary {
    fn of(reports: &[EvalReport]) -> Self {
        let col = |f: fn(&EvalReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
        Self {
            mse: col(|r| r.mse),
            hgr_nn: col(|r| r.hgr_nn),
            hgr_kde: col(|r| r.hgr_kde),
            rdc: col(|r| r.rdc),
            chi2_kde: col(|r| r.chi2_kde),
            chi2_nn: col(|r| r.chi2_nn),
            fairquant: col(|r| r.fairquant),
        }
    }
}

#[derive(Serialize)]
struct Output<'a> {
    seed: u64,
    params: &'a Params,
    reports: &'a [EvalReport],
    summary: Summary,
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let params = Params::from_section(&ctx.ini.section("train"))?;
    let data = load_csv(&params.csv, &params.features, &params.sensitive, &params.target)?;
    let out = OutputDir::prepare(&ctx.out, ctx.overwrite, FILES)?;
    let reps: Vec<u64> = (0..params.repetitions as u64).map(|r| derive_seed(ctx.seed, r)).collect();
    let reports = par_map(&reps, |&rep_seed| -> Result<EvalReport, CliError> {
        let (train, test) = split(&data, params.training.train_fraction, rep_seed)?;
        let cfg = params
            .training
            .config(data.n_features(), params.mode, params.penalty, params.lambda, rep_seed);
        let model = train_fair(&train, &cfg)?;
        Ok(evaluate(&model, &test, params.mode, &params.training.suite(derive_seed(rep_seed, 0xE7A1), test.len()))?)
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = Summary::of(&reports);
    for (name, m) in [
        ("mse", summary.mse),
        ("hgr_nn", summary.hgr_nn),
        ("hgr_kde", summary.hgr_kde),
        ("rdc", summary.rdc),
        ("chi2_kde", summary.chi2_kde),
        ("chi2_nn", summary.chi2_nn),
        ("fairquant", summary.fairquant),
    ] {
        println!("{name:<10} {:>10.4} ({:.4})", m.mean, m.std);
    }
    out.write_with("train.csv", |w| Ok(EvalReport::write_csv(&reports, w)?))?;
    out.write_json(
        "train.json",
        &Output {
            seed: ctx.seed,
            params: &params,
            reports: &reports,
            summary,
        },
    )
}
