use fairhgr::data::{gen_pattern, PatternKind};
use fairhgr::rng::derive_seed;
use serde::Serialize;

use super::estimate::EstimatorName;
use super::{par_map, Context};
use crate::config::Section;
use crate::error::CliError;
use crate::output::OutputDir;

pub const KEYS: &[&str] = &["n", "sigmas", "patterns", "estimators", "iterations"];
const FILES: &[&str] = &["bench_patterns.json", "bench_patterns.csv"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params {
    pub n: usize,
    pub sigmas: Vec<f64>,
    pub patterns: Vec<String>,
    pub estimators: Vec<EstimatorName>,
    pub iterations: Option<usize>,
}

impl Params {
    pub fn from_section(sec: &Section) -> Result<Self, CliError> {
        sec.check_keys(KEYS)?;
        let n = sec.get_or("n", 500)?;
        sec.ensure(n >= 2, "n", "must be at least 2")?;
        let sigmas: Vec<f64> = sec.get_list("sigmas")?.unwrap_or_else(|| vec![0.0, 1.0, 2.0, 3.0]);
        sec.ensure(sigmas.iter().all(|s| *s >= 0.0), "sigmas", "noise levels must be ≥ 0")?;
        let patterns: Vec<String> = sec
            .get_list("patterns")?
            .unwrap_or_else(|| PatternKind::ALL.iter().map(|p| p.name().to_string()).collect());
        sec.ensure(
            patterns.iter().all(|p| p.parse::<PatternKind>().is_ok()),
            "patterns",
            "unknown pattern name",
        )?;
        let estimators = sec
            .get_list("estimators")?
            .unwrap_or_else(|| vec![EstimatorName::HgrNn, EstimatorName::HgrKde, EstimatorName::Rdc]);
        let iterations = sec.get("iterations")?;
        sec.ensure(iterations != Some(0), "iterations", "must be at least 1")?;
        Ok(Self {
            n,
            sigmas,
            patterns,
            estimators,
            iterations,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub pattern: String,
    pub sigma: f64,
    pub estimator: &'static str,
    pub value: f64,
}

#[derive(Serialize)]
struct Output<'a> {
    seed: u64,
    params: &'a Params,
    rows: &'a [Row],
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let params = Params::from_section(&ctx.ini.section("bench-patterns"))?;
    let out = OutputDir::prepare(&ctx.out, ctx.overwrite, FILES)?;
    let cells: Vec<(usize, usize)> = (0..params.patterns.len())
        .flat_map(|p| (0..params.sigmas.len()).map(move |s| (p, s)))
        .collect();
    let results = par_map(&cells, |&(p, s)| -> Result<Vec<Row>, CliError> {
        let kind: PatternKind = params.patterns[p].parse()?;
        let sigma = params.sigmas[s];
        let cell_seed = derive_seed(ctx.seed, (p * 1000 + s) as u64);
        let pairs = gen_pattern(kind, params.n, sigma, cell_seed)?;
        params
            .estimators
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let value = e.run(&pairs, derive_seed(cell_seed, i as u64 + 1), params.iterations)?.value;
                Ok(Row {
                    pattern: kind.name().to_string(),
                    sigma,
                    estimator: e.name(),
                    value,
                })
            })
            .collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    for r in &rows {
        println!("{:<13} σ={:<4} {:<8} {:.4}", r.pattern, r.sigma, r.estimator, r.value);
    }
    out.write_csv("bench_patterns.csv", &rows)?;
    out.write_json(
        "bench_patterns.json",
        &Output {
            seed: ctx.seed,
            params: &params,
            rows: &rows,
        },
    )
}
