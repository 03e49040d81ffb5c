use fairhgr::metrics::{gaussian_dominance_check, DominanceConfig};
use serde::Serialize;

use super::Context;
use crate::config::Section;
use crate::error::CliError;
use crate::output::OutputDir;

pub const KEYS: &[&str] = &["rhos", "n", "iterations"];
const FILES: &[&str] = &["gaussian_sweep.csv", "dominance.json", "dominance.csv"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params {
    pub rhos: Vec<f64>,
    pub n: usize,
    pub iterations: Option<usize>,
}

impl Params {
    pub fn from_section(sec: &Section) -> Result<Self, CliError> {
        sec.check_keys(KEYS)?;
        let rhos: Vec<f64> = sec
            .get_list("rhos")?
            .unwrap_or_else(|| vec![-0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8]);
        sec.ensure(!rhos.is_empty(), "rhos", "list is empty")?;
        sec.ensure(rhos.iter().all(|r| r.abs() < 1.0), "rhos", "every rho must satisfy |rho| < 1")?;
        let n = sec.get_or("n", 5000)?;
        sec.ensure(n >= 2, "n", "must be at least 2")?;
        let iterations = sec.get("iterations")?;
        sec.ensure(iterations != Some(0), "iterations", "must be at least 1")?;
        Ok(Self { rhos, n, iterations })
    }
}

/// Estimates next to their closed forms for a standard bivariate normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub rho: f64,
    pub chi2_nn: f64,
    pub chi2_analytic: f64,
    pub hgr_sq_nn: f64,
    pub hgr_sq_analytic: f64,
    pub mi_bound_est: f64,
    pub mi_bound_analytic: f64,
}

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let params = Params::from_section(&ctx.ini.section("gaussian-sweep"))?;
    let out = OutputDir::prepare(&ctx.out, ctx.overwrite, FILES)?;
    let mut cfg = DominanceConfig::default();
    if let Some(it) = params.iterations {
        for c in [&mut cfg.hgr_nn, &mut cfg.chi2_nn, &mut cfg.mine] {
            c.iterations = it;
        }
    }
    let report = gaussian_dominance_check(&params.rhos, params.n, &cfg, ctx.seed)?;
    let rows: Vec<SweepRow> = report
        .rows
        .iter()
        .map(|r| {
            let r2 = r.rho * r.rho;
            SweepRow {
                rho: r.rho,
                chi2_nn: r.chi2_est,
                chi2_analytic: r2 / (1.0 - r2),
                hgr_sq_nn: r.hgr_sq_est,
                hgr_sq_analytic: r2,
                mi_bound_est: r.mi_bound_est,
                // I = −½ log₂(1 − ρ²) bits, so 1 − 2^{−2I} = ρ².
                mi_bound_analytic: r2,
            }
        })
        .collect();
    println!("{:>6} {:>9} {:>9} {:>9} {:>9} {:>9}", "rho", "chi2_nn", "chi2", "hgr²_nn", "hgr²", "mi_bound");
    for r in &rows {
        println!(
            "{:>6.2} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            r.rho, r.chi2_nn, r.chi2_analytic, r.hgr_sq_nn, r.hgr_sq_analytic, r.mi_bound_est
        );
    }
    println!("t = {:.4}", report.t);
    out.write_csv("gaussian_sweep.csv", &rows)?;
    out.write_json("dominance.json", &report)?;
    out.write_with("dominance.csv", |w| Ok(report.write_csv(w)?))
}
