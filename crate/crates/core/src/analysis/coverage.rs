//! Repeated simulate-and-fit study of posterior calibration.

use rayon::prelude::*;
use serde::Serialize;

use super::ice::{effect_summary, EffectSummary, HarmDirection, QUANTILE_LEVELS};
use crate::error::{Error, Result};
use crate::mcmc::run_chains;
use crate::model::{ChainConfig, ModelSpec, PriorSpec, Z1Storage};
use crate::rng::{derive_seed, seeded};
use crate::scm::{simulate, true_ice_law, ScmConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageOptions {
    pub replicates: usize,
    pub n: usize,
    pub model: ModelSpec,
    pub prior: PriorSpec,
    /// Chain settings shared by all replicates; the seed of replicate `r` is
    /// derived from `seed` and `r`.
    pub chains: ChainConfig,
    pub seed: u64,
}

impl CoverageOptions {
    pub fn new(replicates: usize, n: usize, chains: ChainConfig) -> Self {
        let seed = chains.seed;
        Self { replicates, n, model: ModelSpec::mixture(5), prior: PriorSpec::default(), chains, seed }
    }
}

/// One quantity of the coverage table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub quantity: String,
    pub truth: f64,
    pub average_posterior_mean: f64,
    /// Monte-Carlo standard error of the average posterior mean.
    pub mean_se: f64,
    /// Average over replicates of the posterior predictive quantile (for the
    /// probability row, equal to the average posterior mean).
    pub average_predictive: f64,
    /// Share of replicates whose 95% interval contains the truth.
    pub coverage: f64,
    pub coverage_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageTable {
    pub replicates: usize,
    pub succeeded: usize,
    /// Replicate index and error message of every failed fit.
    pub failures: Vec<(usize, String)>,
    pub rows: Vec<CoverageRow>,
}

/// Quantity names in table order.
pub fn coverage_quantities() -> Vec<String> {
    let mut q = vec!["P(ICE>0)".to_string()];
    q.extend(QUANTILE_LEVELS.iter().map(|l| format!("q{:02}", (l * 100.0).round() as u32)));
    q
}

impl CoverageTable {
    pub fn row(&self, quantity: &str) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.quantity == quantity)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,truth,average_posterior_mean,mean_se,average_predictive,coverage,coverage_se\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.quantity, r.truth, r.average_posterior_mean, r.mean_se, r.average_predictive, r.coverage, r.coverage_se
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn fit_replicate(scm: &ScmConfig, opts: &CoverageOptions, r: usize) -> Result<EffectSummary> {
    let mut rng = seeded(derive_seed(opts.seed, 2 * r as u64));
    let (ds, _) = simulate(scm, opts.n, &mut rng)?;
    let mut cc = opts.chains.clone();
    cc.seed = derive_seed(opts.seed, 2 * r as u64 + 1);
    cc.z1_storage = Z1Storage::None;
    let draws = run_chains(&ds, &opts.model, &opts.prior, &cc)?;
    effect_summary(&draws, HarmDirection::Positive)
}

/// Simulates `opts.replicates` datasets from `scm`, fits each, and compares
/// posterior means and central 95% intervals of P(ICE > 0) and the effect
/// quantiles with the true effect law.
///
/// Replicates run in parallel; results are aggregated in replicate order,
/// so the table depends only on the seed. Failed fits are listed and
/// excluded from the averages.
pub fn coverage_study(scm: &ScmConfig, opts: &CoverageOptions) -> Result<CoverageTable> {
    if opts.replicates < 2 {
        return Err(Error::Argument(format!("coverage needs at least 2 replicates, got {}", opts.replicates)));
    }
    scm.validate()?;
    let law = true_ice_law(scm)?;
    let mut truth = vec![1.0 - law.cdf(0.0)];
    for l in QUANTILE_LEVELS {
        truth.push(law.quantile(l)?);
    }

    let results: Vec<Result<EffectSummary>> =
        (0..opts.replicates).into_par_iter().map(|r| fit_replicate(scm, opts, r)).collect();
    let mut failures = Vec::new();
    let mut fits = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(s) => fits.push(s),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    if fits.is_empty() {
        return Err(Error::Numerical(format!("all {} replicate fits failed", opts.replicates)));
    }

    let s = fits.len() as f64;
    let rows = coverage_quantities()
        .into_iter()
        .enumerate()
        .map(|(k, quantity)| {
            let intervals: Vec<_> =
                fits.iter().map(|f| if k == 0 { f.prob_positive } else { f.quantiles[k - 1].interval }).collect();
            let means: Vec<f64> = intervals.iter().map(|i| i.mean).collect();
            let avg = means.iter().sum::<f64>() / s;
            let sd = if fits.len() > 1 { crate::stats::sample_sd(&means) } else { 0.0 };
            let predictive = if k == 0 {
                avg
            } else {
                fits.iter().map(|f| f.predictive_quantiles[k - 1]).sum::<f64>() / s
            };
            let c = intervals.iter().filter(|i| i.contains(truth[k])).count() as f64 / s;
            CoverageRow {
                quantity,
                truth: truth[k],
                average_posterior_mean: avg,
                mean_se: sd / s.sqrt(),
                average_predictive: predictive,
                coverage: c,
                coverage_se: (c * (1.0 - c) / s).sqrt(),
            }
        })
        .collect();
    Ok(CoverageTable { replicates: opts.replicates, succeeded: fits.len(), failures, rows })
}
