//! Posterior predictive checks of the outcome distribution per stratum.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ice::subsample;
use super::kde::{grid_for, kde, silverman_bandwidth};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lmm::dichotomize;
use crate::mcmc::PosteriorDraws;
use crate::rng::{derive_seed, seeded};
use crate::stats::{percentile, std_normal_draw};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpcOptions {
    /// Retained iterations used for replicates; ignored with `all_iterations`.
    pub replicates: usize,
    pub all_iterations: bool,
    /// Confounders whose dichotomized values split the strata, in addition
    /// to exposure.
    pub strata: Vec<String>,
    pub min_stratum_size: usize,
    pub grid_points: usize,
    pub seed: u64,
}

impl Default for PpcOptions {
    fn default() -> Self {
        Self { replicates: 500, all_iterations: false, strata: Vec::new(), min_stratum_size: 10, grid_points: 128, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCheck {
    pub label: String,
    pub exposed: bool,
    pub n: usize,
    /// Bandwidth of the observed-data KDE, shared by every replicate KDE.
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub observed: Vec<f64>,
    pub predictive_mean: Vec<f64>,
    pub band_lo: Vec<f64>,
    pub band_hi: Vec<f64>,
    /// Share of grid points where the observed KDE lies inside the band.
    pub inside_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcReport {
    pub replicates: usize,
    pub strata: Vec<StratumCheck>,
    /// Warnings for strata that were skipped.
    pub warnings: Vec<String>,
}

impl PpcReport {
    pub fn stratum(&self, label: &str) -> Option<&StratumCheck> {
        self.strata.iter().find(|s| s.label == label)
    }

    /// Smallest inside fraction over all strata.
    pub fn worst_inside_fraction(&self) -> f64 {
        self.strata.iter().map(|s| s.inside_fraction).fold(1.0, f64::min)
    }

    /// Long-format CSV: one row per stratum and grid point.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("stratum,y,observed,predictive_mean,band_lo,band_hi\n");
        for s in &self.strata {
            for g in 0..s.grid.len() {
                out.push_str(&format!(
                    "\"{}\",{},{},{},{},{}\n",
                    s.label, s.grid[g], s.observed[g], s.predictive_mean[g], s.band_lo[g], s.band_hi[g]
                ));
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Simulates replicate outcome vectors for the observed covariates and
/// exposures and compares their KDEs to the observed one per stratum.
///
/// Each replicate draws fresh latent effects, heterogeneity effects and
/// residuals from one retained iteration. Strata cross exposure with the
/// dichotomized `opts.strata` confounders; strata smaller than
/// `opts.min_stratum_size` are skipped with a warning.
pub fn posterior_predictive_check(draws: &PosteriorDraws, ds: &Dataset, opts: &PpcOptions) -> Result<PpcReport> {
    if draws.layout.fixed.as_slice() != ds.names() {
        return Err(Error::Argument(format!(
            "draws were fitted with confounders [{}] but the dataset has [{}]",
            draws.layout.fixed.join(","),
            ds.names().join(",")
        )));
    }
    let n = ds.len();
    let het: Vec<Vec<f64>> = draws
        .layout
        .het
        .iter()
        .map(|h| dichotomize(ds, h).map(|d| d.values))
        .collect::<Result<_>>()?;
    let splits = opts.strata.iter().map(|s| dichotomize(ds, s)).collect::<Result<Vec<_>>>()?;

    let mut groups: BTreeMap<(bool, Vec<u8>), Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let key = splits.iter().map(|d| d.values[i] as u8).collect();
        groups.entry((ds.a()[i], key)).or_default().push(i);
    }
    let label = |a: bool, key: &[u8]| {
        let mut s = format!("a={}", a as u8);
        for (d, v) in splits.iter().zip(key) {
            s.push_str(&format!(",{}={v}", d.label));
        }
        s
    };
    let mut warnings = Vec::new();
    let mut cells = Vec::new();
    // Every combination is listed so that empty strata are reported too.
    for a in [false, true] {
        for bits in 0..(1usize << splits.len()) {
            let key: Vec<u8> = (0..splits.len()).map(|j| ((bits >> j) & 1) as u8).collect();
            let rows = groups.remove(&(a, key.clone())).unwrap_or_default();
            let name = label(a, &key);
            if rows.len() < opts.min_stratum_size {
                warnings.push(format!("stratum {name}: {} observations, skipped", rows.len()));
                continue;
            }
            let obs: Vec<f64> = rows.iter().map(|&i| ds.y()[i]).collect();
            let h = silverman_bandwidth(&obs);
            let grid = grid_for(&obs, h, opts.grid_points);
            let observed = kde(&obs, h, &grid);
            cells.push((name, a, rows, h, grid, observed));
        }
    }

    let all_rows: Vec<&[f64]> = draws.rows().collect();
    if all_rows.is_empty() {
        return Err(Error::InsufficientDraws("no retained iterations".into()));
    }
    let picks = if opts.all_iterations { (0..all_rows.len()).collect() } else { subsample(all_rows.len(), opts.replicates.max(1)) };
    let layout = &draws.layout;
    let curves: Vec<Vec<Vec<f64>>> = picks
        .par_iter()
        .map(|&r| {
            let row = all_rows[r];
            let mut rng = seeded(derive_seed(opts.seed, r as u64));
            let effect = layout.effect_mixture(row)?;
            let resid = layout.residual_mixture(row)?;
            let beta = layout.beta(row);
            let omega = layout.omega(row);
            let y: Vec<f64> = (0..n)
                .map(|i| {
                    let rec = ds.record(i);
                    let mut v = beta[0] + (0..ds.n_confounders()).map(|j| beta[j + 1] * rec.confounder(j)).sum::<f64>();
                    if rec.a {
                        v += effect.sample(&mut rng);
                    }
                    for (col, om) in het.iter().zip(omega) {
                        if col[i] == 1.0 {
                            v += om * std_normal_draw(&mut rng);
                        }
                    }
                    v + resid.sample(&mut rng)
                })
                .collect();
            Ok(cells
                .iter()
                .map(|(_, _, rows, h, grid, _)| {
                    let rep: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
                    kde(&rep, *h, grid)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let strata = cells
        .into_iter()
        .enumerate()
        .map(|(c, (label, exposed, rows, bandwidth, grid, observed))| {
            let g = grid.len();
            let mut mean = vec![0.0; g];
            let mut lo = vec![0.0; g];
            let mut hi = vec![0.0; g];
            for k in 0..g {
                let column: Vec<f64> = curves.iter().map(|cv| cv[c][k]).collect();
                mean[k] = column.iter().sum::<f64>() / column.len() as f64;
                lo[k] = percentile(&column, 0.025);
                hi[k] = percentile(&column, 0.975);
            }
            let inside = (0..g).filter(|&k| lo[k] <= observed[k] && observed[k] <= hi[k]).count();
            StratumCheck {
                label,
                exposed,
                n: rows.len(),
                bandwidth,
                inside_fraction: inside as f64 / g as f64,
                grid,
                observed,
                predictive_mean: mean,
                band_lo: lo,
                band_hi: hi,
            }
        })
        .collect();
    Ok(PpcReport { replicates: picks.len(), strata, warnings })
}
