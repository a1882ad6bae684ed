//! Posterior summaries of the individual causal effect distribution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kde::{grid_for, kde, silverman_bandwidth, DensityGrid, GRID_POINTS};
use crate::error::{Error, Result};
use crate::mcmc::PosteriorDraws;
use crate::mixture::GaussianMixture;
use crate::stats::{percentile, summarize};

/// Quantile levels reported for the effect distribution.
pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Which sign of the individual effect counts as harm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarmDirection {
    /// Effects above zero are harmful; benefit means an effect at or below
    /// zero.
    #[default]
    Positive,
    Negative,
}

/// Posterior mean with a central 95% credible interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn from_draws(xs: &[f64]) -> Self {
        let (mean, lo, hi) = summarize(xs);
        Self { mean, lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantileSummary {
    pub level: f64,
    #[serde(flatten)]
    pub interval: Interval,
}

/// Functionals of the effect mixture, computed at every retained iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectSummary {
    /// Average effect, the mixture mean.
    pub ate: Interval,
    /// Probability that an individual is not harmed.
    pub tbr: Interval,
    pub harm_direction: HarmDirection,
    pub prob_positive: Interval,
    pub quantiles: Vec<QuantileSummary>,
    /// Quantiles of the posterior predictive effect distribution (the
    /// iteration-averaged mixture), the law of the pooled latent effects.
    pub predictive_quantiles: Vec<f64>,
    pub n_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IceSummary {
    #[serde(flatten)]
    pub effects: EffectSummary,
    pub bandwidth: f64,
    pub bandwidth_rule: &'static str,
    pub n_pooled: usize,
    /// Pooled-draw KDE with pointwise 95% band of the per-iteration
    /// effect densities.
    pub density: DensityGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IceOptions {
    pub harm_direction: HarmDirection,
    /// Iterations (evenly spaced) contributing to the density band.
    pub band_iterations: usize,
}

impl Default for IceOptions {
    fn default() -> Self {
        Self { harm_direction: HarmDirection::Positive, band_iterations: 500 }
    }
}

/// Evenly spaced subset of `0..n` of size at most `m`.
pub(crate) fn subsample(n: usize, m: usize) -> Vec<usize> {
    if m >= n {
        (0..n).collect()
    } else {
        (0..m).map(|k| k * n / m).collect()
    }
}

/// Posterior of the mixture mean, benefit rate, P(effect > 0) and the
/// quantiles in [`QUANTILE_LEVELS`], from per-iteration mixtures.
pub fn effect_summary(draws: &PosteriorDraws, harm: HarmDirection) -> Result<EffectSummary> {
    let mixtures = draws.effect_mixtures()?;
    summarize_mixtures(&mixtures, harm)
}

pub fn summarize_mixtures(mixtures: &[GaussianMixture], harm: HarmDirection) -> Result<EffectSummary> {
    if mixtures.is_empty() {
        return Err(Error::InsufficientDraws("no retained iterations".into()));
    }
    let per_iter: Vec<(f64, f64, Vec<f64>)> = mixtures
        .par_iter()
        .map(|m| {
            let q = QUANTILE_LEVELS.iter().map(|l| m.quantile(*l)).collect::<Result<Vec<_>>>()?;
            Ok((m.mean(), m.cdf(0.0), q))
        })
        .collect::<Result<Vec<_>>>()?;
    let ate: Vec<f64> = per_iter.iter().map(|r| r.0).collect();
    let below: Vec<f64> = per_iter.iter().map(|r| r.1).collect();
    let above: Vec<f64> = below.iter().map(|c| 1.0 - c).collect();
    let tbr = match harm {
        HarmDirection::Positive => Interval::from_draws(&below),
        HarmDirection::Negative => Interval::from_draws(&above),
    };
    let quantiles = QUANTILE_LEVELS
        .iter()
        .enumerate()
        .map(|(k, level)| {
            let xs: Vec<f64> = per_iter.iter().map(|r| r.2[k]).collect();
            QuantileSummary { level: *level, interval: Interval::from_draws(&xs) }
        })
        .collect();
    let t = mixtures.len() as f64;
    let mut weights = Vec::new();
    let mut means = Vec::new();
    let mut sds = Vec::new();
    for m in mixtures {
        weights.extend(m.weights().iter().map(|w| w / t));
        means.extend_from_slice(m.means());
        sds.extend_from_slice(m.sds());
    }
    let predictive = GaussianMixture::from_unnormalized(weights, means, sds)?;
    let predictive_quantiles = QUANTILE_LEVELS.iter().map(|l| predictive.quantile(*l)).collect::<Result<Vec<_>>>()?;
    Ok(EffectSummary {
        ate: Interval::from_draws(&ate),
        tbr,
        harm_direction: harm,
        prob_positive: Interval::from_draws(&above),
        quantiles,
        predictive_quantiles,
        n_iterations: mixtures.len(),
    })
}

/// Full summary of the effect distribution: [`effect_summary`] plus the
/// pooled latent-effect density.
///
/// The density is a Gaussian KDE (Silverman bandwidth) of every stored
/// latent effect across chains and iterations. Its band holds the 2.5% and
/// 97.5% points of the effect-mixture density over `band_iterations`
/// evenly spaced retained iterations.
pub fn ice_distribution(draws: &PosteriorDraws, opts: &IceOptions) -> Result<IceSummary> {
    let pooled = draws.pooled_z1();
    if pooled.is_empty() {
        return Err(Error::InsufficientDraws(
            "no stored latent effects; rerun with z1 storage enabled".into(),
        ));
    }
    let effects = effect_summary(draws, opts.harm_direction)?;
    let h = silverman_bandwidth(&pooled);
    let grid = grid_for(&pooled, h, GRID_POINTS);
    let density = kde(&pooled, h, &grid);

    let rows: Vec<&[f64]> = draws.rows().collect();
    let picks = subsample(rows.len(), opts.band_iterations.max(1));
    let curves = picks
        .par_iter()
        .map(|&r| {
            let m = draws.layout.effect_mixture(rows[r])?;
            Ok(grid.iter().map(|y| m.pdf(*y)).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut lo = Vec::with_capacity(grid.len());
    let mut hi = Vec::with_capacity(grid.len());
    for g in 0..grid.len() {
        let column: Vec<f64> = curves.iter().map(|c| c[g]).collect();
        lo.push(percentile(&column, 0.025));
        hi.push(percentile(&column, 0.975));
    }
    Ok(IceSummary {
        effects,
        bandwidth: h,
        bandwidth_rule: "silverman",
        n_pooled: pooled.len(),
        density: DensityGrid { y: grid, density, lo, hi },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_standard_normal_iteration() {
        let m = GaussianMixture::normal(0.0, 1.0).unwrap();
        let s = summarize_mixtures(&[m], HarmDirection::Positive).unwrap();
        assert_eq!(s.tbr.mean, 0.5);
        assert_eq!((s.tbr.lo, s.tbr.hi), (0.5, 0.5));
        assert!((s.quantiles[0].interval.mean + 1.644_853_626_951_472_2).abs() < 1e-8);
        assert_eq!(s.ate.mean, 0.0);
    }

    #[test]
    fn harm_direction_flips_the_rate() {
        let m = GaussianMixture::normal(1.0, 1.0).unwrap();
        let pos = summarize_mixtures(&[m.clone()], HarmDirection::Positive).unwrap();
        let neg = summarize_mixtures(&[m], HarmDirection::Negative).unwrap();
        assert!((pos.tbr.mean + neg.tbr.mean - 1.0).abs() < 1e-15);
        assert!(pos.tbr.mean < 0.5);
    }

    #[test]
    fn predictive_quantiles_average_the_mixtures() {
        // Two iterations with N(-1, 1) and N(1, 1): the predictive law is
        // their equal mixture, whose median is 0 by symmetry.
        let ms = [GaussianMixture::normal(-1.0, 1.0).unwrap(), GaussianMixture::normal(1.0, 1.0).unwrap()];
        let s = summarize_mixtures(&ms, HarmDirection::Positive).unwrap();
        assert!(s.predictive_quantiles[2].abs() < 1e-9);
        let p = GaussianMixture::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!((p.cdf(s.predictive_quantiles[0]) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(summarize_mixtures(&[], HarmDirection::Positive).is_err());
    }

    #[test]
    fn subsample_is_even_and_bounded() {
        assert_eq!(subsample(10, 4), vec![0, 2, 5, 7]);
        assert_eq!(subsample(3, 10), vec![0, 1, 2]);
    }
}
