//! Everything downstream of raw posterior draws.

pub mod coverage;
pub mod diagnostics;
pub mod ice;
pub mod kde;
pub mod ppc;

use std::str::FromStr;

use serde::Serialize;

pub use coverage::{coverage_study, CoverageOptions, CoverageRow, CoverageTable};
pub use diagnostics::{diagnose, Diagnostics};
pub use ice::{effect_summary, ice_distribution, EffectSummary, HarmDirection, IceOptions, IceSummary, Interval};
pub use ppc::{posterior_predictive_check, PpcOptions, PpcReport, StratumCheck};

use crate::error::{Error, Result};
use crate::mcmc::PosteriorDraws;

/// Scalar summary of a retained iteration that diagnostics can be run on.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// A flattened parameter by name, such as `beta_0` or `tau_2`.
    Parameter(String),
    /// Mean of the effect mixture; invariant to label switching.
    Ate,
    /// Variance of the effect mixture.
    EffectVariance,
    /// Effect-mixture probability of a non-positive effect.
    ProbNonPositive,
}

impl FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ate" => Quantity::Ate,
            "effect_variance" => Quantity::EffectVariance,
            "prob_nonpositive" | "tbr" => Quantity::ProbNonPositive,
            other => Quantity::Parameter(other.to_string()),
        })
    }
}

impl std::fmt::Display for Quantity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Quantity::Parameter(p) => f.write_str(p),
            Quantity::Ate => f.write_str("ate"),
            Quantity::EffectVariance => f.write_str("effect_variance"),
            Quantity::ProbNonPositive => f.write_str("prob_nonpositive"),
        }
    }
}

/// Per-chain traces of a quantity.
pub fn traces(draws: &PosteriorDraws, quantity: &Quantity) -> Result<Vec<Vec<f64>>> {
    let layout = &draws.layout;
    let mix = |row: &[f64]| layout.effect_mixture(row).expect("retained rows hold valid mixtures");
    Ok(match quantity {
        Quantity::Parameter(name) => draws.parameter(name)?,
        Quantity::Ate => draws.map_rows(|r| mix(r).mean()),
        Quantity::EffectVariance => draws.map_rows(|r| mix(r).variance()),
        Quantity::ProbNonPositive => draws.map_rows(|r| mix(r).cdf(0.0)),
    })
}

/// R-hat and effective sample sizes of a quantity.
pub fn diagnostics(draws: &PosteriorDraws, quantity: &Quantity) -> Result<Diagnostics> {
    diagnose(&traces(draws, quantity)?)
}

/// Diagnostics of the default set: the label-invariant effect functionals,
/// the fixed effects and the residual and heterogeneity scales.
pub fn diagnostics_report(draws: &PosteriorDraws) -> Result<Vec<(String, Diagnostics)>> {
    let mut qs = vec![Quantity::Ate, Quantity::EffectVariance, Quantity::ProbNonPositive];
    let names = draws.layout.names();
    for n in &names {
        if n.starts_with("beta_") || n == "sigma" || n.starts_with("omega_") {
            qs.push(Quantity::Parameter(n.clone()));
        }
    }
    qs.into_iter().map(|q| Ok((q.to_string(), diagnostics(draws, &q)?))).collect()
}
