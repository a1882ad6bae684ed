//! Simulation from the structural causal model with a binary exposure,
//! logistic exposure assignment and a heterogeneous additive exposure effect.
//!
//! Per individual: confounders `L` are drawn from their laws, exposure
//! `A ~ Bernoulli(expit(alpha0 + L alpha_L))`, effect `U` from the effect
//! family, noise `N_Y`, and `Y^a = beta0 + L beta_L + a U + N_Y`. The
//! hidden truth `(U, Y^0, Y^1)` is returned separately from the dataset.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::rng::SimRng;
use crate::stats::{norm_cdf, norm_quantile, std_normal_draw};

/// Marginal law of one confounder. Confounders are drawn independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConfounderLaw {
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    Normal { mean: f64, sd: f64 },
}

impl ConfounderLaw {
    fn validate(&self, j: usize) -> Result<()> {
        match self {
            ConfounderLaw::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(Error::Config(format!(
                        "confounder_law[{j}]: values and probs must be non-empty and equally long"
                    )));
                }
                let total: f64 = probs.iter().sum();
                if probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "confounder_law[{j}]: probs {probs:?} are not a simplex"
                    )));
                }
            }
            ConfounderLaw::Normal { sd, .. } => {
                if !(*sd > 0.0) {
                    return Err(Error::Config(format!("confounder_law[{j}]: sd must be > 0")));
                }
            }
        }
        Ok(())
    }

    fn draw(&self, rng: &mut SimRng) -> f64 {
        match self {
            ConfounderLaw::Discrete { values, probs } => {
                let mut u = rng.random::<f64>();
                for (v, p) in values.iter().zip(probs) {
                    u -= p;
                    if u < 0.0 {
                        return *v;
                    }
                }
                *values.last().expect("validated non-empty")
            }
            ConfounderLaw::Normal { mean, sd } => mean + sd * std_normal_draw(rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ConfounderLaw::Discrete { values, probs } => values.iter().zip(probs).map(|(v, p)| v * p).sum(),
            ConfounderLaw::Normal { mean, .. } => *mean,
        }
    }
}

/// Distribution of the individual exposure effect `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EffectFamily {
    Gaussian { mean: f64, sd: f64 },
    /// `LN(mu, sigma^2)` shifted so that its mean equals `target_mean`.
    ShiftedLogNormal { mu: f64, sigma: f64, target_mean: f64 },
    TwoGaussianMixture { p: f64, mu1: f64, sd1: f64, mu2: f64, sd2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScmConfig {
    pub beta0: f64,
    pub beta_l: Vec<f64>,
    pub confounder_law: Vec<ConfounderLaw>,
    pub alpha0: f64,
    pub alpha_l: Vec<f64>,
    /// Standard deviation of the Gaussian outcome noise.
    pub sigma: f64,
    pub effect_family: EffectFamily,
    /// Optional zero-mean non-Gaussian outcome noise; replaces `N(0, sigma^2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_mixture: Option<GaussianMixture>,
    /// Per-confounder sd of individual-level variation in the confounder's
    /// effect: `Y` gains `L_j * sd_j * xi_ij`. Empty means no heterogeneity.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub confounder_effect_sd: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confounder_names: Option<Vec<String>>,
}

/// Unobservable per-individual quantities, kept apart from the analysis data.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTruth {
    pub u: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

impl HiddenTruth {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
        w.write_record(["u", "y0", "y1"]).map_err(|e| Error::parse(path, e))?;
        for i in 0..self.u.len() {
            w.write_record([self.u[i].to_string(), self.y0[i].to_string(), self.y1[i].to_string()])
                .map_err(|e| Error::parse(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ScmConfig {
    pub fn n_confounders(&self) -> usize {
        self.confounder_law.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.confounder_names
            .clone()
            .unwrap_or_else(|| Dataset::default_names(self.n_confounders()))
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.n_confounders();
        if self.beta_l.len() != p || self.alpha_l.len() != p {
            return Err(Error::Config(format!(
                "beta_l ({}) and alpha_l ({}) must have one entry per confounder ({p})",
                self.beta_l.len(),
                self.alpha_l.len()
            )));
        }
        if !self.confounder_effect_sd.is_empty() && self.confounder_effect_sd.len() != p {
            return Err(Error::Config("confounder_effect_sd must be empty or one entry per confounder".into()));
        }
        if self.confounder_effect_sd.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("confounder_effect_sd entries must be >= 0".into()));
        }
        if let Some(names) = &self.confounder_names {
            if names.len() != p {
                return Err(Error::Config("confounder_names must have one entry per confounder".into()));
            }
        }
        for (j, law) in self.confounder_law.iter().enumerate() {
            law.validate(j)?;
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config("sigma must be > 0".into()));
        }
        if let Some(m) = &self.noise_mixture {
            if m.mean().abs() > 1e-9 {
                return Err(Error::Config(format!("noise_mixture must have mean 0, has {}", m.mean())));
            }
        }
        self.ice_law().map(|_| ())
    }

    /// Exact law of the individual causal effect `Y^1 - Y^0 = U`.
    pub fn ice_law(&self) -> Result<IceLaw> {
        IceLaw::from_family(&self.effect_family)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ScmConfig = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| Error::parse(path, e))
    }

    /// Named configurations of the simulation study.
    pub fn preset(name: &str) -> Result<Self> {
        let family = match name {
            "fig3-gaussian" => EffectFamily::Gaussian { mean: -15.0, sd: 10.0 },
            "fig3-lognormal" => EffectFamily::ShiftedLogNormal {
                mu: 4.0,
                sigma: 0.5f64.sqrt(),
                target_mean: -15.0,
            },
            "fig3-mixture" => EffectFamily::TwoGaussianMixture {
                p: 0.6,
                mu1: -31.0,
                sd1: 10.0,
                mu2: 9.0,
                sd2: 5.0,
            },
            "fig1-narrow" => EffectFamily::Gaussian { mean: -15.0, sd: 2.0 },
            "fig1-wide" => EffectFamily::Gaussian { mean: -15.0, sd: 15.0 },
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (known: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(ScmConfig {
            beta0: 120.0,
            beta_l: vec![5.0],
            confounder_law: vec![ConfounderLaw::Discrete {
                values: vec![-0.3, 0.7],
                probs: vec![0.7, 0.3],
            }],
            alpha0: -3.0,
            alpha_l: vec![0.7],
            sigma: 50f64.sqrt(),
            effect_family: family,
            noise_mixture: None,
            confounder_effect_sd: vec![],
            confounder_names: None,
        })
    }
}

pub const PRESETS: &[&str] = &["fig3-gaussian", "fig3-lognormal", "fig3-mixture", "fig1-narrow", "fig1-wide"];

/// Draws `n` individuals. The returned dataset never contains `U` or the
/// counterfactual outcome.
pub fn simulate(cfg: &ScmConfig, n: usize, rng: &mut SimRng) -> Result<(Dataset, HiddenTruth)> {
    if n == 0 {
        return Err(Error::Argument("n must be >= 1".into()));
    }
    cfg.validate()?;
    let law = cfg.ice_law()?;
    let p = cfg.n_confounders();
    let mut cols = vec![Vec::with_capacity(n); p];
    let (mut y, mut a) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut truth = HiddenTruth {
        u: Vec::with_capacity(n),
        y0: Vec::with_capacity(n),
        y1: Vec::with_capacity(n),
    };
    let mut l = vec![0.0; p];
    for _ in 0..n {
        for (lj, law) in l.iter_mut().zip(&cfg.confounder_law) {
            *lj = law.draw(rng);
        }
        let lin_a = cfg.alpha0 + l.iter().zip(&cfg.alpha_l).map(|(x, b)| x * b).sum::<f64>();
        let exposed = rng.random::<f64>() < expit(lin_a);
        let u = law.sample(rng);
        let noise = match &cfg.noise_mixture {
            Some(m) => m.sample(rng),
            None => cfg.sigma * std_normal_draw(rng),
        };
        let het: f64 = cfg
            .confounder_effect_sd
            .iter()
            .zip(&l)
            .map(|(sd, x)| if *sd > 0.0 { x * sd * std_normal_draw(rng) } else { 0.0 })
            .sum();
        let y0 = cfg.beta0 + l.iter().zip(&cfg.beta_l).map(|(x, b)| x * b).sum::<f64>() + het + noise;
        let y1 = y0 + u;
        y.push(if exposed { y1 } else { y0 });
        a.push(exposed);
        for (c, x) in cols.iter_mut().zip(&l) {
            c.push(*x);
        }
        truth.u.push(u);
        truth.y0.push(y0);
        truth.y1.push(y1);
    }
    Ok((Dataset::new(y, a, cols, cfg.names())?, truth))
}

/// Analytic law of the individual causal effect.
#[derive(Debug, Clone, PartialEq)]
pub enum IceLaw {
    Gaussian { mean: f64, sd: f64 },
    ShiftedLogNormal { mu: f64, sigma: f64, shift: f64 },
    Mixture(GaussianMixture),
}

impl IceLaw {
    pub fn from_family(f: &EffectFamily) -> Result<Self> {
        Ok(match *f {
            EffectFamily::Gaussian { mean, sd } => {
                if !(sd > 0.0) {
                    return Err(Error::Config("gaussian effect sd must be > 0".into()));
                }
                IceLaw::Gaussian { mean, sd }
            }
            EffectFamily::ShiftedLogNormal { mu, sigma, target_mean } => {
                if !(sigma > 0.0) {
                    return Err(Error::Config("log-normal sigma must be > 0".into()));
                }
                IceLaw::ShiftedLogNormal {
                    mu,
                    sigma,
                    shift: target_mean - (mu + 0.5 * sigma * sigma).exp(),
                }
            }
            EffectFamily::TwoGaussianMixture { p, mu1, sd1, mu2, sd2 } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!("mixture p = {p} outside [0, 1]")));
                }
                IceLaw::Mixture(GaussianMixture::new(vec![p, 1.0 - p], vec![mu1, mu2], vec![sd1, sd2])?)
            }
        })
    }

    pub fn mean(&self) -> f64 {
        match self {
            IceLaw::Gaussian { mean, .. } => *mean,
            IceLaw::ShiftedLogNormal { mu, sigma, shift } => (mu + 0.5 * sigma * sigma).exp() + shift,
            IceLaw::Mixture(m) => m.mean(),
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            IceLaw::Gaussian { mean, sd } => norm_cdf((y - mean) / sd),
            IceLaw::ShiftedLogNormal { mu, sigma, shift } => {
                if y <= *shift {
                    0.0
                } else {
                    norm_cdf(((y - shift).ln() - mu) / sigma)
                }
            }
            IceLaw::Mixture(m) => m.cdf(y),
        }
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Quantile {
                q,
                reason: "q must lie strictly between 0 and 1".into(),
            });
        }
        Ok(match self {
            IceLaw::Gaussian { mean, sd } => mean + sd * norm_quantile(q),
            IceLaw::ShiftedLogNormal { mu, sigma, shift } => (mu + sigma * norm_quantile(q)).exp() + shift,
            IceLaw::Mixture(m) => m.quantile(q)?,
        })
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        match self {
            IceLaw::Gaussian { mean, sd } => mean + sd * std_normal_draw(rng),
            IceLaw::ShiftedLogNormal { mu, sigma, shift } => (mu + sigma * std_normal_draw(rng)).exp() + shift,
            IceLaw::Mixture(m) => m.sample(rng),
        }
    }
}

/// Exact law of the individual causal effect implied by `cfg`.
pub fn true_ice_law(cfg: &ScmConfig) -> Result<IceLaw> {
    cfg.ice_law()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::stats::{mean, sample_var};

    #[test]
    fn fig3_simulation_moments() {
        let cfg = ScmConfig::preset("fig3-gaussian").unwrap();
        let (ds, truth) = simulate(&cfg, 1_000_000, &mut seeded(11)).unwrap();
        // E[Y0] = beta0 because the confounder is centred; the standard error
        // at this size is about 0.0075.
        assert!((mean(&truth.y0) - 120.0).abs() < 0.03, "{}", mean(&truth.y0));
        // 0.7 * expit(-3.21) + 0.3 * expit(-2.51), evaluated independently.
        let expected_rate = 0.0497;
        let rate = ds.n_exposed() as f64 / ds.len() as f64;
        assert!((rate - expected_rate).abs() < 0.002, "{rate}");
        assert!((mean(&truth.u) + 15.0).abs() < 0.05);
        for i in 0..ds.len() {
            let expect = if ds.a()[i] { truth.y1[i] } else { truth.y0[i] };
            assert_eq!(ds.y()[i], expect);
        }
        // var(Y | A = 0, L = l) = sigma^2 per stratum
        for level in [-0.3, 0.7] {
            let ys: Vec<f64> = (0..ds.len())
                .filter(|&i| !ds.a()[i] && ds.columns()[0][i] == level)
                .map(|i| ds.y()[i])
                .collect();
            let v = sample_var(&ys);
            assert!((v / 50.0 - 1.0).abs() < 0.02, "level {level}: {v}");
        }
    }

    #[test]
    fn effect_independent_of_exposure_given_confounder() {
        let cfg = ScmConfig::preset("fig3-gaussian").unwrap();
        let (ds, truth) = simulate(&cfg, 1_000_000, &mut seeded(12)).unwrap();
        for level in [-0.3, 0.7] {
            let idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.columns()[0][i] == level).collect();
            let u: Vec<f64> = idx.iter().map(|&i| truth.u[i]).collect();
            let a: Vec<f64> = idx.iter().map(|&i| ds.a()[i] as u8 as f64).collect();
            let (mu, ma) = (mean(&u), mean(&a));
            let n = idx.len() as f64;
            let cov = u.iter().zip(&a).map(|(x, y)| (x - mu) * (y - ma)).sum::<f64>() / (n - 1.0);
            let corr = cov / (sample_var(&u) * sample_var(&a)).sqrt();
            // se of a null correlation is about 1 / sqrt(n)
            assert!(corr.abs() < 3.0 / n.sqrt(), "level {level}: corr {corr}");
        }
    }

    #[test]
    fn lognormal_truth_matches_table_values() {
        let law = ScmConfig::preset("fig3-lognormal").unwrap().ice_law().unwrap();
        let p = 1.0 - law.cdf(0.0);
        let direct = 1.0 - norm_cdf((((4.25f64).exp() + 15.0).ln() - 4.0) / 0.5f64.sqrt());
        assert!((p - direct).abs() < 1e-12);
        assert!((p - 0.27).abs() < 0.005, "{p}");
        assert!((law.quantile(0.95).unwrap() - 89.60).abs() < 0.05);
        assert!((law.mean() + 15.0).abs() < 1e-9);
        let g = ScmConfig::preset("fig3-gaussian").unwrap().ice_law().unwrap();
        assert!((g.quantile(0.5).unwrap() + 15.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ScmConfig::preset("fig3-gaussian").unwrap();
        cfg.confounder_law[0] = ConfounderLaw::Discrete {
            values: vec![0.0, 1.0],
            probs: vec![0.5, 0.6],
        };
        assert!(simulate(&cfg, 10, &mut seeded(1)).is_err());
        let cfg = ScmConfig::preset("fig3-gaussian").unwrap();
        assert!(simulate(&cfg, 0, &mut seeded(1)).is_err());
        assert!(ScmConfig::preset("nope").is_err());
        let err = ScmConfig::from_json_str("{\n \"beta0\": 1,\n \"bogus\": 2 }").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn json_round_trip() {
        for name in PRESETS {
            let cfg = ScmConfig::preset(name).unwrap();
            let text = serde_json::to_string_pretty(&cfg).unwrap();
            assert_eq!(ScmConfig::from_json_str(&text).unwrap(), cfg);
        }
    }
}
