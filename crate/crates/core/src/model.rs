//! Model, prior and chain specifications for the Bayesian mixed models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which causal mixed model to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Gaussian random exposure effect and Gaussian residual.
    GaussianLmm,
    /// Gaussian-mixture exposure effect, Gaussian residual.
    MixtureLmm,
    /// Gaussian-mixture exposure effect and zero-mean Gaussian-mixture residual.
    MixtureLmmFlexResidual,
    /// As `MixtureLmmFlexResidual`, plus Gaussian random effects on
    /// dichotomized confounders.
    MixtureLmmConfHet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default = "default_k_effect")]
    pub k_effect: usize,
    #[serde(default = "default_k_residual")]
    pub k_residual: usize,
    #[serde(default)]
    pub het_confounders: Vec<String>,
}

fn default_k_effect() -> usize {
    5
}

fn default_k_residual() -> usize {
    1
}

impl ModelSpec {
    pub fn gaussian() -> Self {
        Self {
            kind: ModelKind::GaussianLmm,
            k_effect: 1,
            k_residual: 1,
            het_confounders: vec![],
        }
    }

    pub fn mixture(k_effect: usize) -> Self {
        Self {
            kind: ModelKind::MixtureLmm,
            k_effect,
            k_residual: 1,
            het_confounders: vec![],
        }
    }

    pub fn flex_residual(k_effect: usize, k_residual: usize) -> Self {
        Self {
            kind: ModelKind::MixtureLmmFlexResidual,
            k_effect,
            k_residual,
            het_confounders: vec![],
        }
    }

    pub fn conf_het(k_effect: usize, k_residual: usize, het: Vec<String>) -> Self {
        Self {
            kind: ModelKind::MixtureLmmConfHet,
            k_effect,
            k_residual,
            het_confounders: het,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_effect < 1 || self.k_residual < 1 {
            return Err(Error::Config("k_effect and k_residual must be >= 1".into()));
        }
        match self.kind {
            ModelKind::GaussianLmm if self.k_effect != 1 || self.k_residual != 1 => {
                return Err(Error::Config(
                    "gaussian_lmm requires k_effect = 1 and k_residual = 1".into(),
                ))
            }
            ModelKind::MixtureLmm if self.k_residual != 1 => {
                return Err(Error::Config("mixture_lmm has a Gaussian residual (k_residual = 1)".into()))
            }
            _ => {}
        }
        let is_het = self.kind == ModelKind::MixtureLmmConfHet;
        if is_het == self.het_confounders.is_empty() {
            return Err(Error::Config(
                "het_confounders must be non-empty exactly when kind = mixture_lmm_conf_het".into(),
            ));
        }
        Ok(())
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::mixture(5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSpec {
    /// Variance of the N(0, v) prior on fixed effects and component means.
    pub location_prior_var: f64,
    /// Upper end of the Uniform(0, u] prior on every scale parameter.
    pub scale_prior_upper: f64,
    /// Symmetric Dirichlet concentration for mixture weights.
    pub dirichlet_alpha: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            location_prior_var: 1e5,
            scale_prior_upper: 100.0,
            dirichlet_alpha: 0.5,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.location_prior_var, self.scale_prior_upper, self.dirichlet_alpha]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("prior hyperparameters must be positive: {self:?}")))
        }
    }
}

/// How many individuals' latent effects are retained per stored iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Z1Storage {
    None,
    All,
    /// Evenly spaced subset of at most this many individuals.
    Subset(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub n_burn: usize,
    pub n_iter: usize,
    pub thin: usize,
    pub seed: u64,
    /// Initial values in flattened parameter order; overrides the LMM start.
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    #[serde(default = "default_z1_storage")]
    pub z1_storage: Z1Storage,
}

fn default_z1_storage() -> Z1Storage {
    Z1Storage::Subset(256)
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self::desk(1)
    }
}

impl ChainConfig {
    /// 4 chains, 10^4 burn-in, 5 * 10^4 iterations, thinning 10.
    pub fn desk(seed: u64) -> Self {
        Self {
            n_chains: 4,
            n_burn: 10_000,
            n_iter: 50_000,
            thin: 10,
            seed,
            init: None,
            z1_storage: default_z1_storage(),
        }
    }

    /// 4 chains, 10^5 burn-in, 5 * 10^5 iterations, thinning 100.
    pub fn paper(seed: u64) -> Self {
        Self {
            n_chains: 4,
            n_burn: 100_000,
            n_iter: 500_000,
            thin: 100,
            seed,
            init: None,
            z1_storage: default_z1_storage(),
        }
    }

    pub fn retained_per_chain(&self) -> usize {
        self.n_iter / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 1 || self.n_burn < 1 || self.n_iter < 1 || self.thin < 1 {
            return Err(Error::Config(format!(
                "chain counts must be >= 1 (chains {}, burn {}, iter {}, thin {})",
                self.n_chains, self.n_burn, self.n_iter, self.thin
            )));
        }
        if self.n_iter % self.thin != 0 {
            return Err(Error::Config(format!(
                "thin = {} does not divide n_iter = {}",
                self.thin, self.n_iter
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn het_list_matches_kind() {
        assert!(ModelSpec::mixture(5).validate().is_ok());
        assert!(ModelSpec::conf_het(5, 3, vec![]).validate().is_err());
        let mut m = ModelSpec::mixture(5);
        m.het_confounders = vec!["age".into()];
        assert!(m.validate().is_err());
        assert!(ModelSpec::conf_het(5, 3, vec!["age".into()]).validate().is_ok());
        let mut g = ModelSpec::gaussian();
        g.k_effect = 3;
        assert!(g.validate().is_err());
    }

    #[test]
    fn thin_must_divide() {
        let mut c = ChainConfig::desk(1);
        assert!(c.validate().is_ok());
        assert_eq!(c.retained_per_chain(), 5000);
        c.thin = 7;
        assert!(c.validate().is_err());
        c.thin = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn defaults_and_unknown_fields() {
        let p = PriorSpec::default();
        assert_eq!((p.location_prior_var, p.scale_prior_upper, p.dirichlet_alpha), (1e5, 100.0, 0.5));
        let m: ModelSpec = serde_json::from_str(r#"{"kind":"mixture_lmm"}"#).unwrap();
        assert_eq!(m.k_effect, 5);
        let err = serde_json::from_str::<ModelSpec>(r#"{"kind":"mixture_lmm","k":3}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field `k`"));
    }
}
