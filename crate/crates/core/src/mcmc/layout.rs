use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::model::ModelSpec;

/// Order of the flattened parameter vector stored for every retained
/// iteration: fixed effects, effect-mixture weights, means and sds,
/// residual parameters, then heterogeneity sds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    /// Confounders entering the mean, after the intercept.
    pub fixed: Vec<String>,
    pub k_effect: usize,
    pub k_residual: usize,
    pub het: Vec<String>,
}

impl ParamLayout {
    pub fn new(fixed: Vec<String>, model: &ModelSpec) -> Self {
        Self {
            fixed,
            k_effect: model.k_effect,
            k_residual: model.k_residual,
            het: model.het_confounders.clone(),
        }
    }

    pub fn n_beta(&self) -> usize {
        1 + self.fixed.len()
    }

    pub fn p_offset(&self) -> usize {
        self.n_beta()
    }

    pub fn mu_offset(&self) -> usize {
        self.p_offset() + self.k_effect
    }

    pub fn tau_offset(&self) -> usize {
        self.mu_offset() + self.k_effect
    }

    fn resid_offset(&self) -> usize {
        self.tau_offset() + self.k_effect
    }

    fn resid_len(&self) -> usize {
        if self.k_residual == 1 {
            1
        } else {
            3 * self.k_residual
        }
    }

    pub fn omega_offset(&self) -> usize {
        self.resid_offset() + self.resid_len()
    }

    pub fn len(&self) -> usize {
        self.omega_offset() + self.het.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = vec!["beta_0".to_string()];
        out.extend(self.fixed.iter().map(|f| format!("beta_{f}")));
        for prefix in ["p", "mu", "tau"] {
            out.extend((1..=self.k_effect).map(|j| format!("{prefix}_{j}")));
        }
        if self.k_residual == 1 {
            out.push("sigma".into());
        } else {
            for prefix in ["pr", "mur", "taur"] {
                out.extend((1..=self.k_residual).map(|j| format!("{prefix}_{j}")));
            }
        }
        out.extend(self.het.iter().map(|h| format!("omega_{h}")));
        out
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Argument(format!("no parameter named `{name}`")))
    }

    pub fn beta<'a>(&self, row: &'a [f64]) -> &'a [f64] {
        &row[..self.n_beta()]
    }

    pub fn effect_parts<'a>(&self, row: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let k = self.k_effect;
        let (p, m, t) = (self.p_offset(), self.mu_offset(), self.tau_offset());
        (&row[p..p + k], &row[m..m + k], &row[t..t + k])
    }

    /// Law of the random exposure effect at one retained iteration.
    pub fn effect_mixture(&self, row: &[f64]) -> Result<GaussianMixture> {
        let (p, m, t) = self.effect_parts(row);
        GaussianMixture::from_unnormalized(p.to_vec(), m.to_vec(), t.to_vec())
    }

    /// Residual law at one retained iteration (a single zero-mean component
    /// for the Gaussian residual).
    pub fn residual_mixture(&self, row: &[f64]) -> Result<GaussianMixture> {
        let o = self.resid_offset();
        if self.k_residual == 1 {
            return GaussianMixture::normal(0.0, row[o]);
        }
        let k = self.k_residual;
        GaussianMixture::from_unnormalized(
            row[o..o + k].to_vec(),
            row[o + k..o + 2 * k].to_vec(),
            row[o + 2 * k..o + 3 * k].to_vec(),
        )
    }

    pub fn omega<'a>(&self, row: &'a [f64]) -> &'a [f64] {
        &row[self.omega_offset()..]
    }

    pub(crate) fn resid_slices<'a>(&self, row: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let o = self.resid_offset();
        if self.k_residual == 1 {
            (&[1.0], &[0.0], &row[o..o + 1])
        } else {
            let k = self.k_residual;
            (&row[o..o + k], &row[o + k..o + 2 * k], &row[o + 2 * k..o + 3 * k])
        }
    }

    pub(crate) fn write_resid(&self, row: &mut [f64], p: &[f64], mu: &[f64], tau: &[f64]) {
        let o = self.resid_offset();
        if self.k_residual == 1 {
            row[o] = tau[0];
        } else {
            let k = self.k_residual;
            row[o..o + k].copy_from_slice(p);
            row[o + k..o + 2 * k].copy_from_slice(mu);
            row[o + 2 * k..o + 3 * k].copy_from_slice(tau);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_offsets_agree() {
        let m = ModelSpec::conf_het(3, 2, vec!["age".into()]);
        let l = ParamLayout::new(vec!["age".into(), "sex".into()], &m);
        let names = l.names();
        assert_eq!(names.len(), l.len());
        assert_eq!(names[l.p_offset()], "p_1");
        assert_eq!(names[l.mu_offset()], "mu_1");
        assert_eq!(names[l.tau_offset() + 2], "tau_3");
        assert_eq!(names[l.omega_offset()], "omega_age");
        assert_eq!(l.index_of("mur_2").unwrap(), l.tau_offset() + 3 + 3);
        let g = ParamLayout::new(vec![], &ModelSpec::gaussian());
        assert_eq!(g.names(), vec!["beta_0", "p_1", "mu_1", "tau_1", "sigma"]);
    }
}
