use nalgebra::DMatrix;
use serde::Serialize;

use super::layout::ParamLayout;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lmm::dichotomize;
use crate::model::ModelSpec;

/// Parameters and latent variables of one chain.
///
/// The residual is always stored as a mixture; the Gaussian residual is the
/// single component with weight 1 and mean 0, so `res_tau[0]` is sigma.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentedState {
    /// Intercept followed by the confounder effects.
    pub beta: Vec<f64>,
    pub p: Vec<f64>,
    pub mu: Vec<f64>,
    pub tau: Vec<f64>,
    pub res_p: Vec<f64>,
    pub res_mu: Vec<f64>,
    pub res_tau: Vec<f64>,
    /// Standard deviations of the heterogeneity effects.
    pub omega: Vec<f64>,
    /// Latent exposure effect of every exposed individual, in row order.
    pub z1: Vec<f64>,
    pub c1: Vec<usize>,
    /// Residual component of every individual.
    pub c0: Vec<usize>,
    /// Heterogeneity effect per het confounder and individual; zero where
    /// the dichotomized indicator is zero.
    pub z_l: Vec<Vec<f64>>,
}

impl AugmentedState {
    pub fn flatten(&self, layout: &ParamLayout) -> Vec<f64> {
        let mut row = vec![0.0; layout.len()];
        row[..layout.n_beta()].copy_from_slice(&self.beta);
        let k = layout.k_effect;
        row[layout.p_offset()..layout.p_offset() + k].copy_from_slice(&self.p);
        row[layout.mu_offset()..layout.mu_offset() + k].copy_from_slice(&self.mu);
        row[layout.tau_offset()..layout.tau_offset() + k].copy_from_slice(&self.tau);
        layout.write_resid(&mut row, &self.res_p, &self.res_mu, &self.res_tau);
        row[layout.omega_offset()..].copy_from_slice(&self.omega);
        row
    }

    /// Overwrites the parameters (not the latents) from a flattened row.
    pub fn set_params(&mut self, layout: &ParamLayout, row: &[f64]) -> Result<()> {
        if row.len() != layout.len() {
            return Err(Error::Config(format!(
                "initial vector has {} values, the model has {} parameters ({})",
                row.len(),
                layout.len(),
                layout.names().join(",")
            )));
        }
        self.beta = layout.beta(row).to_vec();
        let (p, mu, tau) = layout.effect_parts(row);
        let total: f64 = p.iter().sum();
        self.p = p.iter().map(|w| w / total).collect();
        self.mu = mu.to_vec();
        self.tau = tau.to_vec();
        let (rp, rmu, rtau) = layout.resid_slices(row);
        let total: f64 = rp.iter().sum();
        self.res_p = rp.iter().map(|w| w / total).collect();
        self.res_mu = rmu.to_vec();
        self.res_tau = rtau.to_vec();
        self.omega = layout.omega(row).to_vec();
        Ok(())
    }

    /// Restores the zero-mean constraint of the residual mixture by solving
    /// for the last component mean.
    pub(crate) fn enforce_residual_constraint(&mut self) {
        let k = self.res_p.len();
        if k == 1 {
            self.res_mu[0] = 0.0;
            return;
        }
        let s: f64 = (0..k - 1).map(|j| self.res_p[j] * self.res_mu[j]).sum();
        self.res_mu[k - 1] = -s / self.res_p[k - 1];
    }

    pub fn is_finite(&self) -> bool {
        let scalars = [&self.beta, &self.p, &self.mu, &self.tau, &self.res_p, &self.res_mu, &self.res_tau, &self.omega, &self.z1];
        scalars.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.z_l.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Checks label ranges, simplexes and scale support.
    pub fn check(&self, upper: f64) -> Result<()> {
        let bad = |m: String| Err(Error::Numerical(format!("state invariant violated: {m}")));
        for (name, w) in [("p", &self.p), ("res_p", &self.res_p)] {
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > 1e-9 || w.iter().any(|x| !(*x >= 0.0)) {
                return bad(format!("{name} is not a simplex: {w:?}"));
            }
        }
        for (name, v) in [("tau", &self.tau), ("res_tau", &self.res_tau), ("omega", &self.omega)] {
            if v.iter().any(|s| !(*s > 0.0 && *s <= upper)) {
                return bad(format!("{name} outside (0, {upper}]: {v:?}"));
            }
        }
        if self.c1.iter().any(|c| *c >= self.p.len()) || self.c0.iter().any(|c| *c >= self.res_p.len()) {
            return bad("component label out of range".into());
        }
        Ok(())
    }
}

/// Data rearranged for the sampler.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub n: usize,
    pub q: usize,
    /// Row-major design matrix with a leading column of ones.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub exposed: Vec<usize>,
    /// Position of each individual in `exposed`, if exposed.
    pub exposed_pos: Vec<Option<usize>>,
    /// Rows with dichotomized indicator 1, per het confounder.
    pub het_rows: Vec<Vec<usize>>,
    pub het_ind: Vec<Vec<bool>>,
    pub xtx: DMatrix<f64>,
}

impl Design {
    pub fn new(ds: &Dataset, model: &ModelSpec) -> Result<(Self, ParamLayout)> {
        model.validate()?;
        let n = ds.len();
        let layout = ParamLayout::new(ds.names().to_vec(), model);
        let q = layout.n_beta();
        let mut x = Vec::with_capacity(n * q);
        for i in 0..n {
            x.push(1.0);
            x.extend(ds.columns().iter().map(|c| c[i]));
        }
        let mut exposed = Vec::new();
        let mut exposed_pos = vec![None; n];
        for (i, a) in ds.a().iter().enumerate() {
            if *a {
                exposed_pos[i] = Some(exposed.len());
                exposed.push(i);
            }
        }
        let mut het_rows = Vec::new();
        let mut het_ind = Vec::new();
        for h in &model.het_confounders {
            let d = dichotomize(ds, h)?;
            let ind: Vec<bool> = d.values.iter().map(|v| *v > 0.5).collect();
            het_rows.push((0..n).filter(|i| ind[*i]).collect());
            het_ind.push(ind);
        }
        let xm = DMatrix::from_row_slice(n, q, &x);
        let xtx = xm.transpose() * &xm;
        Ok((
            Self { n, q, x, y: ds.y().to_vec(), exposed, exposed_pos, het_rows, het_ind, xtx },
            layout,
        ))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.q..(i + 1) * self.q]
    }

    pub fn eta(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum()).collect()
    }

    /// Sum of heterogeneity effects per individual.
    pub fn het_sum(&self, state: &AugmentedState) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (rows, z) in self.het_rows.iter().zip(&state.z_l) {
            for &i in rows {
                out[i] += z[i];
            }
        }
        out
    }

    pub fn z1_of(&self, state: &AugmentedState, i: usize) -> f64 {
        self.exposed_pos[i].map_or(0.0, |e| state.z1[e])
    }
}
