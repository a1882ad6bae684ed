use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::slice::slice_step;
use super::state::{AugmentedState, Design};
use crate::error::Error;
use crate::model::PriorSpec;
use crate::stats::{categorical_log, dirichlet_draw, norm_ln_pdf, std_normal_draw};

/// Scale parameters are kept above this value; the prior mass below it is
/// negligible and the floor keeps log-scale updates away from underflow.
const SCALE_FLOOR: f64 = 1e-10;
/// Proposals putting less weight than this on the last residual component
/// are rejected, since its mean is solved from the constraint.
const MIN_LAST_WEIGHT: f64 = 1e-6;

pub(crate) struct Sampler<'a, R: Rng> {
    pub d: &'a Design,
    pub prior: &'a PriorSpec,
    pub state: AugmentedState,
    pub rng: R,
    pub rejected_weight_proposals: u64,
    eta: Vec<f64>,
    het: Vec<f64>,
}

/// Log density of a scale parameter on the log scale given `count`
/// zero-centred observations with sum of squares `ss`; includes the Jacobian
/// of the log transform under the flat prior.
fn log_scale_density(u: f64, count: usize, ss: f64) -> f64 {
    -(count as f64) * u - 0.5 * ss * (-2.0 * u).exp() + u
}

impl<'a, R: Rng> Sampler<'a, R> {
    pub fn new(d: &'a Design, prior: &'a PriorSpec, state: AugmentedState, rng: R) -> Self {
        let eta = d.eta(&state.beta);
        let het = d.het_sum(&state);
        Self { d, prior, state, rng, rejected_weight_proposals: 0, eta, het }
    }

    fn draw_scale(&mut self, current: f64, count: usize, ss: f64) -> f64 {
        let lower = SCALE_FLOOR.ln();
        let upper = self.prior.scale_prior_upper.ln();
        let u0 = current.ln().clamp(lower, upper);
        slice_step(u0, |u| log_scale_density(u, count, ss), 1.0, lower, upper, &mut self.rng).exp()
    }

    /// Residual of individual `i` after removing everything but the
    /// residual-mixture term.
    fn residual(&self, i: usize) -> f64 {
        self.d.y[i] - self.eta[i] - self.d.z1_of(&self.state, i) - self.het[i]
    }

    /// One full sweep; fails only on a numerically degenerate state.
    pub fn sweep(&mut self) -> std::result::Result<(), &'static str> {
        self.update_labels();
        self.update_z1();
        self.update_het_effects();
        self.update_beta()?;
        self.update_effect_means();
        self.update_effect_weights();
        self.update_scales();
        self.update_residual_mixture();
        if self.state.is_finite() {
            Ok(())
        } else {
            Err("non-finite parameter or latent value")
        }
    }

    fn update_labels(&mut self) {
        let kr = self.state.res_p.len();
        if kr > 1 {
            let mut lw = vec![0.0; kr];
            for i in 0..self.d.n {
                let r = self.residual(i);
                for (j, w) in lw.iter_mut().enumerate() {
                    *w = self.state.res_p[j].ln() + norm_ln_pdf(r, self.state.res_mu[j], self.state.res_tau[j]);
                }
                self.state.c0[i] = categorical_log(&lw, &mut self.rng);
            }
        }
        // Effect labels with the latent effect integrated out; z1 is then
        // drawn from its exact conditional, so the pair is a blocked update.
        let k = self.state.p.len();
        let mut lw = vec![0.0; k];
        for (e, &i) in self.d.exposed.iter().enumerate() {
            let c0 = self.state.c0[i];
            let t = self.d.y[i] - self.eta[i] - self.het[i] - self.state.res_mu[c0];
            let s2 = self.state.res_tau[c0].powi(2);
            for (j, w) in lw.iter_mut().enumerate() {
                let sd = (self.state.tau[j].powi(2) + s2).sqrt();
                *w = self.state.p[j].ln() + norm_ln_pdf(t, self.state.mu[j], sd);
            }
            self.state.c1[e] = categorical_log(&lw, &mut self.rng);
        }
    }

    fn update_z1(&mut self) {
        for (e, &i) in self.d.exposed.iter().enumerate() {
            let c0 = self.state.c0[i];
            let c1 = self.state.c1[e];
            let t = self.d.y[i] - self.eta[i] - self.het[i] - self.state.res_mu[c0];
            let prec_lik = self.state.res_tau[c0].powi(-2);
            let prec_prior = self.state.tau[c1].powi(-2);
            let v = 1.0 / (prec_lik + prec_prior);
            let m = v * (t * prec_lik + self.state.mu[c1] * prec_prior);
            self.state.z1[e] = m + v.sqrt() * std_normal_draw(&mut self.rng);
        }
    }

    fn update_het_effects(&mut self) {
        for h in 0..self.d.het_rows.len() {
            let prec_prior = self.state.omega[h].powi(-2);
            for &i in &self.d.het_rows[h] {
                let old = self.state.z_l[h][i];
                let c0 = self.state.c0[i];
                let t = self.d.y[i] - self.eta[i] - self.d.z1_of(&self.state, i) - (self.het[i] - old) - self.state.res_mu[c0];
                let prec_lik = self.state.res_tau[c0].powi(-2);
                let v = 1.0 / (prec_lik + prec_prior);
                let new = v * t * prec_lik + v.sqrt() * std_normal_draw(&mut self.rng);
                self.state.z_l[h][i] = new;
                self.het[i] += new - old;
            }
        }
    }

    fn update_beta(&mut self) -> std::result::Result<(), &'static str> {
        let q = self.d.q;
        let kr = self.state.res_p.len();
        let mut prec = if kr == 1 {
            &self.d.xtx * self.state.res_tau[0].powi(-2)
        } else {
            let mut m = DMatrix::zeros(q, q);
            for i in 0..self.d.n {
                let w = self.state.res_tau[self.state.c0[i]].powi(-2);
                let row = self.d.row(i);
                for a in 0..q {
                    for b in 0..=a {
                        m[(a, b)] += w * row[a] * row[b];
                    }
                }
            }
            m.fill_upper_triangle_with_lower_triangle();
            m
        };
        for a in 0..q {
            prec[(a, a)] += 1.0 / self.prior.location_prior_var;
        }
        let mut rhs = DVector::zeros(q);
        for i in 0..self.d.n {
            let c0 = self.state.c0[i];
            let t = self.d.y[i] - self.d.z1_of(&self.state, i) - self.het[i] - self.state.res_mu[c0];
            let w = self.state.res_tau[c0].powi(-2);
            for (a, x) in self.d.row(i).iter().enumerate() {
                rhs[a] += w * x * t;
            }
        }
        let chol = prec.cholesky().ok_or("fixed-effect precision is not numerically positive definite")?;
        let mean = chol.solve(&rhs);
        let xi = DVector::from_fn(q, |_, _| std_normal_draw(&mut self.rng));
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&xi)
            .ok_or("singular Cholesky factor")?;
        let beta = mean + noise;
        self.state.beta = beta.iter().copied().collect();
        self.eta = self.d.eta(&self.state.beta);
        Ok(())
    }

    fn effect_stats(&self) -> (Vec<usize>, Vec<f64>) {
        let k = self.state.p.len();
        let mut n = vec![0usize; k];
        let mut s = vec![0.0; k];
        for (z, c) in self.state.z1.iter().zip(&self.state.c1) {
            n[*c] += 1;
            s[*c] += z;
        }
        (n, s)
    }

    fn update_effect_means(&mut self) {
        let (n, s) = self.effect_stats();
        for j in 0..self.state.p.len() {
            let prec_lik = self.state.tau[j].powi(-2);
            let prec = n[j] as f64 * prec_lik + 1.0 / self.prior.location_prior_var;
            let m = s[j] * prec_lik / prec;
            self.state.mu[j] = m + prec.sqrt().recip() * std_normal_draw(&mut self.rng);
        }
    }

    fn update_effect_weights(&mut self) {
        let (n, _) = self.effect_stats();
        let alphas: Vec<f64> = n.iter().map(|c| self.prior.dirichlet_alpha + *c as f64).collect();
        self.state.p = dirichlet_draw(&alphas, &mut self.rng);
    }

    fn update_scales(&mut self) {
        let k = self.state.p.len();
        let mut n = vec![0usize; k];
        let mut ss = vec![0.0; k];
        for (z, c) in self.state.z1.iter().zip(&self.state.c1) {
            n[*c] += 1;
            ss[*c] += (z - self.state.mu[*c]).powi(2);
        }
        for j in 0..k {
            self.state.tau[j] = self.draw_scale(self.state.tau[j], n[j], ss[j]);
        }

        let kr = self.state.res_p.len();
        let mut n = vec![0usize; kr];
        let mut ss = vec![0.0; kr];
        for i in 0..self.d.n {
            let c = self.state.c0[i];
            n[c] += 1;
            ss[c] += (self.residual(i) - self.state.res_mu[c]).powi(2);
        }
        for j in 0..kr {
            self.state.res_tau[j] = self.draw_scale(self.state.res_tau[j], n[j], ss[j]);
        }

        for h in 0..self.state.omega.len() {
            let rows = &self.d.het_rows[h];
            let ss: f64 = rows.iter().map(|&i| self.state.z_l[h][i].powi(2)).sum();
            let count = rows.len();
            self.state.omega[h] = self.draw_scale(self.state.omega[h], count, ss);
        }
    }

    fn update_residual_mixture(&mut self) {
        let kr = self.state.res_p.len();
        if kr == 1 {
            return;
        }
        let last = kr - 1;
        let resid: Vec<f64> = (0..self.d.n).map(|i| self.residual(i)).collect();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); kr];
        for (i, c) in self.state.c0.iter().enumerate() {
            members[*c].push(i);
        }
        let last_loglik = |mu_last: f64, tau: f64| -> f64 {
            members[last].iter().map(|&i| norm_ln_pdf(resid[i], mu_last, tau)).sum()
        };

        // Weights: the Dirichlet full conditional ignoring the constraint is
        // the proposal, so the acceptance ratio reduces to the likelihood of
        // the last component, whose mean moves with the weights.
        let alphas: Vec<f64> = members.iter().map(|m| self.prior.dirichlet_alpha + m.len() as f64).collect();
        let proposal = dirichlet_draw(&alphas, &mut self.rng);
        if proposal[last] < MIN_LAST_WEIGHT {
            self.rejected_weight_proposals += 1;
        } else {
            let s: f64 = (0..last).map(|j| proposal[j] * self.state.res_mu[j]).sum();
            let mu_new = -s / proposal[last];
            let tau = self.state.res_tau[last];
            let log_ratio = last_loglik(mu_new, tau) - last_loglik(self.state.res_mu[last], tau);
            if self.rng.random::<f64>().ln() < log_ratio {
                self.state.res_p = proposal;
                self.state.res_mu[last] = mu_new;
            }
        }

        // Free means: under the constraint the last mean is linear in each
        // free mean, so the conditional is normal and is drawn exactly.
        for j in 0..last {
            let b = self.state.res_p[j] / self.state.res_p[last];
            let others: f64 = (0..last).filter(|l| *l != j).map(|l| self.state.res_p[l] * self.state.res_mu[l]).sum();
            let c = -others / self.state.res_p[last];
            let pj = self.state.res_tau[j].powi(-2);
            let pk = self.state.res_tau[last].powi(-2);
            let sum_j: f64 = members[j].iter().map(|&i| resid[i]).sum();
            let sum_k: f64 = members[last].iter().map(|&i| resid[i] - c).sum();
            let prec = members[j].len() as f64 * pj + members[last].len() as f64 * b * b * pk + 1.0 / self.prior.location_prior_var;
            let m = (sum_j * pj - b * sum_k * pk) / prec;
            self.state.res_mu[j] = m + prec.sqrt().recip() * std_normal_draw(&mut self.rng);
            self.state.enforce_residual_constraint();
        }
    }

    /// Error carrying a dump of the current parameters.
    pub fn failure(&self, chain: usize, sweep: usize, reason: &str) -> Error {
        let dump = serde_json::json!({
            "reason": reason,
            "beta": self.state.beta,
            "p": self.state.p,
            "mu": self.state.mu,
            "tau": self.state.tau,
            "res_p": self.state.res_p,
            "res_mu": self.state.res_mu,
            "res_tau": self.state.res_tau,
            "omega": self.state.omega,
        });
        Error::NonFinite { chain, sweep, state: dump.to_string() }
    }
}
