use statrs::function::gamma::ln_gamma;

use super::state::{AugmentedState, Design};
use crate::data::Dataset;
use crate::model::{ModelSpec, PriorSpec};
use crate::stats::norm_ln_pdf;

/// Joint log density of the outcomes, latent variables and parameters,
/// including all normalizing constants.
///
/// Returns negative infinity for states outside the support: scales outside
/// `(0, upper]`, weights off the simplex, labels out of range, residual
/// means violating the zero-mean constraint, or a shape mismatch with the
/// data. Unexposed individuals carry no latent exposure effect here.
pub fn log_posterior(state: &AugmentedState, ds: &Dataset, model: &ModelSpec, prior: &PriorSpec) -> f64 {
    match Design::new(ds, model) {
        Ok((design, _)) => log_posterior_design(state, &design, prior),
        Err(_) => f64::NEG_INFINITY,
    }
}

fn ln_dirichlet(w: &[f64], alpha: f64) -> f64 {
    let k = w.len() as f64;
    let norm = ln_gamma(k * alpha) - k * ln_gamma(alpha);
    norm + w.iter().map(|x| (alpha - 1.0) * x.ln()).sum::<f64>()
}

fn in_support(state: &AugmentedState, d: &Design, prior: &PriorSpec) -> bool {
    let upper = prior.scale_prior_upper;
    let k = state.p.len();
    let kr = state.res_p.len();
    let shapes = state.mu.len() == k
        && state.tau.len() == k
        && state.res_mu.len() == kr
        && state.res_tau.len() == kr
        && state.beta.len() == d.q
        && state.z1.len() == d.exposed.len()
        && state.c1.len() == d.exposed.len()
        && state.c0.len() == d.n
        && state.omega.len() == d.het_rows.len()
        && state.z_l.len() == d.het_rows.len()
        && state.z_l.iter().all(|z| z.len() == d.n);
    if !shapes || state.check(upper).is_err() || !state.is_finite() {
        return false;
    }
    let constraint: f64 = state.res_p.iter().zip(&state.res_mu).map(|(p, m)| p * m).sum();
    let scale: f64 = 1.0 + state.res_mu.iter().map(|m| m.abs()).sum::<f64>();
    if constraint.abs() > 1e-9 * scale || (kr == 1 && state.res_mu[0] != 0.0) {
        return false;
    }
    // Heterogeneity effects exist only where the indicator is one.
    state
        .z_l
        .iter()
        .zip(&d.het_ind)
        .all(|(z, ind)| z.iter().zip(ind).all(|(v, on)| *on || *v == 0.0))
}

pub(crate) fn log_posterior_design(state: &AugmentedState, d: &Design, prior: &PriorSpec) -> f64 {
    if !in_support(state, d, prior) {
        return f64::NEG_INFINITY;
    }
    let prior_sd = prior.location_prior_var.sqrt();
    let ln_uniform = -prior.scale_prior_upper.ln();
    let kr = state.res_p.len();
    let mut lp = 0.0;

    let eta = d.eta(&state.beta);
    let het = d.het_sum(state);
    for i in 0..d.n {
        let c = state.c0[i];
        let mean = eta[i] + d.z1_of(state, i) + het[i] + state.res_mu[c];
        lp += norm_ln_pdf(d.y[i], mean, state.res_tau[c]);
        if kr > 1 {
            lp += state.res_p[c].ln();
        }
    }
    for (e, z) in state.z1.iter().enumerate() {
        let c = state.c1[e];
        lp += state.p[c].ln() + norm_ln_pdf(*z, state.mu[c], state.tau[c]);
    }
    for ((rows, z), om) in d.het_rows.iter().zip(&state.z_l).zip(&state.omega) {
        lp += rows.iter().map(|&i| norm_ln_pdf(z[i], 0.0, *om)).sum::<f64>();
    }

    lp += state.beta.iter().map(|b| norm_ln_pdf(*b, 0.0, prior_sd)).sum::<f64>();
    lp += state.mu.iter().map(|m| norm_ln_pdf(*m, 0.0, prior_sd)).sum::<f64>();
    lp += ln_dirichlet(&state.p, prior.dirichlet_alpha);
    lp += ln_uniform * (state.tau.len() + state.res_tau.len() + state.omega.len()) as f64;
    if kr > 1 {
        lp += ln_dirichlet(&state.res_p, prior.dirichlet_alpha);
        lp += state.res_mu[..kr - 1].iter().map(|m| norm_ln_pdf(*m, 0.0, prior_sd)).sum::<f64>();
    }
    lp
}
