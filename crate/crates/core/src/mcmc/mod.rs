//! Data-augmented Gibbs sampler for causal mixed models whose random
//! exposure effect follows a finite Gaussian mixture.
//!
//! A sweep draws, in order: component labels, the latent exposure effects
//! of the exposed, heterogeneity effects, fixed effects, component means,
//! weights, scale parameters, and finally the constrained residual mixture.
//! Everything except the scales and the residual weights is drawn from its
//! exact conditional. Scales are slice sampled on the log scale within the
//! uniform prior support; residual weights use an independence proposal
//! from their unconstrained Dirichlet conditional.

mod density;
mod draws;
mod layout;
pub mod slice;
mod state;
mod sweep;

use rayon::prelude::*;

pub use density::log_posterior;
pub use draws::{ChainDraws, PosteriorDraws};
pub use layout::ParamLayout;
pub use state::AugmentedState;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lmm::{fit_lmm, LmmSpec};
use crate::model::{ChainConfig, ModelSpec, PriorSpec, Z1Storage};
use crate::rng::{derive_seed, seeded};
use state::Design;
use sweep::Sampler;

/// Rows whose latent effects are stored, evenly spaced over the data.
fn stored_individuals(n: usize, storage: Z1Storage) -> Vec<usize> {
    match storage {
        Z1Storage::None => Vec::new(),
        Z1Storage::All => (0..n).collect(),
        Z1Storage::Subset(m) if m >= n => (0..n).collect(),
        Z1Storage::Subset(m) => (0..m).map(|k| k * n / m).collect(),
    }
}

/// Equally spaced points on `[-1, 1]`, or `[0]` for a single point.
fn spread(k: usize) -> Vec<f64> {
    if k == 1 {
        vec![0.0]
    } else {
        (0..k).map(|j| -1.0 + 2.0 * j as f64 / (k - 1) as f64).collect()
    }
}

/// Starting state: fixed effects, residual sd and heterogeneity sds from the
/// Gaussian LMM; effect components spread evenly over plus or minus one LMM
/// standard deviation around the LMM mean effect. Without data every
/// parameter starts at a neutral value inside the prior support.
pub fn initial_state(ds: &Dataset, model: &ModelSpec, prior: &PriorSpec) -> Result<AugmentedState> {
    let (design, _) = Design::new(ds, model)?;
    let k = model.k_effect;
    let kr = model.k_residual;
    let cap = 0.99 * prior.scale_prior_upper;
    let fit = if ds.is_empty() {
        None
    } else {
        Some(fit_lmm(ds, &LmmSpec::new(ds.names().to_vec(), model.het_confounders.clone()))?)
    };
    let (beta, theta, sd, sigma, omega) = match &fit {
        Some(f) => {
            let sigma = f.var_resid.sqrt().clamp(1e-6, cap);
            let sd = f.var_z1.sqrt().max(0.05 * sigma).clamp(1e-6, cap);
            let omega = f.var_het.iter().map(|v| v.sqrt().max(0.05 * sigma).min(cap)).collect();
            let mut beta = vec![f.intercept()];
            beta.extend_from_slice(f.confounder_effects());
            (beta, f.exposure_effect(), sd, sigma, omega)
        }
        None => (vec![0.0; design.q], 0.0, 1.0, 1.0, vec![1.0; model.het_confounders.len()]),
    };
    let mu: Vec<f64> = spread(k).iter().map(|o| theta + o * sd).collect();
    let res_mu: Vec<f64> = spread(kr).iter().map(|o| 0.5 * o * sigma).collect();
    // The start of c1: the component nearest to the mean effect.
    let nearest = (0..k)
        .min_by(|a, b| (mu[*a] - theta).abs().total_cmp(&(mu[*b] - theta).abs()))
        .unwrap_or(0);
    let mut state = AugmentedState {
        beta,
        p: vec![1.0 / k as f64; k],
        mu,
        tau: vec![sd; k],
        res_p: vec![1.0 / kr as f64; kr],
        res_mu,
        res_tau: vec![sigma; kr],
        omega,
        z1: vec![theta; design.exposed.len()],
        c1: vec![nearest; design.exposed.len()],
        c0: vec![0; design.n],
        z_l: vec![vec![0.0; design.n]; model.het_confounders.len()],
    };
    state.enforce_residual_constraint();
    Ok(state)
}

/// Runs `cc.n_chains` independent chains in parallel.
///
/// Each chain starts from [`initial_state`] (overridden by `cc.init` when
/// given), discards `n_burn` sweeps, then keeps every `thin`-th of `n_iter`
/// sweeps. Chain `k` uses the seed `derive_seed(cc.seed, k)`, so results do
/// not depend on the thread count. An empty dataset samples the prior.
pub fn run_chains(ds: &Dataset, model: &ModelSpec, prior: &PriorSpec, cc: &ChainConfig) -> Result<PosteriorDraws> {
    model.validate()?;
    prior.validate()?;
    cc.validate()?;
    if !ds.is_empty() && ds.n_exposed() == 0 {
        return Err(Error::Dataset("no exposed individuals: the exposure effect is not identified".into()));
    }
    let (design, layout) = Design::new(ds, model)?;
    let mut init = initial_state(ds, model, prior)?;
    if let Some(row) = &cc.init {
        init.set_params(&layout, row)?;
        init.enforce_residual_constraint();
        init.check(prior.scale_prior_upper)?;
    }
    let stored = stored_individuals(ds.len(), cc.z1_storage);

    let chains = (0..cc.n_chains)
        .into_par_iter()
        .map(|k| run_one(k, &design, &layout, prior, cc, init.clone(), &stored))
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorDraws {
        layout,
        model: model.clone(),
        prior: prior.clone(),
        config: cc.clone(),
        z1_individuals: stored,
        chains,
    })
}

fn run_one(
    chain: usize,
    design: &Design,
    layout: &ParamLayout,
    prior: &PriorSpec,
    cc: &ChainConfig,
    init: AugmentedState,
    stored: &[usize],
) -> Result<ChainDraws> {
    let rng = seeded(derive_seed(cc.seed, chain as u64));
    let mut s = Sampler::new(design, prior, init, rng);
    let retained = cc.retained_per_chain();
    let mut params = Vec::with_capacity(retained);
    let mut z1 = Vec::with_capacity(if stored.is_empty() { 0 } else { retained });
    for sweep in 0..cc.n_burn + cc.n_iter {
        s.sweep().map_err(|reason| s.failure(chain, sweep, reason))?;
        if sweep < cc.n_burn || (sweep - cc.n_burn + 1) % cc.thin != 0 {
            continue;
        }
        params.push(s.state.flatten(layout));
        if !stored.is_empty() {
            let mixture = layout.effect_mixture(params.last().expect("just pushed"))?;
            let row = stored
                .iter()
                .map(|&i| match design.exposed_pos[i] {
                    Some(e) => s.state.z1[e],
                    None => mixture.sample(&mut s.rng),
                })
                .collect();
            z1.push(row);
        }
    }
    Ok(ChainDraws { params, z1, rejected_weight_proposals: s.rejected_weight_proposals })
}
