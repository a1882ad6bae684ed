//! Estimation of the distribution of individual causal effects of a binary
//! exposure with causal mixed models.
//!
//! The crate covers the full workflow: simulating data from a structural
//! causal model with heterogeneous effects ([`scm`]), identifying and
//! bounding the variance of individual effects from arm moments
//! ([`variance`]), Gaussian linear mixed models for confounder selection and
//! initialization ([`lmm`]), a data-augmented Gibbs sampler for models whose
//! random exposure effect follows a finite Gaussian mixture ([`mcmc`]), and
//! posterior summaries, predictive checks and coverage studies
//! ([`analysis`]).

pub mod analysis;
pub mod cli;
pub mod data;
pub mod lmm;
pub mod mcmc;
pub mod error;
pub mod mixture;
pub mod model;
pub mod plot;
pub mod rng;
pub mod scm;
pub mod stats;
pub mod variance;

pub use data::Dataset;
pub use error::{Error, Result};
pub use mixture::GaussianMixture;
pub use model::{ChainConfig, ModelKind, ModelSpec, PriorSpec, Z1Storage};
pub use rng::SimRng;
pub use scm::{simulate, true_ice_law, EffectFamily, HiddenTruth, IceLaw, ScmConfig};
