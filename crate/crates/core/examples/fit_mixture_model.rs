//! Fits the Gaussian-mixture causal mixed model to data simulated from the
//! Gaussian-effect preset and compares the posterior with the truth.
//!
//! Run with `cargo run --release --example fit_mixture_model [n] [seed]`.

use std::time::Instant;

use icedist::analysis::{diagnostics_report, effect_summary, HarmDirection};
use icedist::mcmc::run_chains;
use icedist::rng::seeded;
use icedist::{simulate, true_ice_law, ChainConfig, ModelSpec, PriorSpec, ScmConfig};

fn main() -> icedist::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(1000, |a| a.parse().expect("n must be an integer"));
    let seed: u64 = args.next().map_or(2024, |a| a.parse().expect("seed must be an integer"));

    let scm = ScmConfig::preset("fig3-gaussian")?;
    let (ds, _) = simulate(&scm, n, &mut seeded(seed))?;
    println!("simulated {n} individuals, {} exposed", ds.n_exposed());

    let start = Instant::now();
    let draws = run_chains(&ds, &ModelSpec::mixture(5), &PriorSpec::default(), &ChainConfig::desk(seed))?;
    println!("{} chains, {} retained draws in {:.1?}", draws.n_chains(), draws.total_draws(), start.elapsed());

    let truth = true_ice_law(&scm)?;
    let s = effect_summary(&draws, HarmDirection::Positive)?;
    println!("\n{:<10} {:>9} {:>9} {:>9} {:>9}", "", "truth", "mean", "2.5%", "97.5%");
    let row = |name: &str, t: f64, i: icedist::analysis::Interval| {
        println!("{name:<10} {t:>9.3} {:>9.3} {:>9.3} {:>9.3}", i.mean, i.lo, i.hi);
    };
    row("ATE", truth.mean(), s.ate);
    row("P(ICE>0)", 1.0 - truth.cdf(0.0), s.prob_positive);
    for q in &s.quantiles {
        row(&format!("q{:.2}", q.level), truth.quantile(q.level)?, q.interval);
    }

    println!("\nconvergence");
    for (name, d) in diagnostics_report(&draws)? {
        println!("{name:<16} rhat {:.3}  bulk ESS {:>7.0}  tail ESS {:>7.0}", d.rhat, d.ess_bulk, d.ess_tail);
    }
    Ok(())
}
