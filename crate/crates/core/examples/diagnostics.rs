//! Convergence diagnostics on synthetic chains with known behaviour and on
//! a short real fit.

use icedist::analysis::{diagnose, diagnostics_report};
use icedist::mcmc::run_chains;
use icedist::rng::seeded;
use icedist::{simulate, ChainConfig, ModelSpec, PriorSpec, ScmConfig};
use rand::Rng;
use rand_distr::StandardNormal;

fn ar1(phi: f64, n: usize, shift: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut x = 0.0;
    (0..n)
        .map(|_| {
            let e: f64 = rng.sample(StandardNormal);
            x = phi * x + (1.0 - phi * phi).sqrt() * e;
            x + shift
        })
        .collect()
}

fn main() -> icedist::Result<()> {
    let mut rng = seeded(1);
    let n = 4000;
    let cases = [
        ("iid", 0.0, 0.0),
        ("AR(1) phi=0.9", 0.9, 0.0),
        ("one chain shifted by 1", 0.0, 1.0),
    ];
    println!("{:<24} {:>7} {:>10} {:>10}", "chains", "rhat", "bulk ESS", "tail ESS");
    for (name, phi, shift) in cases {
        let chains: Vec<Vec<f64>> =
            (0..4).map(|k| ar1(phi, n, if k == 0 { shift } else { 0.0 }, &mut rng)).collect();
        let d = diagnose(&chains)?;
        println!("{name:<24} {:>7.3} {:>10.0} {:>10.0}", d.rhat, d.ess_bulk, d.ess_tail);
    }
    // For AR(1) the effective size is about n (1 - phi) / (1 + phi) per chain.
    println!("expected AR(1) ESS about {:.0}", 4.0 * n as f64 * 0.1 / 1.9);

    let (ds, _) = simulate(&ScmConfig::preset("fig3-gaussian")?, 1000, &mut seeded(2))?;
    let mut cc = ChainConfig::desk(2);
    cc.n_burn = 2_000;
    cc.n_iter = 8_000;
    let draws = run_chains(&ds, &ModelSpec::mixture(5), &PriorSpec::default(), &cc)?;
    println!("\nfit of {} draws", draws.total_draws());
    for (name, d) in diagnostics_report(&draws)? {
        let note = d.note.as_deref().unwrap_or("");
        println!("{name:<24} {:>7.3} {:>10.0} {:>10.0} {note}", d.rhat, d.ess_bulk, d.ess_tail);
    }
    Ok(())
}
