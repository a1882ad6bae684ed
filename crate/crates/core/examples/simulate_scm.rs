//! Draws a dataset from each built-in structural causal model and compares
//! the simulated individual effects with their known distribution.
//!
//! `cargo run --release --example simulate_scm [n] [out_dir]` also writes
//! the data and hidden truth of the last preset when `out_dir` is given.

use icedist::rng::seeded;
use icedist::{simulate, true_ice_law, ScmConfig};

const PRESETS: [&str; 5] = ["fig3-gaussian", "fig3-lognormal", "fig3-mixture", "fig1-narrow", "fig1-wide"];

fn main() -> icedist::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(20_000, |a| a.parse().expect("n must be an integer"));
    let out = args.next();

    println!("{:<16} {:>8} {:>10} {:>10} {:>10} {:>10}", "preset", "exposed", "mean U", "law mean", "sd U", "P(U>0)");
    let mut last = None;
    for (k, name) in PRESETS.iter().enumerate() {
        let cfg = ScmConfig::preset(name)?;
        let (ds, truth) = simulate(&cfg, n, &mut seeded(k as u64 + 1))?;
        let law = true_ice_law(&cfg)?;
        let mean = truth.u.iter().sum::<f64>() / n as f64;
        let sd = (truth.u.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let positive = truth.u.iter().filter(|u| **u > 0.0).count() as f64 / n as f64;
        println!(
            "{name:<16} {:>8} {mean:>10.3} {:>10.3} {sd:>10.3} {positive:>10.4}",
            ds.n_exposed(),
            law.mean(),
        );
        last = Some((ds, truth));
    }

    if let (Some(dir), Some((ds, truth))) = (out, last) {
        std::fs::create_dir_all(&dir).map_err(|e| icedist::Error::Argument(format!("{dir}: {e}")))?;
        ds.write_csv(format!("{dir}/data.csv"))?;
        truth.write_csv(format!("{dir}/truth.csv"))?;
        println!("wrote {dir}/data.csv and {dir}/truth.csv");
    }
    Ok(())
}
