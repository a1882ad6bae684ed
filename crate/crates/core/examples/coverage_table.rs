//! A small calibration study: repeatedly simulate, fit and check whether
//! the 95% posterior intervals of the effect quantiles cover the truth.
//!
//! `cargo run --release --example coverage_table [replicates] [n]`; the
//! full-size study takes several minutes per dozen replicates.

use icedist::analysis::{coverage_study, CoverageOptions};
use icedist::{ChainConfig, ScmConfig};

fn main() -> icedist::Result<()> {
    let mut args = std::env::args().skip(1);
    let replicates: usize = args.next().map_or(4, |a| a.parse().expect("replicates must be an integer"));
    let n: usize = args.next().map_or(1000, |a| a.parse().expect("n must be an integer"));

    let mut cc = ChainConfig::desk(17);
    cc.n_burn = 5_000;
    cc.n_iter = 15_000;
    let opts = CoverageOptions::new(replicates, n, cc);
    let table = coverage_study(&ScmConfig::preset("fig3-gaussian")?, &opts)?;

    println!("{} of {} replicates succeeded", table.succeeded, table.replicates);
    println!("{:<10} {:>9} {:>10} {:>8} {:>11} {:>9}", "quantity", "truth", "post mean", "MC se", "predictive", "coverage");
    for r in &table.rows {
        println!(
            "{:<10} {:>9.3} {:>10.3} {:>8.3} {:>11.3} {:>9.2}",
            r.quantity, r.truth, r.average_posterior_mean, r.mean_se, r.average_predictive, r.coverage
        );
    }
    for (r, e) in &table.failures {
        println!("replicate {r} failed: {e}");
    }
    Ok(())
}
