//! Two-phase confounder selection on data with one confounder of the mean,
//! one that modifies the outcome variance, and pure noise covariates.

use icedist::lmm::select_confounders;
use icedist::rng::seeded;
use icedist::scm::ConfounderLaw;
use icedist::{simulate, EffectFamily, ScmConfig};

fn main() -> icedist::Result<()> {
    let bernoulli = ConfounderLaw::Discrete { values: vec![0.0, 1.0], probs: vec![0.5, 0.5] };
    let cfg = ScmConfig {
        beta0: 100.0,
        beta_l: vec![8.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        confounder_law: vec![bernoulli; 6],
        alpha0: -0.5,
        alpha_l: vec![1.0, 0.8, 0.0, 0.0, 0.0, 0.0],
        sigma: 5.0,
        effect_family: EffectFamily::Gaussian { mean: -10.0, sd: 4.0 },
        noise_mixture: None,
        confounder_effect_sd: vec![0.0, 10.0, 0.0, 0.0, 0.0, 0.0],
        confounder_names: Some(["mean_conf", "var_conf", "noise1", "noise2", "noise3", "noise4"].map(String::from).to_vec()),
    };
    let (ds, _) = simulate(&cfg, 2500, &mut seeded(11))?;
    let sel = select_confounders(&ds, &ds.names().to_vec(), 0.05, 0.10)?;

    println!("mean phase (drop while the exposure effect moves < 5%)");
    for step in &sel.mean_phase {
        let changes: Vec<String> =
            step.removals.iter().map(|c| format!("{} {:+.3}", c.candidate, c.relative_change)).collect();
        println!("  effect {:>8.3}  [{}]  -> drop {:?}", step.exposure_effect, changes.join(", "), step.removed);
    }
    println!("variance phase (add while Var(Z1) moves > 10%)");
    for step in &sel.variance_phase {
        let changes: Vec<String> =
            step.additions.iter().map(|c| format!("{} {:+.3}", c.candidate, c.relative_change)).collect();
        println!("  var(Z1) {:>8.3}  [{}]  -> add {:?}", step.var_z1, changes.join(", "), step.added);
    }
    println!("selected: {:?}", sel.selected);
    Ok(())
}
