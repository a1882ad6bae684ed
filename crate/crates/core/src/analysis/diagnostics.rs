//! Rank-normalized split-R-hat with bulk and tail effective sample sizes.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{norm_quantile, percentile};

/// Fewest retained draws per chain accepted by [`diagnose`].
pub const MIN_DRAWS_PER_CHAIN: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Maximum of the bulk and folded rank-normalized split-R-hat, floored
    /// at one.
    pub rhat: f64,
    pub ess_bulk: f64,
    pub ess_tail: f64,
    /// Set when a value is undefined, for example for constant chains.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Splits every chain into two halves, dropping the middle draw of odd
/// lengths.
fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    chains
        .iter()
        .flat_map(|c| {
            let half = c.len() / 2;
            [c[..half].to_vec(), c[c.len() - half..].to_vec()]
        })
        .collect()
}

/// Replaces draws by normal scores of their pooled ranks, with average
/// ranks for ties.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut all: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, v)| v.iter().enumerate().map(move |(i, x)| (*x, c, i)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s = all.len() as f64;
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut start = 0;
    while start < all.len() {
        let mut end = start + 1;
        while end < all.len() && all[end].0 == all[start].0 {
            end += 1;
        }
        // Ranks are 1-based; tied values share the average rank.
        let rank = (start + end + 1) as f64 / 2.0;
        let z = norm_quantile((rank - 0.375) / (s + 0.25));
        for &(_, c, i) in &all[start..end] {
            out[c][i] = z;
        }
        start = end;
    }
    out
}

fn chain_mean_var(c: &[f64]) -> (f64, f64) {
    let n = c.len() as f64;
    let m = c.iter().sum::<f64>() / n;
    let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Potential scale reduction of already split chains; `None` when the
/// within-chain variance vanishes.
fn rhat_basic(chains: &[Vec<f64>]) -> Option<f64> {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| chain_mean_var(c)).collect();
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
    let b = n / (m - 1.0) * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m;
    if !(w > 0.0) {
        return None;
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Some((var_plus / w).sqrt())
}

/// Biased autocovariance at every lag, via zero-padded FFT.
fn autocovariance(x: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = x.len();
    let len = (2 * n).next_power_of_two();
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf[..n].iter().map(|c| c.re / (len as f64 * n as f64)).collect()
}

/// Effective sample size of already split chains from Geyer's initial
/// monotone sequence of paired autocorrelations.
fn ess_basic(chains: &[Vec<f64>]) -> Option<f64> {
    let m = chains.len();
    let n = chains[0].len();
    let mut planner = FftPlanner::new();
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(c, &mut planner)).collect();
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let mean_var = acov.iter().map(|a| a[0]).sum::<f64>() / m as f64 * n as f64 / (n as f64 - 1.0);
    let mut var_plus = mean_var * (n as f64 - 1.0) / n as f64;
    if m > 1 {
        let g = means.iter().sum::<f64>() / m as f64;
        var_plus += means.iter().map(|x| (x - g).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    }
    if !(var_plus > 0.0) || !(mean_var > 0.0) {
        return None;
    }
    let rho_at = |t: usize| 1.0 - (mean_var - acov.iter().map(|a| a[t]).sum::<f64>() / m as f64) / var_plus;

    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho_at(1);
    rho[1] = odd;
    let mut t = 1;
    while t + 2 < n.saturating_sub(3) && even + odd > 0.0 {
        even = rho_at(t + 1);
        odd = rho_at(t + 2);
        if even + odd >= 0.0 {
            rho[t + 1] = even;
            rho[t + 2] = odd;
        }
        t += 2;
    }
    let max_t = t;
    if even > 0.0 && max_t + 1 < n {
        rho[max_t + 1] = even;
    }
    // Enforce a monotone sequence of pair sums.
    let mut t = 1;
    while t + 2 <= max_t {
        let prev = rho[t - 1] + rho[t];
        if rho[t + 1] + rho[t + 2] > prev {
            rho[t + 1] = prev / 2.0;
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tail = if max_t + 1 < n { rho[max_t + 1] } else { 0.0 };
    let tau = (-1.0 + 2.0 * rho[..=max_t].iter().sum::<f64>() + tail).max(1.0 / total.log10());
    Some(total / tau)
}

/// Convergence diagnostics of one scalar quantity from its per-chain traces.
///
/// Requires at least two chains of equal length with
/// [`MIN_DRAWS_PER_CHAIN`] draws each. R-hat is reported as at least one and
/// the effective sample sizes as at most the number of draws; undefined
/// values (constant chains) are NaN with an explanatory note.
pub fn diagnose(chains: &[Vec<f64>]) -> Result<Diagnostics> {
    if chains.len() < 2 {
        return Err(Error::InsufficientDraws(format!("{} chain(s); at least 2 are needed", chains.len())));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::InsufficientDraws("chains differ in length".into()));
    }
    if n < MIN_DRAWS_PER_CHAIN {
        return Err(Error::InsufficientDraws(format!(
            "{n} draws per chain; at least {MIN_DRAWS_PER_CHAIN} are needed"
        )));
    }
    if chains.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite draw in diagnostics input".into()));
    }
    let total = (chains.len() * n) as f64;
    let halves = split(chains);
    let first = chains[0][0];
    if chains.iter().flatten().all(|x| *x == first) {
        return Ok(Diagnostics {
            rhat: f64::NAN,
            ess_bulk: f64::NAN,
            ess_tail: f64::NAN,
            note: Some("all draws are identical; R-hat and ESS are undefined".into()),
        });
    }

    let bulk = rank_normalize(&halves);
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let median = percentile(&pooled, 0.5);
    let folded: Vec<Vec<f64>> = halves.iter().map(|c| c.iter().map(|x| (x - median).abs()).collect()).collect();
    let folded = rank_normalize(&folded);
    let mut note = None;
    let rhat = match (rhat_basic(&bulk), rhat_basic(&folded)) {
        (Some(a), Some(b)) => a.max(b).max(1.0),
        (Some(a), None) | (None, Some(a)) => a.max(1.0),
        (None, None) => {
            note = Some("zero within-chain variance; R-hat undefined".into());
            f64::NAN
        }
    };

    let clamp = |e: Option<f64>| e.map_or(f64::NAN, |v| v.min(total));
    let ess_bulk = clamp(ess_basic(&bulk));
    let mut tails = Vec::new();
    for q in [0.05, 0.95] {
        let cut = percentile(&pooled, q);
        let ind: Vec<Vec<f64>> = halves.iter().map(|c| c.iter().map(|x| (*x <= cut) as u8 as f64).collect()).collect();
        tails.push(ess_basic(&ind));
    }
    let ess_tail = match (tails[0], tails[1]) {
        (Some(a), Some(b)) => a.min(b).min(total),
        (Some(a), None) | (None, Some(a)) => a.min(total),
        (None, None) => {
            note.get_or_insert_with(|| "tail indicators are constant; tail ESS undefined".into());
            f64::NAN
        }
    };
    Ok(Diagnostics { rhat, ess_bulk, ess_tail, note })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::stats::std_normal_draw;

    fn iid(chains: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seeded(seed);
        (0..chains).map(|_| (0..n).map(|_| std_normal_draw(&mut rng)).collect()).collect()
    }

    fn ar1(n: usize, rho: f64, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                x = rho * x + (1.0 - rho * rho).sqrt() * std_normal_draw(&mut rng);
                x
            })
            .collect()
    }

    #[test]
    fn iid_chains_are_well_mixed() {
        let d = diagnose(&iid(4, 2000, 1)).unwrap();
        assert!((0.999..=1.01).contains(&d.rhat), "{d:?}");
        assert!((d.ess_bulk / 8000.0 - 1.0).abs() < 0.2, "{d:?}");
        assert!((d.ess_tail / 8000.0 - 1.0).abs() < 0.3, "{d:?}");
    }

    #[test]
    fn shifted_chain_is_flagged() {
        let mut c = iid(4, 2000, 2);
        c[3].iter_mut().for_each(|x| *x += 5.0);
        assert!(diagnose(&c).unwrap().rhat > 1.5);
    }

    #[test]
    fn autocorrelated_chain_has_matching_ess() {
        // The integrated autocorrelation time of AR(1) is (1 + rho) / (1 - rho).
        let chains: Vec<Vec<f64>> = (0..4).map(|k| ar1(5000, 0.8, 10 + k)).collect();
        let d = diagnose(&chains).unwrap();
        let nominal = 20_000.0 / 9.0;
        assert!((d.ess_bulk / nominal - 1.0).abs() < 0.25, "{}", d.ess_bulk);
    }

    #[test]
    fn fft_autocovariance_matches_direct_sum() {
        let x = ar1(300, 0.5, 3);
        let m = x.iter().sum::<f64>() / 300.0;
        let fast = autocovariance(&x, &mut FftPlanner::new());
        for t in [0, 1, 7, 150] {
            let direct: f64 = (0..300 - t).map(|i| (x[i] - m) * (x[i + t] - m)).sum::<f64>() / 300.0;
            assert!((fast[t] - direct).abs() < 1e-12, "lag {t}");
        }
    }

    #[test]
    fn constant_chains_are_flagged() {
        let d = diagnose(&vec![vec![2.5; 200]; 4]).unwrap();
        assert!(d.rhat.is_nan() && d.ess_bulk.is_nan());
        assert!(d.note.unwrap().contains("identical"));
    }

    #[test]
    fn self_concatenated_chain_has_no_between_half_spread() {
        // Both halves of a chain glued to itself are the same sequence, so
        // the between-half variance is exactly zero and R-hat sits at its
        // floor even for a strongly autocorrelated chain.
        let c = ar1(400, 0.95, 4);
        let dup: Vec<f64> = c.iter().chain(&c).copied().collect();
        let halves = split(&[dup]);
        assert_eq!(halves[0], halves[1]);
        let raw = rhat_basic(&rank_normalize(&halves)).unwrap();
        assert!(raw <= 1.0);
    }

    #[test]
    fn too_few_draws_is_an_error() {
        assert!(diagnose(&iid(4, 50, 5)).is_err());
        assert!(diagnose(&iid(1, 500, 5)).is_err());
    }

    #[test]
    fn rank_normalization_handles_ties() {
        let z = rank_normalize(&[vec![1.0, 1.0, 2.0], vec![3.0, 1.0, 2.0]]);
        assert_eq!(z[0][0], z[1][1]);
        assert_eq!(z[0][2], z[1][2]);
        assert!(z[1][0] > z[0][2]);
    }
}
