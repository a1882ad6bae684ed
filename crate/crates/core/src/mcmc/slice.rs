//! Univariate slice sampling with stepping out and shrinkage.

use rand::Rng;

/// Maximum number of width-`w` steps taken on each side while stepping out.
const MAX_STEPS: usize = 32;
/// Shrinkage iterations before giving up and keeping the current point.
const MAX_SHRINK: usize = 200;

/// One slice-sampling transition from `x0` for the unnormalized log density
/// `log_f`, restricted to `[lower, upper]`.
///
/// `log_f` may return `-inf` outside its support; `x0` must have a finite
/// log density. The transition leaves the target invariant and always
/// returns a point inside the bounds.
pub fn slice_step<R, F>(x0: f64, mut log_f: F, w: f64, lower: f64, upper: f64, rng: &mut R) -> f64
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    debug_assert!(lower < upper && x0 >= lower && x0 <= upper);
    let f0 = log_f(x0);
    if !f0.is_finite() {
        return x0;
    }
    let level = f0 + rng.random::<f64>().ln();

    let mut left = x0 - w * rng.random::<f64>();
    let mut right = left + w;
    let j = rng.random_range(0..MAX_STEPS);
    let mut k = MAX_STEPS - 1 - j;
    for _ in 0..j {
        if left <= lower || log_f(left) <= level {
            break;
        }
        left -= w;
    }
    while k > 0 {
        if right >= upper || log_f(right) <= level {
            break;
        }
        right += w;
        k -= 1;
    }
    left = left.max(lower);
    right = right.min(upper);

    for _ in 0..MAX_SHRINK {
        let x = left + (right - left) * rng.random::<f64>();
        if log_f(x) > level {
            return x;
        }
        if x < x0 {
            left = x;
        } else {
            right = x;
        }
    }
    x0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::stats::{ks_distance, norm_cdf};

    #[test]
    fn samples_standard_normal() {
        let mut rng = seeded(3);
        let mut x = 0.0;
        let mut out = Vec::new();
        for i in 0..60_000 {
            x = slice_step(x, |v| -0.5 * v * v, 1.0, f64::NEG_INFINITY, f64::INFINITY, &mut rng);
            if i % 3 == 0 {
                out.push(x);
            }
        }
        assert!(ks_distance(&out, norm_cdf) < 0.015);
    }

    #[test]
    fn respects_hard_bounds() {
        // Log-uniform on [0, 2] in the variable u means density e^u there.
        let mut rng = seeded(4);
        let mut u: f64 = 1.0;
        let mut out = Vec::new();
        for _ in 0..40_000 {
            u = slice_step(u, |v| v, 0.5, 0.0, 2.0, &mut rng);
            assert!((0.0..=2.0).contains(&u));
            out.push(u);
        }
        let cdf = |v: f64| ((v.clamp(0.0, 2.0)).exp() - 1.0) / (2f64.exp() - 1.0);
        assert!(ks_distance(&out, cdf) < 0.02);
    }
}
