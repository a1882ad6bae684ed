//! Finite univariate Gaussian mixtures.
//!
//! The same type describes the law of the random exposure effect and the
//! flexible residual law, and is what posterior summaries are computed from
//! iteration by iteration.

use std::collections::BTreeMap;

use rand::Rng;
use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::stats::{norm_cdf, norm_pdf, std_normal_draw};

const SIMPLEX_TOL: f64 = 1e-12;
/// Components narrower than this are treated as atoms by [`GaussianMixture::quantile`].
pub const MIN_QUANTILE_SD: f64 = 1e-10;
const QUANTILE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidMixture("K must be at least 1".into()));
        }
        if means.len() != k || sds.len() != k {
            return Err(Error::InvalidMixture(format!(
                "length mismatch: {} weights, {} means, {} sds",
                k,
                means.len(),
                sds.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidMixture(format!("negative or non-finite weight in {weights:?}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidMixture(format!("weights sum to {total}, not 1")));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidMixture("non-finite component mean".into()));
        }
        if sds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidMixture(format!("component sds must be > 0, got {sds:?}")));
        }
        Ok(Self { weights, means, sds })
    }

    /// Single-component mixture N(mean, sd^2).
    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![sd])
    }

    /// Builds a mixture from weights that may be off the simplex by rounding
    /// (e.g. draws read back from text); they are renormalized.
    pub fn from_unnormalized(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidMixture(format!("weights sum to {total}")));
        }
        let w = weights.iter().map(|w| w / total).collect();
        Self::new(w, means, sds)
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sds(&self) -> &[f64] {
        &self.sds
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.components()
            .map(|(w, m, s)| w * (s * s + (m - mu) * (m - mu)))
            .sum()
    }

    fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((&w, &m), &s)| (w, m, s))
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.components()
            .map(|(w, m, s)| w * norm_pdf((y - m) / s) / s)
            .sum()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.components()
            .map(|(w, m, s)| w * norm_cdf((y - m) / s))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    /// Inverse CDF by bisection. The initial bracket spans ten of the widest
    /// component sds beyond the extreme means and is expanded if needed.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Quantile {
                q,
                reason: "q must lie strictly between 0 and 1".into(),
            });
        }
        if let Some(s) = self.sds.iter().find(|s| **s < MIN_QUANTILE_SD) {
            return Err(Error::Quantile {
                q,
                reason: format!("component sd {s:e} is below {MIN_QUANTILE_SD:e}"),
            });
        }
        let max_sd = self.sds.iter().copied().fold(0.0, f64::max);
        let min_mu = self.means.iter().copied().fold(f64::INFINITY, f64::min);
        let max_mu = self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut lo = min_mu - 10.0 * max_sd;
        let mut hi = max_mu + 10.0 * max_sd;
        let mut width = hi - lo;
        let mut expansions = 0;
        while self.cdf(lo) > q || self.cdf(hi) < q {
            expansions += 1;
            if expansions > 64 || !width.is_finite() {
                return Err(Error::Quantile {
                    q,
                    reason: format!("bracket expansion failed at [{lo}, {hi}]"),
                });
            }
            width *= 2.0;
            lo -= width;
            hi += width;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= QUANTILE_TOL * 1e-1 || mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let j = self.sample_component(rng);
        self.means[j] + self.sds[j] * std_normal_draw(rng)
    }

    pub(crate) fn sample_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.weights.len() == 1 {
            return 0;
        }
        let mut u = rng.random::<f64>();
        for (j, w) in self.weights.iter().enumerate() {
            u -= w;
            if u < 0.0 {
                return j;
            }
        }
        self.weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}

impl Serialize for GaussianMixture {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let k = self.k();
        let mut map = serializer.serialize_map(Some(1 + 3 * k))?;
        map.serialize_entry("K", &k)?;
        for (j, w) in self.weights.iter().enumerate() {
            map.serialize_entry(&format!("w_{}", j + 1), w)?;
        }
        for (j, m) in self.means.iter().enumerate() {
            map.serialize_entry(&format!("mu_{}", j + 1), m)?;
        }
        for (j, s) in self.sds.iter().enumerate() {
            map.serialize_entry(&format!("tau_{}", j + 1), s)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for GaussianMixture {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = BTreeMap::<String, f64>::deserialize(deserializer)?;
        let k = *raw.get("K").ok_or_else(|| D::Error::missing_field("K"))?;
        if k < 1.0 || k.fract() != 0.0 {
            return Err(D::Error::custom(format!("K must be a positive integer, got {k}")));
        }
        let k = k as usize;
        let take = |prefix: &str| -> std::result::Result<Vec<f64>, D::Error> {
            (1..=k)
                .map(|j| {
                    let key = format!("{prefix}_{j}");
                    raw.get(&key)
                        .copied()
                        .ok_or_else(|| D::Error::custom(format!("missing field `{key}`")))
                })
                .collect()
        };
        let expected = 1 + 3 * k;
        if raw.len() != expected {
            return Err(D::Error::custom(format!(
                "expected {expected} keys for K = {k}, found {}",
                raw.len()
            )));
        }
        let (w, m, s) = (take("w")?, take("mu")?, take("tau")?);
        GaussianMixture::new(w, m, s).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn fig1d() -> GaussianMixture {
        GaussianMixture::new(vec![0.6, 0.4], vec![-31.0, 9.0], vec![10.0, 5.0]).unwrap()
    }

    #[test]
    fn pdf_examples() {
        let std = GaussianMixture::normal(0.0, 1.0).unwrap();
        assert!((std.pdf(0.0) - 0.39894).abs() < 1e-5);
        let sym = GaussianMixture::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!((sym.pdf(0.0) - 0.24197).abs() < 1e-5);
        assert!((fig1d().mean() + 15.0).abs() < 1e-12);
    }

    #[test]
    fn tail_probabilities_match_table_values() {
        let g = GaussianMixture::normal(-15.0, 10.0).unwrap();
        let p = 1.0 - g.cdf(0.0);
        assert!((p - 0.0668).abs() < 1e-4, "{p}");
        assert!((p - 0.07).abs() < 0.01);
        let p = 1.0 - fig1d().cdf(0.0);
        assert!((p - 0.386).abs() < 1e-3, "{p}");
        assert!((p - 0.39).abs() < 0.01);
    }

    #[test]
    fn quantile_of_fig1d_mixture() {
        let q = fig1d().quantile(0.05).unwrap();
        assert!((q + 44.83).abs() < 0.01, "{q}");
    }

    #[test]
    fn validation_errors() {
        assert!(GaussianMixture::new(vec![], vec![], vec![]).is_err());
        assert!(GaussianMixture::new(vec![0.5, 0.4], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![0.0], vec![0.0]).is_err());
        assert!(GaussianMixture::new(vec![1.5, -0.5], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn degenerate_component_samples_but_refuses_quantile() {
        let g = GaussianMixture::normal(5.0, 1e-12).unwrap();
        let mut rng = seeded(1);
        for _ in 0..100 {
            assert!((g.sample(&mut rng) - 5.0).abs() < 1e-9);
        }
        assert!(matches!(g.quantile(0.5), Err(Error::Quantile { .. })));
        assert!(GaussianMixture::normal(0.0, 1.0).unwrap().quantile(1.0).is_err());
    }

    #[test]
    fn sampling_matches_cdf() {
        let g = fig1d();
        let mut rng = seeded(2024);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| g.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let above = draws.iter().filter(|x| **x > 0.0).count() as f64 / n as f64;
        assert!((mean + 15.0).abs() < 0.1, "{mean}");
        assert!((above - (1.0 - g.cdf(0.0))).abs() < 0.003, "{above}");

        let mut a = seeded(9);
        let mut b = seeded(9);
        for _ in 0..1000 {
            assert_eq!(g.sample(&mut a).to_bits(), g.sample(&mut b).to_bits());
        }
    }

    #[test]
    fn empirical_cdf_matches_for_fig1_families() {
        let families = [
            GaussianMixture::normal(-15.0, 2.0).unwrap(),
            GaussianMixture::normal(-15.0, 15.0).unwrap(),
            GaussianMixture::normal(-15.0, 10.0).unwrap(),
            fig1d(),
        ];
        for (i, g) in families.iter().enumerate() {
            let mut rng = seeded(100 + i as u64);
            let draws: Vec<f64> = (0..100_000).map(|_| g.sample(&mut rng)).collect();
            let d = crate::stats::ks_distance(&draws, |y| g.cdf(y));
            assert!(d < 0.01, "family {i}: KS {d}");
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        for g in [fig1d(), GaussianMixture::normal(3.0, 0.5).unwrap()] {
            let lo = g.means().iter().zip(g.sds()).map(|(m, s)| m - 10.0 * s).fold(f64::INFINITY, f64::min);
            let hi = g.means().iter().zip(g.sds()).map(|(m, s)| m + 10.0 * s).fold(f64::NEG_INFINITY, f64::max);
            let total = adaptive_simpson(&|y| g.pdf(y), lo, hi, 1e-10, 40);
            assert!((total - 1.0).abs() < 1e-6, "{total}");
        }
    }

    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64, depth: u32) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64, whole: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (l, r) = (simpson(f, a, m), simpson(f, m, b));
            if depth == 0 || (l + r - whole).abs() <= 15.0 * eps {
                l + r + (l + r - whole) / 15.0
            } else {
                rec(f, a, m, eps / 2.0, l, depth - 1) + rec(f, m, b, eps / 2.0, r, depth - 1)
            }
        }
        rec(f, a, b, eps, simpson(f, a, b), depth)
    }

    #[test]
    fn flat_record_round_trip() {
        let g = fig1d();
        let text = serde_json::to_string(&g).unwrap();
        assert!(text.starts_with("{\"K\":2,\"w_1\":0.6,\"w_2\":0.4,\"mu_1\":-31.0"));
        let back: GaussianMixture = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<GaussianMixture>(r#"{"K":1,"w_1":1.0,"mu_1":0.0}"#).is_err());
    }

    fn arb_mixture() -> impl Strategy<Value = GaussianMixture> {
        (1usize..6).prop_flat_map(|k| {
            (
                prop::collection::vec(0.05f64..1.0, k),
                prop::collection::vec(-50.0f64..50.0, k),
                prop::collection::vec(0.05f64..20.0, k),
            )
                .prop_map(|(w, m, s)| GaussianMixture::from_unnormalized(w, m, s).unwrap())
        })
    }

    proptest! {
        #[test]
        fn cdf_is_monotone(g in arb_mixture(), a in -100.0f64..100.0, d in 0.0f64..50.0) {
            prop_assert!(g.cdf(a) <= g.cdf(a + d));
        }

        #[test]
        fn quantile_inverts_cdf(g in arb_mixture(), q in 0.001f64..0.999) {
            let y = g.quantile(q).unwrap();
            prop_assert!((g.cdf(y) - q).abs() < 1e-8);
        }
    }
}
