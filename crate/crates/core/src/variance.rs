//! Detection, bounding and point identification of the variance of
//! individual causal effects from per-arm outcome moments.
//!
//! Under the additive model `Y^1 = Y^0 + U` with `U` independent of the
//! outcome noise, `var(Y^1 - Y^0) = var1 - var0`. Under the multiplicative
//! model `Y^1 = Y^0 U`, `var(Y^1 - Y^0) = var1 + (1 - 2 E[U]) var0` with
//! `E[U] = mean1 / mean0`. Without a dependence assumption only the
//! Cauchy-Schwarz lower bound `(sqrt(var1) - sqrt(var0))^2` is available.
//! With observational data each identity holds within confounder strata.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lmm::dichotomize;

/// Confounders with at most this many distinct values are stratified on
/// their raw levels; others are dichotomized first.
const MAX_DISCRETE_LEVELS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArmMoments {
    pub n1: usize,
    pub n0: usize,
    pub mean1: f64,
    pub mean0: f64,
    pub var1: f64,
    pub var0: f64,
}

fn moments(xs: impl Iterator<Item = f64> + Clone) -> (usize, f64, f64) {
    let (n, sum) = xs.clone().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    let m = sum / n as f64;
    let ss: f64 = xs.map(|x| (x - m) * (x - m)).sum();
    (n, m, ss / (n as f64 - 1.0))
}

impl ArmMoments {
    /// Moments of the rows in `rows` (all rows when `None`), in row order.
    pub fn from_dataset(ds: &Dataset, rows: Option<&[usize]>, label: &str) -> Result<Self> {
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..ds.len()).collect();
                &all
            }
        };
        let arm = |exposed: bool| rows.iter().filter(move |&&i| ds.a()[i] == exposed).map(|&i| ds.y()[i]);
        let (n1, mean1, var1) = moments(arm(true));
        let (n0, mean0, var0) = moments(arm(false));
        if n1 < 2 || n0 < 2 {
            return Err(Error::Stratum {
                stratum: label.to_string(),
                reason: format!("need at least 2 observations per arm, have {n1} exposed and {n0} unexposed"),
            });
        }
        Ok(Self { n1, n0, mean1, mean0, var1, var0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeterogeneityTest {
    pub variance_ratio: f64,
    /// P(F >= ratio) under equal variances.
    pub p_one_sided: f64,
    pub p_value: f64,
    /// True when the exposed arm is significantly more variable at 5%.
    pub flag: bool,
}

/// Classical F-test on the arm variances.
pub fn f_test(m: &ArmMoments) -> Result<HeterogeneityTest> {
    let ratio = m.var1 / m.var0;
    let f = FisherSnedecor::new((m.n1 - 1) as f64, (m.n0 - 1) as f64)
        .map_err(|e| Error::Numerical(format!("F distribution: {e}")))?;
    let (cdf, sf) = if ratio.is_finite() {
        (f.cdf(ratio), f.sf(ratio))
    } else {
        (1.0, 0.0)
    };
    Ok(HeterogeneityTest {
        variance_ratio: ratio,
        p_one_sided: sf,
        p_value: (2.0 * cdf.min(sf)).min(1.0),
        flag: sf < 0.05,
    })
}

/// `(sqrt(var1) - sqrt(var0))^2`, the smallest ICE variance compatible with
/// the arm variances.
pub fn cs_lower_bound(var1: f64, var0: f64) -> Result<f64> {
    if !(var1 >= 0.0 && var0 >= 0.0) {
        return Err(Error::Argument(format!("variances must be >= 0, got ({var1}, {var0})")));
    }
    Ok((var1 + var0 - 2.0 * (var1 * var0).sqrt()).max(0.0))
}

/// `var1 - var0`; may be negative in finite samples.
pub fn additive_ice_variance(m: &ArmMoments) -> f64 {
    m.var1 - m.var0
}

/// `var1 + (1 - 2 mean1 / mean0) var0`.
pub fn multiplicative_ice_variance(m: &ArmMoments) -> Result<f64> {
    if m.mean0.abs() < 1e-12 {
        return Err(Error::Numerical(format!(
            "unexposed mean {} is too close to 0 for the multiplicative estimator",
            m.mean0
        )));
    }
    Ok(m.var1 + (1.0 - 2.0 * m.mean1 / m.mean0) * m.var0)
}

/// Grid of the lower bound as a function of `var0` and `var1 - var0`.
pub fn bound_surface(var0_max: f64, diff_max: f64, steps: usize) -> Vec<[f64; 3]> {
    let steps = steps.max(2);
    let mut out = Vec::with_capacity(steps * steps);
    for i in 0..steps {
        let v0 = var0_max * i as f64 / (steps - 1) as f64;
        for j in 0..steps {
            let d = diff_max * j as f64 / (steps - 1) as f64;
            let b = cs_lower_bound(v0 + d, v0).expect("non-negative by construction");
            out.push([v0, d, b]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumVariance {
    pub stratum: String,
    pub moments: ArmMoments,
    pub test: HeterogeneityTest,
    pub cs_lower_bound: f64,
    pub additive: f64,
    pub additive_negative: bool,
    pub multiplicative: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multiplicative_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub overall: StratumVariance,
    pub strata: Vec<StratumVariance>,
    pub skipped: Vec<String>,
    pub assumptions: Vec<String>,
}

pub fn analyze_moments(label: &str, m: ArmMoments) -> Result<StratumVariance> {
    let additive = additive_ice_variance(&m);
    let (multiplicative, multiplicative_error) = match multiplicative_ice_variance(&m) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(StratumVariance {
        stratum: label.to_string(),
        moments: m,
        test: f_test(&m)?,
        cs_lower_bound: cs_lower_bound(m.var1, m.var0)?,
        additive,
        additive_negative: additive < 0.0,
        multiplicative,
        multiplicative_error,
    })
}

/// Groups rows by the joint level of the named confounders. Discrete
/// columns use their raw values; continuous ones are dichotomized at the
/// median. Groups are returned in ascending label order.
pub fn strata(ds: &Dataset, by: &[String]) -> Result<Vec<(String, Vec<usize>)>> {
    let mut keyed: Vec<(Vec<String>, Vec<f64>)> = Vec::new();
    for name in by {
        let col = ds.column(name)?;
        let mut distinct: Vec<f64> = col.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() <= MAX_DISCRETE_LEVELS {
            keyed.push((col.iter().map(|v| format!("{name}={v}")).collect(), col.to_vec()));
        } else {
            let d = dichotomize(ds, name)?;
            keyed.push((
                d.values.iter().map(|v| format!("{}={v}", d.label)).collect(),
                d.values.clone(),
            ));
        }
    }
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for i in 0..ds.len() {
        let label = if keyed.is_empty() {
            "all".to_string()
        } else {
            keyed.iter().map(|(l, _)| l[i].as_str()).collect::<Vec<_>>().join(",")
        };
        groups.entry(label).or_default().push(i);
    }
    Ok(groups.into_iter().collect())
}

/// Full report: marginal analysis plus one entry per stratum of `by`.
/// Strata with fewer than two observations in an arm are listed in
/// `skipped` instead of failing the whole report.
pub fn variance_report(ds: &Dataset, by: &[String]) -> Result<VarianceReport> {
    let overall = analyze_moments("all", ArmMoments::from_dataset(ds, None, "all")?)?;
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    if !by.is_empty() {
        for (label, rows) in strata(ds, by)? {
            match ArmMoments::from_dataset(ds, Some(&rows), &label) {
                Ok(m) => out.push(analyze_moments(&label, m)?),
                Err(e @ Error::Stratum { .. }) => skipped.push(e.to_string()),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(VarianceReport {
        overall,
        strata: out,
        skipped,
        assumptions: vec![
            "F-test assumes normally distributed outcomes within each arm".into(),
            "additive estimate assumes Y1 = Y0 + U with U independent of the outcome noise given the strata".into(),
            "multiplicative estimate assumes Y1 = Y0 * U with U independent of the outcome noise given the strata".into(),
            "observational strata additionally assume no unmeasured confounding".into(),
        ],
    })
}

/// Heterogeneity test on a dataset, marginally or per stratum. Any stratum
/// with an arm of fewer than two observations is an error naming it.
pub fn heterogeneity_test(ds: &Dataset, by: &[String]) -> Result<Vec<(String, HeterogeneityTest)>> {
    let mut out = vec![("all".to_string(), f_test(&ArmMoments::from_dataset(ds, None, "all")?)?)];
    if !by.is_empty() {
        for (label, rows) in strata(ds, by)? {
            let m = ArmMoments::from_dataset(ds, Some(&rows), &label)?;
            out.push((label, f_test(&m)?));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn moments_of(v1: f64, v0: f64, m1: f64, m0: f64) -> ArmMoments {
        ArmMoments { n1: 500, n0: 1852, mean1: m1, mean0: m0, var1: v1, var0: v0 }
    }

    #[test]
    fn bound_examples() {
        assert!((cs_lower_bound(4.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        for v in [0.0, 1.0, 7.5, 1e6] {
            assert_eq!(cs_lower_bound(v, v).unwrap(), 0.0);
        }
        assert!(cs_lower_bound(-1.0, 1.0).is_err());
    }

    #[test]
    fn bound_surface_is_monotone_in_gap() {
        let grid = bound_surface(100.0, 100.0, 21);
        assert_eq!(grid.len(), 441);
        for w in grid.windows(2) {
            if w[0][0] == w[1][0] {
                assert!(w[1][2] >= w[0][2]);
            }
        }
        // bound depends only on |sqrt(v1) - sqrt(v0)|
        for p in &grid {
            let gap = (p[0] + p[1]).sqrt() - p[0].sqrt();
            assert!((p[2] - gap * gap).abs() < 1e-9);
        }
    }

    #[test]
    fn additive_and_multiplicative_examples() {
        assert_eq!(additive_ice_variance(&moments_of(150.0, 50.0, 0.0, 1.0)), 100.0);
        assert_eq!(additive_ice_variance(&moments_of(3.0, 3.0, 0.0, 1.0)), 0.0);
        // E[U] = 1: the ICE variance reduces to var1 - var0
        let m = moments_of(6.0, 4.0, 10.0, 10.0);
        assert!((multiplicative_ice_variance(&m).unwrap() - 2.0).abs() < 1e-12);
        // E[U] = 1/2: factor vanishes
        let m = moments_of(6.0, 4.0, 5.0, 10.0);
        assert!((multiplicative_ice_variance(&m).unwrap() - 6.0).abs() < 1e-12);
        assert!(multiplicative_ice_variance(&moments_of(6.0, 4.0, 5.0, 1e-13)).is_err());
    }

    #[test]
    fn headline_sd_difference_is_flagged() {
        let m = moments_of(2.27f64.powi(2), 1.74f64.powi(2), 0.0, 1.0);
        let t = f_test(&m).unwrap();
        assert!((t.variance_ratio - 1.70).abs() < 0.005, "{}", t.variance_ratio);
        assert!(t.flag && t.p_one_sided < 1e-6);
    }

    #[test]
    fn identical_arms_are_not_flagged() {
        let y = vec![1.0, 2.0, 4.0, 7.0, 1.0, 2.0, 4.0, 7.0];
        let a = vec![true, true, true, true, false, false, false, false];
        let ds = Dataset::new(y, a, vec![], vec![]).unwrap();
        let t = &heterogeneity_test(&ds, &[]).unwrap()[0].1;
        assert_eq!(t.variance_ratio, 1.0);
        assert!(!t.flag);
        assert!((t.p_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_stratum_is_named() {
        let ds = Dataset::new(
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![true, true, false, false, false, true],
            vec![vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0]],
            vec!["sex".into()],
        )
        .unwrap();
        let err = heterogeneity_test(&ds, &["sex".to_string()]).unwrap_err();
        assert!(err.to_string().contains("sex=1"), "{err}");
        let report = variance_report(&ds, &["sex".to_string()]).unwrap();
        assert_eq!(report.strata.len(), 1);
        assert_eq!(report.skipped.len(), 1);
    }

    #[test]
    fn constant_stratification_is_bitwise_identical() {
        let ds = Dataset::new(
            vec![1.3, 2.2, 3.9, 4.1, 5.7, 6.0, 0.4],
            vec![true, true, false, false, false, true, false],
            vec![vec![1.0; 7]],
            vec!["c".into()],
        )
        .unwrap();
        let r = variance_report(&ds, &["c".to_string()]).unwrap();
        let (o, s) = (&r.overall, &r.strata[0]);
        assert_eq!(o.moments, s.moments);
        assert_eq!(o.additive.to_bits(), s.additive.to_bits());
        assert_eq!(o.cs_lower_bound.to_bits(), s.cs_lower_bound.to_bits());
        assert_eq!(o.multiplicative.unwrap().to_bits(), s.multiplicative.unwrap().to_bits());
    }

    proptest! {
        #[test]
        fn bound_never_exceeds_additive(v0 in 0.0f64..1e4, d in 0.0f64..1e4) {
            let v1 = v0 + d;
            prop_assert!(cs_lower_bound(v1, v0).unwrap() <= v1 - v0 + 1e-9 * (1.0 + v1));
        }

        #[test]
        fn shift_invariance(ys in prop::collection::vec(-50.0f64..50.0, 8..40), c in -1e3f64..1e3) {
            let n = ys.len();
            let a: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
            let ds = Dataset::new(ys.clone(), a.clone(), vec![], vec![]).unwrap();
            let shifted = Dataset::new(ys.iter().map(|y| y + c).collect(), a, vec![], vec![]).unwrap();
            let m = ArmMoments::from_dataset(&ds, None, "all").unwrap();
            let s = ArmMoments::from_dataset(&shifted, None, "all").unwrap();
            let tol = 1e-8 * (1.0 + m.var1 + m.var0);
            prop_assert!((additive_ice_variance(&m) - additive_ice_variance(&s)).abs() < tol);
            prop_assert!((cs_lower_bound(m.var1, m.var0).unwrap() - cs_lower_bound(s.var1, s.var0).unwrap()).abs() < tol);
        }
    }

    #[test]
    fn multiplicative_is_not_shift_invariant() {
        let m = moments_of(6.0, 4.0, 12.0, 10.0);
        let shifted = ArmMoments { mean1: m.mean1 + 5.0, mean0: m.mean0 + 5.0, ..m };
        let (a, b) = (multiplicative_ice_variance(&m).unwrap(), multiplicative_ice_variance(&shifted).unwrap());
        assert!((a - b).abs() > 0.1);
    }
}
