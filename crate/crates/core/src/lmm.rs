//! Maximum-likelihood Gaussian linear mixed model with individual-level
//! random effects, and the two-phase confounder-selection procedure built
//! on it.
//!
//! Every random effect acts on a single individual, so the marginal model
//! is a heteroscedastic regression:
//!
//! ```text
//! E[Y_i]   = b0 + l_i b_L + a_i theta
//! var(Y_i) = sigma^2 + a_i omega^2 + sum_j ltilde_ij omega_j^2
//! ```
//!
//! The fixed effects are profiled out by generalized least squares and the
//! log-variances are optimized with a projected BFGS.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::stats::sample_var;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LOG_VAR_FLOOR: f64 = -23.025_850_929_940_457; // ln(1e-10)
const LOG_VAR_CEIL: f64 = 27.631_021_115_928_547; // ln(1e12)
const GRAD_TOL: f64 = 1e-6;
const MAX_ITER: usize = 500;

/// A confounder reduced to a 0/1 indicator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dichotomized {
    pub name: String,
    /// `(name>t)` or `(name<=t)`; the bare name for columns already coded 0/1.
    pub label: String,
    pub threshold: Option<f64>,
    /// True when the indicator marks values above the threshold.
    pub above: bool,
    #[serde(skip)]
    pub values: Vec<f64>,
}

/// Splits a confounder at its sample median into `x > median` and
/// `x <= median`. The indicator is 1 on the side whose outcome variance is
/// larger. Columns already coded 0/1 are returned unchanged.
pub fn dichotomize(ds: &Dataset, name: &str) -> Result<Dichotomized> {
    let col = ds.column(name)?;
    if col.iter().all(|v| *v == 0.0 || *v == 1.0) && col.iter().any(|v| *v == 1.0) && col.iter().any(|v| *v == 0.0) {
        return Ok(Dichotomized {
            name: name.into(),
            label: name.into(),
            threshold: None,
            above: true,
            values: col.to_vec(),
        });
    }
    let mut sorted = col.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.first() == sorted.last() {
        return Err(Error::Argument(format!("cannot dichotomize constant column `{name}`")));
    }
    let med = crate::stats::percentile_sorted(&sorted, 0.5);
    let y = ds.y();
    let group = |pred: &dyn Fn(f64) -> bool| -> Vec<f64> {
        col.iter().zip(y).filter(|(x, _)| pred(**x)).map(|(_, y)| *y).collect()
    };
    let (hi, lo) = (group(&|x| x > med), group(&|x| x <= med));
    let var = |v: &[f64]| if v.len() >= 2 { sample_var(v) } else { 0.0 };
    let above = var(&hi) >= var(&lo);
    let values = col
        .iter()
        .map(|&x| if (x > med) == above { 1.0 } else { 0.0 })
        .collect();
    Ok(Dichotomized {
        name: name.into(),
        label: format!("({name}{}{med})", if above { ">" } else { "<=" }),
        threshold: Some(med),
        above,
        values,
    })
}

/// Which confounders enter the mean and which receive a dichotomized
/// random effect.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LmmSpec {
    pub fixed: Vec<String>,
    pub het: Vec<String>,
    /// Pins the exposure random-effect variance to zero (plain regression
    /// on the exposure).
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub no_exposure_variance: bool,
}

impl LmmSpec {
    pub fn new(fixed: Vec<String>, het: Vec<String>) -> Self {
        Self { fixed, het, no_exposure_variance: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LmmFit {
    /// `(intercept)`, the fixed confounders, then `exposure`.
    pub fixed_names: Vec<String>,
    pub beta: Vec<f64>,
    pub var_z1: f64,
    pub het_labels: Vec<String>,
    pub var_het: Vec<f64>,
    pub var_resid: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    /// Log-likelihood after every accepted optimizer step.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

impl LmmFit {
    /// Estimated mean of the random exposure effect.
    pub fn exposure_effect(&self) -> f64 {
        *self.beta.last().expect("exposure column is always present")
    }

    pub fn intercept(&self) -> f64 {
        self.beta[0]
    }

    /// Fixed effects of the confounders, in `fixed_names[1..]` order.
    pub fn confounder_effects(&self) -> &[f64] {
        &self.beta[1..self.beta.len() - 1]
    }
}

struct Problem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    /// Indicator columns of each variance component (residual first).
    d: Vec<Vec<f64>>,
    /// Components held at the floor.
    pinned: Vec<bool>,
}

struct Eval {
    loglik: f64,
    grad: Vec<f64>,
    beta: DVector<f64>,
}

impl Problem {
    fn variances(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.y.len();
        let v: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        (0..n)
            .map(|i| self.d.iter().zip(&v).map(|(col, vk)| col[i] * vk).sum())
            .collect()
    }

    fn gls(&self, var: &[f64]) -> Result<DVector<f64>> {
        let p = self.x.ncols();
        let mut xtwx = DMatrix::<f64>::zeros(p, p);
        let mut xtwy = DVector::<f64>::zeros(p);
        for (i, vi) in var.iter().enumerate() {
            let w = 1.0 / vi;
            let row = self.x.row(i);
            for a in 0..p {
                let wa = w * row[a];
                xtwy[a] += wa * self.y[i];
                for b in 0..=a {
                    xtwx[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(b, a)] = xtwx[(a, b)];
            }
        }
        let chol = xtwx
            .cholesky()
            .ok_or_else(|| Error::RankDeficient("weighted normal equations are not positive definite".into()))?;
        Ok(chol.solve(&xtwy))
    }

    fn eval(&self, theta: &[f64]) -> Result<Eval> {
        let var = self.variances(theta);
        let beta = self.gls(&var)?;
        let resid = &self.y - &self.x * &beta;
        let mut loglik = 0.0;
        let mut grad = vec![0.0; theta.len()];
        for (i, vi) in var.iter().enumerate() {
            let r2 = resid[i] * resid[i];
            loglik -= 0.5 * (LN_2PI + vi.ln() + r2 / vi);
            let s = 0.5 * (r2 / (vi * vi) - 1.0 / vi);
            for (k, g) in grad.iter_mut().enumerate() {
                *g += self.d[k][i] * s;
            }
        }
        for (k, g) in grad.iter_mut().enumerate() {
            *g *= theta[k].exp();
            if self.pinned[k] {
                *g = 0.0;
            }
        }
        if !loglik.is_finite() {
            return Err(Error::Numerical("non-finite LMM log-likelihood".into()));
        }
        Ok(Eval { loglik, grad, beta })
    }

    /// Inverse expected information for the log-variances.
    fn fisher_inverse(&self, theta: &[f64]) -> DMatrix<f64> {
        let k = theta.len();
        let var = self.variances(theta);
        let v: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        let mut info = DMatrix::<f64>::zeros(k, k);
        for (i, vi) in var.iter().enumerate() {
            let w = 0.5 / (vi * vi);
            for a in 0..k {
                for b in 0..k {
                    info[(a, b)] += w * self.d[a][i] * self.d[b][i] * v[a] * v[b];
                }
            }
        }
        for a in 0..k {
            if self.pinned[a] {
                for b in 0..k {
                    info[(a, b)] = 0.0;
                    info[(b, a)] = 0.0;
                }
                info[(a, a)] = 1.0;
            }
            info[(a, a)] += 1e-8 * (1.0 + info[(a, a)]);
        }
        info.try_inverse().unwrap_or_else(|| DMatrix::identity(k, k))
    }
}

fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let mut scaled = x.clone();
    for mut c in scaled.column_iter_mut() {
        let norm = c.norm();
        if norm > 0.0 {
            c /= norm;
        }
    }
    let sv = scaled.svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if !(min > 1e-10 * max) {
        return Err(Error::RankDeficient(format!(
            "columns [{}] are linearly dependent (condition {:.3e})",
            names.join(", "),
            max / min
        )));
    }
    Ok(())
}

/// Fits the Gaussian LMM by maximum likelihood.
pub fn fit_lmm(ds: &Dataset, spec: &LmmSpec) -> Result<LmmFit> {
    ds.check_positivity()?;
    let n = ds.len();
    let mut names = vec!["(intercept)".to_string()];
    names.extend(spec.fixed.iter().cloned());
    names.push("exposure".into());
    let p = names.len();
    let fixed_cols = spec.fixed.iter().map(|f| ds.column(f)).collect::<Result<Vec<_>>>()?;
    let x = DMatrix::from_fn(n, p, |i, j| {
        if j == 0 {
            1.0
        } else if j == p - 1 {
            ds.a()[i] as u8 as f64
        } else {
            fixed_cols[j - 1][i]
        }
    });
    check_rank(&x, &names)?;

    let het = spec.het.iter().map(|h| dichotomize(ds, h)).collect::<Result<Vec<_>>>()?;
    let mut d = vec![vec![1.0; n], ds.a().iter().map(|a| *a as u8 as f64).collect()];
    d.extend(het.iter().map(|h| h.values.clone()));
    let n_par = p + d.len();
    if n <= n_par {
        return Err(Error::Dataset(format!("{n} observations for {n_par} parameters")));
    }
    let mut pinned = vec![false; d.len()];
    pinned[1] = spec.no_exposure_variance;
    let prob = Problem {
        x,
        y: DVector::from_column_slice(ds.y()),
        d,
        pinned,
    };

    // Start from the ordinary least-squares residual variance.
    let ols = prob.gls(&vec![1.0; n])?;
    let resid = &prob.y - &prob.x * &ols;
    let s2 = (resid.norm_squared() / n as f64).max(1e-8);
    let mut theta: Vec<f64> = (0..prob.d.len())
        .map(|k| match k {
            0 => s2.ln(),
            _ if prob.pinned[k] => LOG_VAR_FLOOR,
            _ => (0.3 * s2).ln(),
        })
        .collect();

    let mut cur = prob.eval(&theta)?;
    let mut trace = vec![cur.loglik];
    let mut h = prob.fisher_inverse(&theta);
    let mut converged = false;
    let mut iterations = 0;
    let project = |theta: &[f64], g: &[f64]| -> Vec<f64> {
        theta
            .iter()
            .zip(g)
            .map(|(t, gk)| {
                if (*t <= LOG_VAR_FLOOR && *gk < 0.0) || (*t >= LOG_VAR_CEIL && *gk > 0.0) {
                    0.0
                } else {
                    *gk
                }
            })
            .collect()
    };
    let mut pg = project(&theta, &cur.grad);
    while iterations < MAX_ITER {
        if pg.iter().all(|g| g.abs() < GRAD_TOL) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut fresh = false;
        let accepted = loop {
            let g = DVector::from_vec(pg.clone());
            let mut dir = &h * &g;
            for k in 0..dir.len() {
                if pg[k] == 0.0 {
                    dir[k] = 0.0;
                }
            }
            if dir.dot(&g) <= 0.0 {
                h = prob.fisher_inverse(&theta);
                dir = &h * &g;
                fresh = true;
            }
            let mut step = 1.0;
            let mut found = None;
            for _ in 0..60 {
                let cand: Vec<f64> = theta
                    .iter()
                    .zip(dir.iter())
                    .map(|(t, dk)| (t + step * dk).clamp(LOG_VAR_FLOOR, LOG_VAR_CEIL))
                    .collect();
                if let Ok(e) = prob.eval(&cand) {
                    let gain: f64 = cand.iter().zip(&theta).zip(&pg).map(|((c, t), gk)| (c - t) * gk).sum();
                    let tiny = 1e-13 * cur.loglik.abs();
                    let ok = e.loglik >= cur.loglik + 1e-4 * gain
                        || (e.loglik >= cur.loglik - tiny
                            && max_abs(&project(&cand, &e.grad)) < max_abs(&pg));
                    if ok {
                        found = Some((cand, e));
                        break;
                    }
                }
                step *= 0.5;
            }
            match found {
                Some(f) => break Some(f),
                None if !fresh => {
                    h = prob.fisher_inverse(&theta);
                    fresh = true;
                }
                None => break None,
            }
        };
        let Some((next, e)) = accepted else { break };
        let s = DVector::from_iterator(next.len(), next.iter().zip(&theta).map(|(a, b)| a - b));
        // BFGS on the negative log-likelihood
        let yv = DVector::from_iterator(e.grad.len(), e.grad.iter().zip(&cur.grad).map(|(a, b)| b - a));
        let sy = s.dot(&yv);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(s.len(), s.len());
            let left = &i - rho * &s * yv.transpose();
            let right = &i - rho * &yv * s.transpose();
            h = &left * &h * &right + rho * &s * s.transpose();
        }
        theta = next;
        cur = e;
        trace.push(cur.loglik);
        pg = project(&theta, &cur.grad);
    }
    let v: Vec<f64> = theta
        .iter()
        .enumerate()
        .map(|(k, t)| if prob.pinned[k] { 0.0 } else { t.exp() })
        .collect();
    Ok(LmmFit {
        fixed_names: names,
        beta: cur.beta.iter().copied().collect(),
        var_z1: v[1],
        het_labels: het.iter().map(|h| h.label.clone()).collect(),
        var_het: v[2..].to_vec(),
        var_resid: v[0],
        loglik: cur.loglik,
        iterations,
        converged,
        grad_norm: max_abs(&pg),
        trace,
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateChange {
    pub candidate: String,
    pub estimate: f64,
    pub relative_change: f64,
}

/// One row pair of the backward (mean-based) phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanStep {
    pub fixed: Vec<String>,
    pub exposure_effect: f64,
    pub removals: Vec<CandidateChange>,
    pub removed: Option<String>,
}

/// One row pair of the forward (variance-based) phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceStep {
    pub selected: Vec<String>,
    pub var_z1: f64,
    pub additions: Vec<CandidateChange>,
    pub added: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub selected: Vec<String>,
    pub mean_phase: Vec<MeanStep>,
    pub variance_phase: Vec<VarianceStep>,
    pub final_fit: LmmFit,
    pub mean_threshold: f64,
    pub var_threshold: f64,
}

/// Index and size of the smallest absolute relative change; the earliest
/// entry wins ties.
fn least_change(changes: &[CandidateChange]) -> Option<(usize, f64)> {
    changes.iter().enumerate().fold(None, |acc, (i, r)| match acc {
        Some((_, b)) if r.relative_change.abs() >= b => acc,
        _ => Some((i, r.relative_change.abs())),
    })
}

/// Index and size of the largest absolute relative change; the earliest
/// entry wins ties.
fn largest_change(changes: &[CandidateChange]) -> Option<(usize, f64)> {
    changes.iter().enumerate().fold(None, |acc, (i, r)| match acc {
        Some((_, b)) if r.relative_change.abs() <= b => acc,
        _ => Some((i, r.relative_change.abs())),
    })
}

fn relative_change(new: f64, old: f64) -> f64 {
    (new - old) / old.abs()
}

/// Two-phase confounder selection.
///
/// Phase 1 starts with every candidate as a fixed effect and repeatedly
/// drops the one whose removal moves the exposure effect least, while that
/// relative change is below `mean_threshold`. Phase 2 gives the selected
/// confounders dichotomized random effects and repeatedly adds the
/// remaining candidate (as fixed and dichotomized random effect) that moves
/// the exposure random-effect variance most, while that relative change
/// exceeds `var_threshold`. Ties go to the candidate earliest in column
/// order.
pub fn select_confounders(
    ds: &Dataset,
    candidates: &[String],
    mean_threshold: f64,
    var_threshold: f64,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::Argument("candidate list is empty".into()));
    }
    let mut order: Vec<(usize, String)> = candidates
        .iter()
        .map(|c| ds.column_index(c).map(|i| (i, c.clone())))
        .collect::<Result<_>>()?;
    order.sort();
    order.dedup();
    let ordered: Vec<String> = order.into_iter().map(|(_, c)| c).collect();

    let mut current = ordered.clone();
    let mut mean_phase = Vec::new();
    loop {
        let base = fit_lmm(ds, &LmmSpec::new(current.clone(), vec![]))?.exposure_effect();
        if current.is_empty() {
            mean_phase.push(MeanStep { fixed: vec![], exposure_effect: base, removals: vec![], removed: None });
            break;
        }
        let removals = current
            .par_iter()
            .map(|c| {
                let rest: Vec<String> = current.iter().filter(|x| *x != c).cloned().collect();
                let est = fit_lmm(ds, &LmmSpec::new(rest, vec![]))?.exposure_effect();
                Ok(CandidateChange { candidate: c.clone(), estimate: est, relative_change: relative_change(est, base) })
            })
            .collect::<Result<Vec<_>>>()?;
        let removed = match least_change(&removals) {
            Some((i, v)) if v < mean_threshold => Some(removals[i].candidate.clone()),
            _ => None,
        };
        mean_phase.push(MeanStep { fixed: current.clone(), exposure_effect: base, removals, removed: removed.clone() });
        match removed {
            Some(r) => current.retain(|c| *c != r),
            None => break,
        }
    }

    let mut selected = current;
    let mut variance_phase = Vec::new();
    loop {
        let base = fit_lmm(ds, &LmmSpec::new(selected.clone(), selected.clone()))?.var_z1;
        let rest: Vec<String> = ordered.iter().filter(|c| !selected.contains(c)).cloned().collect();
        let additions = rest
            .par_iter()
            .map(|c| {
                let mut with = selected.clone();
                with.push(c.clone());
                let est = fit_lmm(ds, &LmmSpec::new(with.clone(), with))?.var_z1;
                Ok(CandidateChange { candidate: c.clone(), estimate: est, relative_change: relative_change(est, base) })
            })
            .collect::<Result<Vec<_>>>()?;
        let added = match largest_change(&additions) {
            Some((i, v)) if v > var_threshold => Some(additions[i].candidate.clone()),
            _ => None,
        };
        variance_phase.push(VarianceStep { selected: selected.clone(), var_z1: base, additions, added: added.clone() });
        match added {
            Some(c) => {
                selected.push(c);
                selected.sort_by_key(|c| ordered.iter().position(|o| o == c));
            }
            None => break,
        }
    }
    let final_fit = fit_lmm(ds, &LmmSpec::new(selected.clone(), selected.clone()))?;
    Ok(Selection { selected, mean_phase, variance_phase, final_fit, mean_threshold, var_threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::stats::std_normal_draw;
    use rand::Rng;

    /// Y = b0 + b1 l + a (theta + Z) + e with Z ~ N(0, w2), e ~ N(0, s2).
    fn simulate_lmm(n: usize, theta: f64, w2: f64, s2: f64, seed: u64) -> Dataset {
        let mut rng = seeded(seed);
        let (mut y, mut a, mut l) = (vec![], vec![], vec![]);
        for _ in 0..n {
            let li: f64 = std_normal_draw(&mut rng);
            let ai = rng.random::<f64>() < crate::scm::expit(0.3 * li);
            let z = w2.sqrt() * std_normal_draw(&mut rng);
            let e = s2.sqrt() * std_normal_draw(&mut rng);
            y.push(6.0 + 0.5 * li + if ai { theta + z } else { 0.0 } + e);
            a.push(ai);
            l.push(li);
        }
        Dataset::new(y, a, vec![l], vec!["age".into()]).unwrap()
    }

    #[test]
    fn recovers_simulated_components() {
        // Standard errors at this size: about 0.02 for the effect and 3% for
        // the variance components.
        let ds = simulate_lmm(40_000, 0.47, 1.8, 2.5, 5);
        let fit = fit_lmm(&ds, &LmmSpec::new(vec!["age".into()], vec![])).unwrap();
        assert!(fit.converged, "grad {}", fit.grad_norm);
        assert!((fit.exposure_effect() - 0.47).abs() < 0.1, "{}", fit.exposure_effect());
        assert!((fit.var_z1 / 1.8 - 1.0).abs() < 0.1, "{}", fit.var_z1);
        assert!((fit.var_resid / 2.5 - 1.0).abs() < 0.1, "{}", fit.var_resid);
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "trace decreased: {w:?}");
        }
    }

    #[test]
    fn homoscedastic_data_reduces_to_least_squares() {
        let ds = simulate_lmm(10_000, 0.5, 0.0, 2.0, 6);
        let fit = fit_lmm(&ds, &LmmSpec::new(vec!["age".into()], vec![])).unwrap();
        let n1 = ds.n_exposed() as f64;
        // se of the variance-difference estimate is about s2 * sqrt(2 / n1)
        assert!(fit.var_z1 < 2.0 * 2.0 * (2.0 / n1).sqrt(), "{}", fit.var_z1);

        let mut spec = LmmSpec::new(vec!["age".into()], vec![]);
        spec.no_exposure_variance = true;
        let pinned = fit_lmm(&ds, &spec).unwrap();
        assert_eq!(pinned.var_z1, 0.0);
        let ols = normal_equations(&ds);
        for (b, o) in pinned.beta.iter().zip(&ols) {
            assert!((b - o).abs() < 1e-8, "{b} vs {o}");
        }
    }

    fn normal_equations(ds: &Dataset) -> Vec<f64> {
        // Independent route: accumulate X'X and X'y and solve by Gaussian elimination.
        let rows: Vec<[f64; 3]> = (0..ds.len())
            .map(|i| [1.0, ds.columns()[0][i], ds.a()[i] as u8 as f64])
            .collect();
        let mut m = [[0.0f64; 4]; 3];
        for (r, y) in rows.iter().zip(ds.y()) {
            for a in 0..3 {
                for b in 0..3 {
                    m[a][b] += r[a] * r[b];
                }
                m[a][3] += r[a] * y;
            }
        }
        for c in 0..3 {
            for r in (c + 1)..3 {
                let f = m[r][c] / m[c][c];
                for k in c..4 {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
        let mut x = [0.0; 3];
        for r in (0..3).rev() {
            x[r] = (m[r][3] - ((r + 1)..3).map(|k| m[r][k] * x[k]).sum::<f64>()) / m[r][r];
        }
        x.to_vec()
    }

    #[test]
    fn constant_column_is_rank_deficient() {
        let ds = simulate_lmm(200, 0.5, 1.0, 1.0, 7);
        let ds = Dataset::new(
            ds.y().to_vec(),
            ds.a().to_vec(),
            vec![ds.columns()[0].clone(), vec![3.0; 200]],
            vec!["age".into(), "const".into()],
        )
        .unwrap();
        let err = fit_lmm(&ds, &LmmSpec::new(vec!["age".into(), "const".into()], vec![])).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)), "{err}");
    }

    #[test]
    fn dichotomize_conventions() {
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        // outcome spread grows with x
        let y: Vec<f64> = x.iter().map(|v| if *v > 50.0 { (v * 7.0).sin() * 10.0 } else { (v * 7.0).sin() }).collect();
        let ds = Dataset::new(y, vec![false; 100], vec![x.clone()], vec!["SBP".into()]).unwrap();
        let d = dichotomize(&ds, "SBP").unwrap();
        assert_eq!(d.threshold, Some(50.5));
        assert_eq!(d.label, "(SBP>50.5)");
        for (v, xi) in d.values.iter().zip(&x) {
            assert_eq!(*v, if *xi > 50.5 { 1.0 } else { 0.0 });
        }

        let flipped = Dataset::new(ds.y().iter().rev().copied().collect(), vec![false; 100], vec![x], vec!["SBP".into()]).unwrap();
        let d = dichotomize(&flipped, "SBP").unwrap();
        assert!(!d.above);
        assert_eq!(d.label, "(SBP<=50.5)");

        let b = Dataset::new(vec![1.0, 2.0, 3.0], vec![false; 3], vec![vec![0.0, 1.0, 1.0]], vec!["DIAB".into()]).unwrap();
        let d = dichotomize(&b, "DIAB").unwrap();
        assert_eq!(d.values, vec![0.0, 1.0, 1.0]);
        assert_eq!(d.label, "DIAB");

        let c = Dataset::new(vec![1.0, 2.0], vec![false; 2], vec![vec![4.0, 4.0]], vec!["k".into()]).unwrap();
        assert!(dichotomize(&c, "k").is_err());
    }

    #[test]
    fn median_ties_stay_below() {
        let x = vec![1.0, 2.0, 2.0, 2.0, 3.0, 3.0];
        let ds = |y: Vec<f64>| Dataset::new(y, vec![false; 6], vec![x.clone()], vec!["t".into()]).unwrap();
        let d = dichotomize(&ds(vec![0.0, 0.0, 0.0, 0.0, 5.0, -5.0]), "t").unwrap();
        assert_eq!(d.threshold, Some(2.0));
        assert_eq!(d.values, [0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        // With the larger variance below, the tied values join the indicator.
        let d = dichotomize(&ds(vec![0.0, 0.0, 0.0, 5.0, 1.0, 1.0]), "t").unwrap();
        assert!(!d.above);
        assert_eq!(d.label, "(t<=2)");
        assert_eq!(d.values, [1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn noise_candidates_are_all_dropped() {
        let base = simulate_lmm(3000, 0.8, 0.5, 1.0, 8);
        let mut rng = seeded(80);
        let noise: Vec<Vec<f64>> = (0..3).map(|_| (0..3000).map(|_| std_normal_draw(&mut rng)).collect()).collect();
        let names: Vec<String> = (1..=3).map(|j| format!("n{j}")).collect();
        let ds = Dataset::new(base.y().to_vec(), base.a().to_vec(), noise, names.clone()).unwrap();
        let sel = select_confounders(&ds, &names, 0.05, 0.10).unwrap();
        assert!(sel.selected.is_empty(), "{:?}", sel.selected);
        let again = select_confounders(&ds, &names, 0.05, 0.10).unwrap();
        assert_eq!(serde_json::to_string(&sel).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn ties_go_to_the_earliest_candidate() {
        let ch = |c: &str, r: f64| CandidateChange { candidate: c.into(), estimate: 0.0, relative_change: r };
        let changes = vec![ch("age", 0.03), ch("sex", -0.01), ch("smoke", 0.01), ch("dpw", 0.2), ch("glu", -0.2)];
        assert_eq!(least_change(&changes), Some((1, 0.01)));
        assert_eq!(largest_change(&changes), Some((3, 0.2)));
        assert_eq!(least_change(&[]), None);
    }

    #[test]
    fn candidates_are_processed_in_column_order() {
        let base = simulate_lmm(500, 0.8, 0.5, 1.0, 9);
        let mut rng = seeded(90);
        let cols: Vec<Vec<f64>> = (0..2).map(|_| (0..500).map(|_| std_normal_draw(&mut rng)).collect()).collect();
        let ds = Dataset::new(base.y().to_vec(), base.a().to_vec(), cols, vec!["b".into(), "a".into()]).unwrap();
        let sel = select_confounders(&ds, &["a".to_string(), "b".to_string()], 0.05, 0.10).unwrap();
        assert_eq!(sel.mean_phase[0].fixed, vec!["b".to_string(), "a".to_string()]);
        assert_eq!(sel.mean_phase[0].removals[0].candidate, "b");
    }
}
