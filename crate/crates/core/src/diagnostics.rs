//! Convergence constants, criteria and monitors for the scaling iteration.
//!
//! The contraction argument works with column mass fractions
//! `f_ij = x_ij / sum_k x_kj`. For a split of the rows into a non-empty
//! proper subset and its complement, and likewise for the columns, the
//! quantity `eps_p` is the smallest total fraction the row step can move
//! across the split. One full iteration contracts the Lyapunov residual by at
//! least `1 - eps_p`; the constants `alpha`, `r` and the criterion below turn
//! that into a geometric rate valid from the starting point on.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::balance::Variant;
use crate::{Error, Result};

/// Largest `n + m` for which the exact constants are offered.
pub const EXACT_SUBSET_LIMIT: usize = 24;

/// Relative slack used by [`majorant_check`].
pub const MAJORANT_REL_SLACK: f64 = 1e-10;
/// Absolute slack used by [`majorant_check`], as a fraction of `v0`.
pub const MAJORANT_ABS_SLACK: f64 = 1e-12;

/// Total absolute marginal violation `sum_i |rowsum_i - p_i| + sum_j |colsum_j - q_j|`.
///
/// Zero exactly on the admissible set. Panics if the shapes disagree.
pub fn lyapunov_v(x: &Array2<f64>, p: &Array1<f64>, q: &Array1<f64>) -> f64 {
    assert_eq!(x.nrows(), p.len(), "p length must match row count");
    assert_eq!(x.ncols(), q.len(), "q length must match column count");
    let rows: f64 = x
        .axis_iter(Axis(0))
        .zip(p)
        .map(|(r, &pi)| (r.sum() - pi).abs())
        .sum();
    let cols: f64 = x
        .sum_axis(Axis(0))
        .iter()
        .zip(q)
        .map(|(&c, &qj)| (c - qj).abs())
        .sum();
    rows + cols
}

/// Exact `eps_p`, subject to `n + m <= EXACT_SUBSET_LIMIT`.
pub fn epsilon_p_exact(x: &Array2<f64>) -> Result<f64> {
    epsilon_p_exact_with_limit(x, EXACT_SUBSET_LIMIT)
}

/// Exact `eps_q` (row-fraction mirror), subject to `n + m <= EXACT_SUBSET_LIMIT`.
pub fn epsilon_q_exact(x: &Array2<f64>) -> Result<f64> {
    epsilon_q_exact_with_limit(x, EXACT_SUBSET_LIMIT)
}

pub fn epsilon_p_exact_with_limit(x: &Array2<f64>, limit: usize) -> Result<f64> {
    exact_columnwise(x.view(), limit, "column")
}

pub fn epsilon_q_exact_with_limit(x: &Array2<f64>, limit: usize) -> Result<f64> {
    exact_columnwise(x.t(), limit, "row")
}

/// Minimum over non-empty proper row subsets `I~` and column subsets `J~` of
/// `min_{j in J~} sum_{i notin I~} f_ij + min_{j notin J~} sum_{i in I~} f_ij`.
///
/// The column part of the double minimum collapses to a minimum over ordered
/// pairs `j1 != j2` (take `J~ = {j1}`), and for a fixed pair each row picks the
/// side with the smaller fraction independently, subject to both sides being
/// non-empty. That gives the exact value in `O(n m^2)`.
fn exact_columnwise(x: ArrayView2<'_, f64>, limit: usize, axis: &'static str) -> Result<f64> {
    let (n, m) = x.dim();
    if n + m > limit {
        return Err(Error::SizeLimit {
            limit,
            actual: n + m,
        });
    }
    if n < 2 || m < 2 {
        return Err(Error::TooSmall {
            what: "exact contraction constant",
            rows: n,
            cols: m,
        });
    }
    let f = fractions(x, axis)?;
    let mut best = f64::INFINITY;
    for j1 in 0..m {
        for j2 in 0..m {
            if j1 == j2 {
                continue;
            }
            let mut base = 0.0;
            let mut strictly_in = 0usize;
            let mut strictly_out = 0usize;
            let mut min_gap = f64::INFINITY;
            for i in 0..n {
                let out = f[[i, j1]];
                let inn = f[[i, j2]];
                base += out.min(inn);
                if inn < out {
                    strictly_in += 1;
                } else if out < inn {
                    strictly_out += 1;
                }
                min_gap = min_gap.min((out - inn).abs());
            }
            if strictly_in == n || strictly_out == n {
                base += min_gap;
            }
            best = best.min(base);
        }
    }
    Ok(best)
}

/// Column fractions `x_ij / sum_k x_kj`.
fn fractions(x: ArrayView2<'_, f64>, axis: &'static str) -> Result<Array2<f64>> {
    let sums = x.sum_axis(Axis(0));
    if let Some(j) = sums.iter().position(|&s| !(s > 0.0)) {
        return Err(if axis == "column" {
            Error::DegenerateColumn(j)
        } else {
            Error::DegenerateRow(j)
        });
    }
    Ok(&x / &sums.insert_axis(Axis(0)))
}

/// Cheap lower bound on `eps_p`: with `S_j(k)` the sum of the `k` smallest
/// fractions in column `j`, returns `min_k (min_j S_j(k) + min_j S_j(n-k))`
/// over `k = 1..=n/2`.
///
/// Requires every column to have strictly more than half of its entries
/// nonzero.
pub fn epsilon_p_hat(x: &Array2<f64>) -> Result<f64> {
    hat_columnwise(x.view(), "column")
}

/// Row mirror of [`epsilon_p_hat`], a lower bound on `eps_q`.
pub fn epsilon_q_hat(x: &Array2<f64>) -> Result<f64> {
    hat_columnwise(x.t(), "row")
}

fn hat_columnwise(x: ArrayView2<'_, f64>, axis: &'static str) -> Result<f64> {
    let (n, m) = x.dim();
    if n < 2 {
        return Err(Error::TooSmall {
            what: "contraction lower bound",
            rows: n,
            cols: m,
        });
    }
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        let nonzeros = col.iter().filter(|&&v| v != 0.0).count();
        if 2 * nonzeros <= n {
            return Err(Error::MajorityHypothesis {
                axis,
                index: j,
                nonzeros,
                len: n,
            });
        }
    }
    // best[k] = min_j S_j(k)
    let best = (0..m)
        .into_par_iter()
        .map(|j| {
            let col = x.column(j);
            let total: f64 = col.sum();
            let mut v: Vec<f64> = col.iter().map(|&a| a / total).collect();
            v.sort_by(f64::total_cmp);
            let mut prefix = Vec::with_capacity(n + 1);
            let mut acc = 0.0;
            prefix.push(0.0);
            for a in v {
                acc += a;
                prefix.push(acc);
            }
            prefix
        })
        .reduce(
            || vec![f64::INFINITY; n + 1],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x = x.min(y);
                }
                a
            },
        );
    Ok((1..=n / 2)
        .map(|k| best[k] + best[n - k])
        .fold(f64::INFINITY, f64::min))
}

/// Auxiliary function `r(w, e1) = (4 - (1+e1)(1-w)^2) / ((1 + e1 w - (1+e1) w^2)(1-w))`.
///
/// Defined for `0 <= w < 1` with a positive denominator; `r(0, e1) = 3 - e1`.
pub fn r_function(w: f64, epsilon1: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&w) || !epsilon1.is_finite() {
        return Err(Error::Domain(format!(
            "r(w, e1) needs 0 <= w < 1 and finite e1, got w = {w}, e1 = {epsilon1}"
        )));
    }
    if w == 0.0 {
        return Ok(3.0 - epsilon1);
    }
    let den = (1.0 + epsilon1 * w - (1.0 + epsilon1) * w * w) * (1.0 - w);
    if !(den > 0.0) {
        return Err(Error::Domain(format!(
            "r(w, e1) denominator {den} is not positive at w = {w}, e1 = {epsilon1}"
        )));
    }
    Ok((4.0 - (1.0 + epsilon1) * (1.0 - w).powi(2)) / den)
}

/// Checks `0 <= e2 v0 < 1` and `0 < e1 < (1 + e2 v0)/(1 - e2 v0)`, returning `w = e2 v0`.
fn check_rate_preconditions(v0: f64, epsilon1: f64, epsilon2: f64) -> Result<f64> {
    if !(v0 >= 0.0) || !(epsilon2 >= 0.0) || !v0.is_finite() || !epsilon2.is_finite() {
        return Err(Error::Domain(format!(
            "need v0 >= 0 and e2 >= 0, got v0 = {v0}, e2 = {epsilon2}"
        )));
    }
    let w = epsilon2 * v0;
    if !(w < 1.0) {
        return Err(Error::Domain(format!(
            "condition 0 <= e2*v0 < 1 fails: e2*v0 = {w}"
        )));
    }
    let upper = (1.0 + w) / (1.0 - w);
    if !(epsilon1 > 0.0 && epsilon1 < upper) {
        return Err(Error::Domain(format!(
            "condition 0 < e1 < (1 + e2*v0)/(1 - e2*v0) = {upper} fails: e1 = {epsilon1}"
        )));
    }
    Ok(w)
}

/// Geometric margin `alpha = 2 e1 w (1 + (1+e1) w) ((1-w)/(1+w))^2` with
/// `w = e2 v0`; the residual contracts at least by `1 - alpha` per iteration
/// once the criterion holds.
pub fn alpha(v0: f64, epsilon1: f64, epsilon2: f64) -> Result<f64> {
    let w = check_rate_preconditions(v0, epsilon1, epsilon2)?;
    let ratio = (1.0 - w) / (1.0 + w);
    Ok(2.0 * epsilon1 * w * (1.0 + (1.0 + epsilon1) * w) * ratio * ratio)
}

/// Both sides of the starting-point criterion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriterionDetail {
    pub satisfied: bool,
    /// `2 w (1 + w r(w, e1))`, `w = e2 v0`.
    pub lhs: f64,
    /// `e1`.
    pub rhs: f64,
    /// Leading-order check `2 e2 v0 <= e1`.
    pub simplified_satisfied: bool,
}

/// Evaluates `2 w (1 + w r(w, e1)) <= e1` with `w = e2 v0`.
pub fn convergence_criterion(v0: f64, epsilon1: f64, epsilon2: f64) -> Result<CriterionDetail> {
    let w = check_rate_preconditions(v0, epsilon1, epsilon2)?;
    let lhs = 2.0 * w * (1.0 + w * r_function(w, epsilon1)?);
    Ok(CriterionDetail {
        satisfied: lhs <= epsilon1,
        lhs,
        rhs: epsilon1,
        simplified_satisfied: 2.0 * w <= epsilon1,
    })
}

/// Smallest `t` with `(1 - alpha)^t v0 <= target_v`.
pub fn apriori_iterations(v0: f64, alpha: f64, target_v: f64) -> Result<u64> {
    if !(target_v > 0.0) {
        return Err(Error::Domain(format!("target must be positive, got {target_v}")));
    }
    if target_v >= v0 {
        return Ok(0);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let ratio = 1.0 - alpha;
    let bound = |t: u64| ratio.powf(t as f64) * v0;
    let mut t = ((target_v / v0).ln() / ratio.ln()).ceil().max(1.0) as u64;
    while bound(t) > target_v {
        t += 1;
    }
    while t > 1 && bound(t - 1) <= target_v {
        t -= 1;
    }
    Ok(t)
}

fn residual(eps_hat: f64, v: f64, min_marginal: f64) -> Result<f64> {
    let w = v / min_marginal;
    Ok(eps_hat - 2.0 * w * (1.0 + w * r_function(w, eps_hat)?))
}

/// `Z_p(x) = eps_p_hat(x) - 2 w (1 + w r(w, eps_p_hat(x)))` with `w = V(x) / min p`.
///
/// A positive value certifies the starting-point criterion at `x`.
pub fn residual_zp(x: &Array2<f64>, p: &Array1<f64>, q: &Array1<f64>) -> Result<f64> {
    let eps = epsilon_p_hat(x)?;
    residual(eps, lyapunov_v(x, p, q), min_of(p))
}

/// Mirror of [`residual_zp`] with `eps_q_hat` and `min q`.
pub fn residual_zq(x: &Array2<f64>, p: &Array1<f64>, q: &Array1<f64>) -> Result<f64> {
    let eps = epsilon_q_hat(x)?;
    residual(eps, lyapunov_v(x, p, q), min_of(q))
}

/// `G(I~, J~, x) = min_{j in J~} sum_{i in I~} x_ij / sum_k x_kj`.
pub fn subset_ratio_g(x: &Array2<f64>, i_set: &[usize], j_set: &[usize]) -> Result<f64> {
    if j_set.is_empty() {
        return Err(Error::Domain("column subset must be non-empty".into()));
    }
    let mut g = f64::INFINITY;
    for &j in j_set {
        let col = x.column(j);
        let total = col.sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateColumn(j));
        }
        let part: f64 = i_set.iter().map(|&i| col[i]).sum();
        g = g.min(part / total);
    }
    Ok(g)
}

/// Whether a per-iteration residual trace `v_iter[t] = V(X^(2t))` stays under
/// the geometric majorant `(1 - alpha)^t v0`, up to a small floating-point
/// slack.
pub fn majorant_check(v_iter: &[f64], v0: f64, alpha: f64) -> bool {
    let ratio = 1.0 - alpha;
    v_iter.iter().enumerate().all(|(t, &v)| {
        let bound = ratio.powi(t as i32) * v0;
        v <= bound * (1.0 + MAJORANT_REL_SLACK) + MAJORANT_ABS_SLACK * v0
    })
}

pub(crate) fn min_of(v: &Array1<f64>) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Convergence diagnostics of a starting matrix for a given variant.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub variant: Variant,
    pub v0: f64,
    pub eps_p_hat: Option<f64>,
    pub eps_q_hat: Option<f64>,
    pub eps_p_exact: Option<f64>,
    pub eps_q_exact: Option<f64>,
    /// Contraction constant used: `eps_p` for row-first, `eps_q` for
    /// column-first; exact when available, else the hat estimate, else 0.
    pub epsilon1: f64,
    /// `1 / min p` for row-first, `1 / min q` for column-first.
    pub epsilon2: f64,
    pub alpha: Option<f64>,
    pub criterion: Option<CriterionDetail>,
    pub criterion_ok: bool,
    pub predicted_iterations: Option<u64>,
    pub z_p: Option<f64>,
    pub z_q: Option<f64>,
}

impl ConvergenceReport {
    /// Diagnoses `x` as a starting point. `target_rel` sets the predicted
    /// iteration count target `target_rel * V(x)`.
    pub fn compute(
        x: &Array2<f64>,
        p: &Array1<f64>,
        q: &Array1<f64>,
        variant: Variant,
        target_rel: f64,
    ) -> ConvergenceReport {
        let v0 = lyapunov_v(x, p, q);
        let eps_p_hat = epsilon_p_hat(x).ok();
        let eps_q_hat = epsilon_q_hat(x).ok();
        let eps_p_exact = epsilon_p_exact(x).ok();
        let eps_q_exact = epsilon_q_exact(x).ok();
        let (epsilon1, epsilon2) = match variant {
            Variant::RowFirst => (eps_p_exact.or(eps_p_hat).unwrap_or(0.0), 1.0 / min_of(p)),
            Variant::ColFirst => (eps_q_exact.or(eps_q_hat).unwrap_or(0.0), 1.0 / min_of(q)),
        };
        let z_p = eps_p_hat.and_then(|e| residual(e, v0, min_of(p)).ok());
        let z_q = eps_q_hat.and_then(|e| residual(e, v0, min_of(q)).ok());

        if v0 == 0.0 {
            return ConvergenceReport {
                variant,
                v0,
                eps_p_hat,
                eps_q_hat,
                eps_p_exact,
                eps_q_exact,
                epsilon1,
                epsilon2,
                alpha: None,
                criterion: convergence_criterion(0.0, epsilon1, epsilon2).ok(),
                criterion_ok: true,
                predicted_iterations: Some(0),
                z_p,
                z_q,
            };
        }
        let criterion = convergence_criterion(v0, epsilon1, epsilon2).ok();
        let criterion_ok = criterion.is_some_and(|c| c.satisfied);
        let alpha = if criterion_ok {
            alpha(v0, epsilon1, epsilon2).ok()
        } else {
            None
        };
        let predicted_iterations = alpha
            .filter(|a| *a > 0.0 && *a < 1.0)
            .and_then(|a| apriori_iterations(v0, a, target_rel * v0).ok());
        ConvergenceReport {
            variant,
            v0,
            eps_p_hat,
            eps_q_hat,
            eps_p_exact,
            eps_q_exact,
            epsilon1,
            epsilon2,
            alpha,
            criterion,
            criterion_ok,
            predicted_iterations,
            z_p,
            z_q,
        }
    }
}
