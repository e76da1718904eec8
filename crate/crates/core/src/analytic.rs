//! Closed-form equality-constrained solution and the objective-side bounds
//! built on it.
//!
//! Dropping the sign and zero-pattern constraints leaves a least-squares
//! problem with only the two marginal families. Its minimizer `X^` is
//! explicit, and since the full problem has a smaller feasible set,
//! `J(X^) <= J(X*)`. Any feasible iterate then gives the a posteriori bracket
//! `J(X^) <= J(X*) <= J(X^(s))`.

use ndarray::{Array1, Array2, Axis, Zip};

use crate::diagnostics::lyapunov_v;
use crate::model::ProblemInstance;
use crate::{Error, Result};

/// `delta_j` at or above which [`asymptotic_distance`] is flagged unreliable.
pub const ASYMPTOTIC_DELTA_LIMIT: f64 = 0.1;

/// Minimizer of `||X - A||_2` subject to the row and column sums only:
///
/// `x_ij = a_ij - (xi_i - p_i)/m - (eta_j - q_j)/n + (zeta - s)/(n m)`
///
/// with `xi`, `eta` the row and column sums of `A`, `zeta` its total and
/// `s = sum(p)`. May be negative and nonzero on the zero pattern.
pub fn relaxed_solution(instance: &ProblemInstance) -> Array2<f64> {
    let (lambda, mu) = relaxed_duals(instance);
    let mut x = instance.a().to_owned();
    Zip::indexed(&mut x).par_for_each(|(i, j), v| *v -= lambda[i] + mu[j]);
    x
}

/// One split of the multipliers of the equality-constrained problem, with
/// `x_ij = a_ij - (lambda_i + mu_j)`. Only the sums `lambda_i + mu_j` are
/// determined; this split puts the total correction on `lambda`.
pub fn relaxed_duals(instance: &ProblemInstance) -> (Array1<f64>, Array1<f64>) {
    let a = instance.a();
    let (n, m) = a.dim();
    let (nf, mf) = (n as f64, m as f64);
    let xi = a.sum_axis(Axis(1));
    let eta = a.sum_axis(Axis(0));
    let zeta = xi.sum();
    let s = instance.total();
    let shift = (zeta - s) / (nf * mf);
    let lambda = (&xi - instance.p()) / mf - shift;
    let mu = (&eta - instance.q()) / nf;
    (lambda, mu)
}

/// `J(x) = ||x - a||_2` (Frobenius norm, not squared).
pub fn objective_j(x: &Array2<f64>, a: &Array2<f64>) -> f64 {
    assert_eq!(x.dim(), a.dim(), "objective needs equal shapes");
    Zip::from(x)
        .and(a)
        .fold(0.0, |acc, &xv, &av| acc + (xv - av) * (xv - av))
        .sqrt()
}

/// Relative objective excess over the relaxed solution,
/// `(J(x) - J(X^)) / J(X^)`. For a feasible `x` this bounds the true relative
/// error against the exact solution from above.
pub fn delta_j(x: &Array2<f64>, instance: &ProblemInstance) -> Result<f64> {
    let j_hat = objective_j(&relaxed_solution(instance), instance.a());
    delta_j_with(x, instance.a(), j_hat)
}

fn delta_j_with(x: &Array2<f64>, a: &Array2<f64>, j_hat: f64) -> Result<f64> {
    if !(j_hat > 0.0) {
        return Err(Error::Degenerate(
            "J of the relaxed solution is zero (A already satisfies the marginals)".into(),
        ));
    }
    Ok((objective_j(x, a) - j_hat) / j_hat)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// A priori bound `J(X^(2t)) <= (2 V(A) / alpha)(1 - (1 - alpha)^(2t))`.
pub fn j_upper_bound(v_a: f64, alpha: f64, t: u64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(v_a > 0.0) {
        return Err(Error::Domain(format!("V(A) must be positive, got {v_a}")));
    }
    Ok(2.0 * v_a / alpha * (1.0 - (1.0 - alpha).powf(2.0 * t as f64)))
}

/// Distance bound
/// `||X^(2t) - X*|| <= sqrt(J*^2 d (2 + d) + J* (4 V(A) / alpha)(1 - alpha)^(2t))`.
///
/// Here `delta_j = J(X^(2t)) / J* - 1 >= -1`; it is negative for iterates
/// that are not yet feasible. The bound increases in both `j_star` and
/// `delta_j`, so `J(X^(2t))` and the relaxed-solution `delta_j` may stand in
/// for the unknown exact values.
pub fn distance_bound(j_star: f64, delta_j: f64, v_a: f64, alpha: f64, t: u64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(j_star >= 0.0 && delta_j >= -1.0 && v_a >= 0.0) {
        return Err(Error::Domain(format!(
            "need J* >= 0, delta_j >= -1, V(A) >= 0; got {j_star}, {delta_j}, {v_a}"
        )));
    }
    let first = j_star * j_star * delta_j * (2.0 + delta_j);
    let second = j_star * 4.0 * v_a / alpha * (1.0 - alpha).powf(2.0 * t as f64);
    let radicand = first + second;
    if radicand < 0.0 {
        return Err(Error::Domain(format!(
            "distance bound radicand {radicand} is negative; the rate hypothesis cannot hold"
        )));
    }
    Ok(radicand.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AsymptoticDistance {
    /// `J* sqrt(2 delta_j)`.
    pub value: f64,
    /// False when `delta_j >= ASYMPTOTIC_DELTA_LIMIT`; the estimate assumes
    /// a small relative error.
    pub reliable: bool,
}

/// Small-error estimate `||x - X*|| ~ J* sqrt(2 delta_j)`.
pub fn asymptotic_distance(j_star: f64, delta_j: f64) -> AsymptoticDistance {
    AsymptoticDistance {
        value: j_star * (2.0 * delta_j.max(0.0)).sqrt(),
        reliable: delta_j < ASYMPTOTIC_DELTA_LIMIT,
    }
}

/// Sets negative entries and zero-pattern entries of `x` to `0.0`.
pub fn clamp_to_pattern(x: &Array2<f64>, instance: &ProblemInstance) -> Array2<f64> {
    let mut out = x.as_standard_layout().into_owned();
    Zip::from(&mut out).and(instance.a()).for_each(|v, &a| {
        if a == 0.0 || *v <= 0.0 {
            *v = 0.0;
        }
    });
    out
}

/// Starting matrix of the combined approach: the relaxed solution with
/// negative and zero-pattern entries clamped to zero. Works in shifted
/// variables when lower bounds are present and shifts back.
pub fn warm_start_projection(instance: &ProblemInstance) -> Result<Array2<f64>> {
    let h = instance.to_homogeneous()?;
    let w = clamp_to_pattern(&relaxed_solution(&h), &h);
    for (i, row) in w.axis_iter(Axis(0)).enumerate() {
        if row.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateRow(i));
        }
    }
    for (j, col) in w.axis_iter(Axis(1)).enumerate() {
        if col.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateColumn(j));
        }
    }
    Ok(match instance.lower_bounds() {
        Some(d) => w + d,
        None => w,
    })
}

/// A posteriori summary for one iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorBounds {
    pub j_hat: f64,
    pub j_iter: f64,
    /// `None` when `V(A) = 0` (no correction needed, true error is 0).
    pub delta_j: Option<f64>,
    /// A priori objective bound; needs `alpha`.
    pub j_upper: Option<f64>,
    /// Distance bound with `J(x)` and the relaxed `delta_j` standing in for
    /// the exact values; needs `alpha`.
    pub dist_upper: Option<f64>,
    pub dist_asymptotic: f64,
}

/// Bounds for iterate `x` taken after `t` full iterations from `X^(0) = A`.
/// `alpha` comes from the starting criterion; pass `None` when it fails.
pub fn error_bounds(
    instance: &ProblemInstance,
    x: &Array2<f64>,
    alpha: Option<f64>,
    t: u64,
) -> ErrorBounds {
    let a = instance.a();
    let v_a = lyapunov_v(a, instance.p(), instance.q());
    let j_iter = objective_j(x, a);
    if v_a == 0.0 {
        return ErrorBounds {
            j_hat: 0.0,
            j_iter,
            delta_j: None,
            j_upper: Some(0.0),
            dist_upper: Some(0.0),
            dist_asymptotic: 0.0,
        };
    }
    let j_hat = objective_j(&relaxed_solution(instance), a);
    let delta = delta_j_with(x, a, j_hat).ok();
    let alpha = alpha.filter(|a| *a > 0.0 && *a < 1.0);
    let j_upper = alpha.and_then(|al| j_upper_bound(v_a, al, t).ok());
    let dist_upper = match (alpha, delta) {
        (Some(al), Some(d)) => distance_bound(j_iter, d.max(0.0), v_a, al, t).ok(),
        _ => None,
    };
    ErrorBounds {
        j_hat,
        j_iter,
        delta_j: delta,
        j_upper,
        dist_upper,
        dist_asymptotic: asymptotic_distance(j_iter, delta.unwrap_or(0.0)).value,
    }
}
