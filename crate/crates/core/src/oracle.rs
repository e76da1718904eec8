//! Desk-scale exact projection of `A` onto
//! `{X : row sums p, column sums q, X >= 0, X = 0 on P}`.
//!
//! Dykstra's corrected cyclic projections onto the two affine marginal sets
//! and the orthant-with-pattern converge to the Euclidean projection itself,
//! not merely to some feasible point. Once the set of positive entries
//! settles, the duals are fitted on that set and the candidate
//! `x = a - lambda - mu` is accepted if its KKT residuals are within
//! tolerance. Nothing here shares code with the scaling iteration.

use ndarray::{Array1, Array2, Axis};

use crate::model::ProblemInstance;
use crate::{Error, Result};

/// Projection order inside one Dykstra sweep; the orthant always comes last.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ProjectionOrder {
    #[default]
    RowsFirst,
    ColsFirst,
}

#[derive(Clone, Debug)]
pub struct OracleConfig {
    /// Absolute tolerance on all three KKT residuals.
    pub tol: f64,
    pub max_iters: usize,
    /// Largest accepted `n * m`.
    pub size_limit: usize,
    pub order: ProjectionOrder,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 100_000,
            size_limit: 2000,
            order: ProjectionOrder::RowsFirst,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub x_star: Array2<f64>,
    pub lambda: Array1<f64>,
    pub mu: Array1<f64>,
    pub kkt_stationarity: f64,
    pub kkt_feasibility: f64,
    pub kkt_complementarity: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktResiduals {
    /// Max `|x_ij - a_ij + lambda_i + mu_j|` over off-pattern `x_ij > 0`.
    pub stationarity: f64,
    /// Max of marginal violation, negativity, and nonzeros on the pattern.
    pub feasibility: f64,
    /// Max of `a_ij - lambda_i - mu_j` over off-pattern `x_ij = 0`; the
    /// implied multiplier of `x_ij >= 0` must be nonnegative.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity)
    }
}

const CHECK_EVERY: usize = 10;
const RETRY_POLISH_EVERY: usize = 500;
const STALL_WINDOW: usize = 1000;
const STALL_MIN_ITERS: usize = 2000;

/// Projects `A` onto the constraint set of `instance`. Lower bounds are
/// handled by the usual shift; the duals are shift invariant.
pub fn exact_solve(instance: &ProblemInstance, config: &OracleConfig) -> Result<OracleSolution> {
    let (n, m) = instance.a().dim();
    if n * m > config.size_limit {
        return Err(Error::OracleSize {
            limit: config.size_limit,
            actual: n * m,
        });
    }
    if !(config.tol > 0.0) {
        return Err(Error::Domain(format!("oracle tolerance must be positive, got {}", config.tol)));
    }
    instance.ensure_valid()?;
    let h = instance.to_homogeneous()?;
    let mut sol = solve_homogeneous(&h, config)?;
    if let Some(d) = instance.lower_bounds() {
        sol.x_star += d;
    }
    Ok(sol)
}

fn solve_homogeneous(inst: &ProblemInstance, config: &OracleConfig) -> Result<OracleSolution> {
    let a = inst.a();
    let (p, q) = (inst.p(), inst.q());
    let free = a.mapv(|v| v != 0.0);
    let row_free: Vec<usize> = free.axis_iter(Axis(0)).map(|r| r.iter().filter(|&&f| f).count()).collect();
    let col_free: Vec<usize> = free.axis_iter(Axis(1)).map(|c| c.iter().filter(|&&f| f).count()).collect();
    let scale = p.iter().chain(q.iter()).fold(1.0_f64, |acc, v| acc.max(v.abs()));

    let mut x = a.clone();
    let mut c = [Array2::<f64>::zeros(a.dim()), Array2::zeros(a.dim()), Array2::zeros(a.dim())];
    let mut last_support: Option<Array2<bool>> = None;
    let mut last_polish = 0usize;
    let mut gaps: Vec<(usize, f64)> = Vec::new();

    for k in 1..=config.max_iters {
        let first = match config.order {
            ProjectionOrder::RowsFirst => 0,
            ProjectionOrder::ColsFirst => 1,
        };
        for set in [first, 1 - first, 2] {
            let mut y = &x + &c[set];
            match set {
                0 => project_rows(&mut y, &free, p, &row_free),
                1 => project_cols(&mut y, &free, q, &col_free),
                _ => project_orthant(&mut y, &free),
            }
            c[set] = &x + &c[set] - &y;
            x = y;
        }

        if k % CHECK_EVERY != 0 && k != config.max_iters {
            continue;
        }
        let support = x.mapv(|v| v > 0.0);
        // Degenerate entries (zero value, zero multiplier) can keep the
        // support from settling; certify the iterate directly once feasible.
        if marginal_gap(&x, p, q) <= config.tol {
            if let Some(sol) = certify(inst, &x, &support, config.tol, k) {
                return Ok(sol);
            }
        }
        let stable = last_support.as_ref() == Some(&support);
        if stable && (last_polish == 0 || k - last_polish >= RETRY_POLISH_EVERY || k == config.max_iters) {
            last_polish = k;
            if let Some(sol) = polish(inst, &support, config.tol, k) {
                return Ok(sol);
            }
        }
        if !stable {
            last_polish = 0;
        }
        last_support = Some(support);

        let gap = marginal_gap(&x, p, q);
        gaps.push((k, gap));
        if k >= STALL_MIN_ITERS && gap > 1e-6 * scale {
            if let Some(&(_, old)) = gaps.iter().rev().find(|(kk, _)| k - kk >= STALL_WINDOW) {
                if gap >= 0.999 * old {
                    return Err(Error::Infeasible { gap, iterations: k });
                }
            }
        }
    }

    // Report the residuals of the last iterate with least-squares duals.
    let support = x.mapv(|v| v > 0.0);
    let resid = a - &x;
    let (lambda, mu) = fit_duals(
        &support,
        masked_sums(&resid, &support, Axis(1)),
        masked_sums(&resid, &support, Axis(0)),
    );
    let r = kkt_homogeneous(&x, inst, &lambda, &mu);
    Err(Error::OracleNotConverged {
        iterations: config.max_iters,
        stationarity: r.stationarity,
        feasibility: r.feasibility,
        complementarity: r.complementarity,
    })
}

fn project_rows(y: &mut Array2<f64>, free: &Array2<bool>, p: &Array1<f64>, counts: &[usize]) {
    for (i, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
        let f = free.row(i);
        let s: f64 = row.iter().zip(f).filter(|(_, &fr)| fr).map(|(v, _)| *v).sum();
        let shift = (p[i] - s) / counts[i] as f64;
        for (v, &fr) in row.iter_mut().zip(f) {
            *v = if fr { *v + shift } else { 0.0 };
        }
    }
}

fn project_cols(y: &mut Array2<f64>, free: &Array2<bool>, q: &Array1<f64>, counts: &[usize]) {
    for (j, mut col) in y.axis_iter_mut(Axis(1)).enumerate() {
        let f = free.column(j);
        let s: f64 = col.iter().zip(f).filter(|(_, &fr)| fr).map(|(v, _)| *v).sum();
        let shift = (q[j] - s) / counts[j] as f64;
        for (v, &fr) in col.iter_mut().zip(f) {
            *v = if fr { *v + shift } else { 0.0 };
        }
    }
}

fn project_orthant(y: &mut Array2<f64>, free: &Array2<bool>) {
    ndarray::Zip::from(y).and(free).for_each(|v, &fr| {
        if !fr || *v < 0.0 {
            *v = 0.0;
        }
    });
}

fn marginal_gap(x: &Array2<f64>, p: &Array1<f64>, q: &Array1<f64>) -> f64 {
    let r = x.sum_axis(Axis(1));
    let c = x.sum_axis(Axis(0));
    let gr = r.iter().zip(p).fold(0.0_f64, |g, (a, b)| g.max((a - b).abs()));
    c.iter().zip(q).fold(gr, |g, (a, b)| g.max((a - b).abs()))
}

fn masked_sums(x: &Array2<f64>, mask: &Array2<bool>, axis: Axis) -> Array1<f64> {
    let mut out = Array1::zeros(x.len_of(Axis(1 - axis.index())));
    for ((i, j), &v) in x.indexed_iter() {
        if mask[[i, j]] {
            out[if axis == Axis(1) { i } else { j }] += v;
        }
    }
    out
}

/// `x` itself with least-squares duals on its support.
fn certify(inst: &ProblemInstance, x: &Array2<f64>, support: &Array2<bool>, tol: f64, k: usize) -> Option<OracleSolution> {
    let resid = inst.a() - x;
    let (lambda, mu) = fit_duals(
        support,
        masked_sums(&resid, support, Axis(1)),
        masked_sums(&resid, support, Axis(0)),
    );
    let r = kkt_homogeneous(x, inst, &lambda, &mu);
    (r.max() <= tol).then(|| OracleSolution {
        x_star: x.clone(),
        lambda,
        mu,
        kkt_stationarity: r.stationarity,
        kkt_feasibility: r.feasibility,
        kkt_complementarity: r.complementarity,
        iterations: k,
    })
}

/// Candidate on a fixed support: duals solve the marginal equations with
/// `x = a - lambda - mu` on the support and zero elsewhere.
fn polish(inst: &ProblemInstance, support: &Array2<bool>, tol: f64, k: usize) -> Option<OracleSolution> {
    let a = inst.a();
    let br = masked_sums(a, support, Axis(1)) - inst.p();
    let bc = masked_sums(a, support, Axis(0)) - inst.q();
    let (lambda, mu) = fit_duals(support, br, bc);
    let mut x = Array2::zeros(a.dim());
    for ((i, j), v) in x.indexed_iter_mut() {
        if support[[i, j]] {
            *v = (a[[i, j]] - lambda[i] - mu[j]).max(0.0);
        }
    }
    let r = kkt_homogeneous(&x, inst, &lambda, &mu);
    (r.max() <= tol).then_some(OracleSolution {
        x_star: x,
        lambda,
        mu,
        kkt_stationarity: r.stationarity,
        kkt_feasibility: r.feasibility,
        kkt_complementarity: r.complementarity,
        iterations: k,
    })
}

/// Least-squares fit of `lambda_i + mu_j ~ r_ij` over `support`, given the
/// masked row sums `br` and column sums `bc` of `r`. Solves the normal
/// equations by Jacobi-preconditioned conjugate gradients; the system is
/// singular along `(+c, -c)` per connected block, which does not affect the
/// sums `lambda_i + mu_j`.
fn fit_duals(support: &Array2<bool>, br: Array1<f64>, bc: Array1<f64>) -> (Array1<f64>, Array1<f64>) {
    let (n, m) = support.dim();
    let dr: Vec<f64> = support.axis_iter(Axis(0)).map(|r| r.iter().filter(|&&s| s).count() as f64).collect();
    let dc: Vec<f64> = support.axis_iter(Axis(1)).map(|c| c.iter().filter(|&&s| s).count() as f64).collect();
    let diag: Vec<f64> = dr.iter().chain(&dc).map(|&d| if d > 0.0 { d } else { 1.0 }).collect();
    let b: Vec<f64> = br.iter().chain(bc.iter()).copied().collect();

    let apply = |v: &[f64], out: &mut [f64]| {
        let (lam, mu) = v.split_at(n);
        out[..n].iter_mut().zip(&dr).zip(lam).for_each(|((o, d), l)| *o = d * l);
        out[n..].iter_mut().zip(&dc).zip(mu).for_each(|((o, d), u)| *o = d * u);
        for ((i, j), &s) in support.indexed_iter() {
            if s {
                out[i] += mu[j];
                out[n + j] += lam[i];
            }
        }
    };
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();

    let dim = n + m;
    let mut sol = vec![0.0; dim];
    let mut r = b.clone();
    let bnorm = dot(&b, &b).sqrt();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut dir = z.clone();
    let mut rz = dot(&r, &z);
    let mut ad = vec![0.0; dim];
    for _ in 0..20 * dim + 50 {
        if dot(&r, &r).sqrt() <= 1e-15 * bnorm || rz == 0.0 {
            break;
        }
        apply(&dir, &mut ad);
        let dad = dot(&dir, &ad);
        if !(dad > 0.0) {
            break;
        }
        let step = rz / dad;
        sol.iter_mut().zip(&dir).for_each(|(s, d)| *s += step * d);
        r.iter_mut().zip(&ad).for_each(|(r, a)| *r -= step * a);
        z.iter_mut().zip(r.iter().zip(&diag)).for_each(|(z, (r, d))| *z = r / d);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        dir.iter_mut().zip(&z).for_each(|(d, z)| *d = z + beta * *d);
    }
    let mu = Array1::from(sol.split_off(n));
    (Array1::from(sol), mu)
}

/// KKT residuals of `x` for `instance` with multipliers `(lambda, mu)` under
/// the convention `x_ij = a_ij - lambda_i - mu_j` on positive entries. With
/// lower bounds, `x` is in the original variables.
pub fn kkt_certificate(
    x: &Array2<f64>,
    instance: &ProblemInstance,
    duals: (&Array1<f64>, &Array1<f64>),
) -> Result<KktResiduals> {
    let (n, m) = instance.a().dim();
    if x.dim() != (n, m) || duals.0.len() != n || duals.1.len() != m {
        return Err(Error::Shape(format!(
            "x {:?}, lambda {}, mu {} for a {n}x{m} instance",
            x.dim(),
            duals.0.len(),
            duals.1.len()
        )));
    }
    let h = instance.to_homogeneous()?;
    let shifted = match instance.lower_bounds() {
        Some(d) => x - d,
        None => x.clone(),
    };
    Ok(kkt_homogeneous(&shifted, &h, duals.0, duals.1))
}

fn kkt_homogeneous(x: &Array2<f64>, inst: &ProblemInstance, lambda: &Array1<f64>, mu: &Array1<f64>) -> KktResiduals {
    let a = inst.a();
    let mut stationarity = 0.0_f64;
    let mut feasibility = marginal_gap(x, inst.p(), inst.q());
    let mut complementarity = 0.0_f64;
    for ((i, j), &v) in x.indexed_iter() {
        let aij = a[[i, j]];
        if aij == 0.0 {
            feasibility = feasibility.max(v.abs());
        } else if v > 0.0 {
            stationarity = stationarity.max((v - aij + lambda[i] + mu[j]).abs());
        } else {
            feasibility = feasibility.max(-v);
            complementarity = complementarity.max(aij - lambda[i] - mu[j]);
        }
    }
    KktResiduals {
        stationarity,
        feasibility,
        complementarity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{objective_j, relaxed_duals, relaxed_solution};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inst(a: Array2<f64>, p: Array1<f64>, q: Array1<f64>) -> ProblemInstance {
        ProblemInstance::new(a, p, q).unwrap()
    }

    fn random_instance(n: usize, m: usize, seed: u64) -> ProblemInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((n, m), |_| rng.random_range(0.1..3.0));
        let mut p = a.sum_axis(Axis(1)).mapv(|v| v * rng.random_range(0.6..1.4));
        let mut q = a.sum_axis(Axis(0)).mapv(|v| v * rng.random_range(0.6..1.4));
        let s = a.sum();
        p *= s / p.sum();
        q *= s / q.sum();
        inst(a, p, q)
    }

    #[test]
    fn relaxed_feasible_is_exact() {
        let i = inst(array![[1., 1.], [1., 1.]], array![3., 1.], array![2., 2.]);
        let sol = exact_solve(&i, &OracleConfig::default()).unwrap();
        assert_abs_diff_eq!(sol.x_star, array![[1.5, 1.5], [0.5, 0.5]], epsilon = 1e-12);
    }

    #[test]
    fn feasible_a_projects_to_itself() {
        let i = inst(array![[2., 1.], [1., 2.]], array![3., 3.], array![3., 3.]);
        let sol = exact_solve(&i, &OracleConfig::default()).unwrap();
        assert_abs_diff_eq!(sol.x_star, *i.a(), epsilon = 1e-12);
        assert!(objective_j(&sol.x_star, i.a()) < 1e-12);
        for ((ii, jj), _) in i.a().indexed_iter() {
            assert_abs_diff_eq!(sol.lambda[ii] + sol.mu[jj], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn closed_form_duals_certify_relaxed_solution() {
        let i = inst(array![[1., 2., 1.5], [3., 1., 0.5]], array![5., 4.], array![3., 3.5, 2.5]);
        let xh = relaxed_solution(&i);
        assert!(xh.iter().all(|&v| v > 0.0));
        let (l, u) = relaxed_duals(&i);
        let r = kkt_certificate(&xh, &i, (&l, &u)).unwrap();
        assert!(r.max() <= 1e-12, "{r:?}");
        let sol = exact_solve(&i, &OracleConfig::default()).unwrap();
        assert_abs_diff_eq!(sol.x_star, xh, epsilon = 1e-10);
    }

    #[test]
    fn stationarity_tracks_perturbation() {
        let i = inst(array![[1., 2., 1.5], [3., 1., 0.5]], array![5., 4.], array![3., 3.5, 2.5]);
        let mut x = relaxed_solution(&i);
        let (l, u) = relaxed_duals(&i);
        x[[1, 2]] += 1e-3;
        let r = kkt_certificate(&x, &i, (&l, &u)).unwrap();
        assert_abs_diff_eq!(r.stationarity, 1e-3, epsilon = 1e-12);
    }

    #[test]
    fn random_instance_certified() {
        let i = random_instance(6, 8, 7);
        let cfg = OracleConfig::default();
        let sol = exact_solve(&i, &cfg).unwrap();
        assert!(sol.kkt_stationarity <= cfg.tol);
        assert!(sol.kkt_feasibility <= cfg.tol);
        assert!(sol.kkt_complementarity <= cfg.tol);
        let j_star = objective_j(&sol.x_star, i.a());
        let j_hat = objective_j(&relaxed_solution(&i), i.a());
        assert!(j_star >= j_hat * (1.0 - 1e-12));
    }

    #[test]
    fn active_constraints_and_pattern() {
        // X^ has negative entries; the projection must activate them.
        let a = array![[5.0, 0.2, 0.0], [0.3, 4.0, 1.0], [0.1, 0.0, 3.0]];
        let i = inst(a, array![1.0, 6.0, 6.6], array![4.0, 4.6, 5.0]);
        assert!(relaxed_solution(&i).iter().any(|&v| v < 0.0));
        let cfg = OracleConfig::default();
        let sol = exact_solve(&i, &cfg).unwrap();
        for (ii, jj) in i.zero_pattern() {
            assert_eq!(sol.x_star[[ii, jj]], 0.0);
        }
        let other = exact_solve(
            &i,
            &OracleConfig {
                order: ProjectionOrder::ColsFirst,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_abs_diff_eq!(sol.x_star, other.x_star, epsilon = 10.0 * cfg.tol);
    }

    #[test]
    fn orders_agree_on_random_instances() {
        for seed in 0..10 {
            let i = random_instance(5, 9, 100 + seed);
            let cfg = OracleConfig::default();
            let a = exact_solve(&i, &cfg).unwrap();
            let b = exact_solve(
                &i,
                &OracleConfig {
                    order: ProjectionOrder::ColsFirst,
                    ..cfg.clone()
                },
            )
            .unwrap();
            assert_abs_diff_eq!(a.x_star, b.x_star, epsilon = 10.0 * cfg.tol);
        }
    }

    #[test]
    fn lower_bounds_shift() {
        let i = inst(array![[2., 2.], [2., 2.]], array![5., 3.], array![4., 4.])
            .with_lower_bounds(array![[0.5, 0.5], [0.5, 0.5]])
            .unwrap();
        let sol = exact_solve(&i, &OracleConfig::default()).unwrap();
        assert_abs_diff_eq!(sol.x_star, array![[2.5, 2.5], [1.5, 1.5]], epsilon = 1e-12);
    }

    #[test]
    fn size_limit() {
        let i = random_instance(50, 50, 1);
        assert!(matches!(
            exact_solve(&i, &OracleConfig::default()),
            Err(Error::OracleSize { limit: 2000, actual: 2500 })
        ));
    }

    #[test]
    fn inconsistent_pattern_reported() {
        // Row 0 can only feed column 0, which needs less than row 0 supplies.
        let a = array![[1.0, 0.0], [1.0, 1.0], [1.0, 1.0]];
        let i = inst(a, array![5.0, 1.0, 1.0], array![2.0, 5.0]);
        let cfg = OracleConfig {
            max_iters: 20_000,
            ..OracleConfig::default()
        };
        match exact_solve(&i, &cfg) {
            Err(Error::Infeasible { .. }) | Err(Error::OracleNotConverged { .. }) => {}
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
