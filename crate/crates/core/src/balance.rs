//! Alternating row/column proportional scaling.
//!
//! A row step rescales every row to its target sum `p_i`, a column step every
//! column to `q_j`. Steps are numbered continuously; steps `2t - 1` and `2t`
//! form iteration `t`. Zeros of the starting matrix are preserved exactly.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};

use crate::analytic::warm_start_projection;
use crate::diagnostics::{
    epsilon_p_exact, epsilon_p_hat, epsilon_q_exact, epsilon_q_hat, min_of, EXACT_SUBSET_LIMIT,
};
use crate::model::{from_homogeneous, ProblemInstance};
use crate::reduce;
use crate::{Error, Result};

/// Which step opens each iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    RowFirst,
    ColFirst,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::RowFirst => "row-first",
            Variant::ColFirst => "col-first",
        })
    }
}

/// Variant requested by the caller.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VariantChoice {
    #[default]
    Auto,
    RowFirst,
    ColFirst,
}

impl FromStr for VariantChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(VariantChoice::Auto),
            "row" | "row-first" => Ok(VariantChoice::RowFirst),
            "col" | "col-first" => Ok(VariantChoice::ColFirst),
            _ => Err(Error::Parse {
                location: "variant".into(),
                message: format!("expected auto, row or col, got {s:?}"),
            }),
        }
    }
}

/// Starting matrix of the iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum WarmStart {
    /// Start from `A` itself.
    #[default]
    PlainA,
    /// Start from the closed-form equality-constrained solution with
    /// negative entries and zero-pattern entries clamped to zero.
    CombinedAnalytic,
}

impl fmt::Display for WarmStart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WarmStart::PlainA => "plain",
            WarmStart::CombinedAnalytic => "combined",
        })
    }
}

impl FromStr for WarmStart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(WarmStart::PlainA),
            "combined" => Ok(WarmStart::CombinedAnalytic),
            _ => Err(Error::Parse {
                location: "warm start".into(),
                message: format!("expected plain or combined, got {s:?}"),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    /// Stop once `V <= tol_abs`.
    pub tol_abs: f64,
    /// Stop once `V <= tol_rel * V(X^(0))`.
    pub tol_rel: f64,
    /// Cap on the number of steps (two per iteration).
    pub max_steps: usize,
    pub variant: VariantChoice,
    pub warm_start: WarmStart,
    pub threads: usize,
    /// Fixed-order column reductions, bit-identical across thread counts.
    pub deterministic: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            tol_abs: 0.0,
            tol_rel: 1e-8,
            max_steps: 10_000,
            variant: VariantChoice::Auto,
            warm_start: WarmStart::PlainA,
            threads: 1,
            deterministic: true,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_abs >= 0.0) {
            return Err(Error::Domain(format!("tol_abs must be >= 0, got {}", self.tol_abs)));
        }
        if !(0.0..1.0).contains(&self.tol_rel) {
            return Err(Error::Domain(format!(
                "tol_rel must lie in [0, 1), got {}",
                self.tol_rel
            )));
        }
        if self.max_steps < 2 {
            return Err(Error::Domain(format!(
                "max_steps must be >= 2, got {}",
                self.max_steps
            )));
        }
        if self.threads == 0 {
            return Err(Error::Domain("threads must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub x_final: Array2<f64>,
    pub steps_taken: usize,
    pub v_final: f64,
    /// `v_trace[s] = V(X^(s))`; entry 0 is the starting residual.
    pub v_trace: Vec<f64>,
    pub variant_used: Variant,
    pub wall_time: Duration,
    pub converged: bool,
}

impl SolveResult {
    /// Completed iterations, `ceil(steps / 2)`.
    pub fn iterations(&self) -> usize {
        self.steps_taken.div_ceil(2)
    }

    /// Residuals at iteration boundaries, `V(X^(2t))`.
    pub fn v_per_iteration(&self) -> Vec<f64> {
        self.v_trace.iter().step_by(2).copied().collect()
    }

    pub fn v0(&self) -> f64 {
        self.v_trace[0]
    }
}

/// Rescales each row to sum `p_i`.
pub fn row_step(x: &Array2<f64>, p: &Array1<f64>) -> Result<Array2<f64>> {
    if x.nrows() != p.len() {
        return Err(Error::Shape(format!("p has {} entries, x has {} rows", p.len(), x.nrows())));
    }
    let mut out = x.as_standard_layout().into_owned();
    let m = out.ncols();
    let data = out.as_slice_mut().expect("standard layout");
    let sums = reduce::row_sums(data, m);
    let factors = row_factors(&sums, p)?;
    reduce::scale_rows(data, m, &factors, true);
    Ok(out)
}

/// Rescales each column to sum `q_j`.
pub fn col_step(x: &Array2<f64>, q: &Array1<f64>) -> Result<Array2<f64>> {
    if x.ncols() != q.len() {
        return Err(Error::Shape(format!(
            "q has {} entries, x has {} columns",
            q.len(),
            x.ncols()
        )));
    }
    let mut out = x.as_standard_layout().into_owned();
    let m = out.ncols();
    let data = out.as_slice_mut().expect("standard layout");
    let sums = reduce::col_sums(data, m, true);
    let factors = col_factors(&sums, q)?;
    reduce::scale_cols(data, m, &factors);
    Ok(out)
}

fn row_factors(sums: &[f64], p: &Array1<f64>) -> Result<Vec<f64>> {
    sums.iter()
        .zip(p)
        .enumerate()
        .map(|(i, (&s, &pi))| if s > 0.0 { Ok(pi / s) } else { Err(Error::DegenerateRow(i)) })
        .collect()
}

fn col_factors(sums: &[f64], q: &Array1<f64>) -> Result<Vec<f64>> {
    sums.iter()
        .zip(q)
        .enumerate()
        .map(|(j, (&s, &qj))| if s > 0.0 { Ok(qj / s) } else { Err(Error::DegenerateColumn(j)) })
        .collect()
}

/// Picks the realization with the larger right-hand side of the starting
/// criterion: column-first iff `eps_p(A) min p < eps_q(A) min q`.
///
/// Exact constants are used when `n + m <= EXACT_SUBSET_LIMIT`, hat
/// estimates otherwise; a constant that cannot be evaluated counts as 0.
pub fn choose_variant(instance: &ProblemInstance) -> Variant {
    let a = instance.a();
    let small = a.nrows() + a.ncols() <= EXACT_SUBSET_LIMIT;
    let (ep, eq) = if small {
        (epsilon_p_exact(a), epsilon_q_exact(a))
    } else {
        (epsilon_p_hat(a), epsilon_q_hat(a))
    };
    let lhs = ep.unwrap_or(0.0) * min_of(instance.p());
    let rhs = eq.unwrap_or(0.0) * min_of(instance.q());
    if lhs < rhs {
        Variant::ColFirst
    } else {
        Variant::RowFirst
    }
}

/// Runs the iteration until `V` falls under the tolerance at an iteration
/// boundary or `max_steps` is reached. Lower bounds, if present, are shifted
/// out before and added back after.
pub fn solve(instance: &ProblemInstance, config: &SolveConfig) -> Result<SolveResult> {
    config.validate()?;
    instance.ensure_valid()?;
    let homogeneous = instance.to_homogeneous()?;
    let variant = match config.variant {
        VariantChoice::Auto => choose_variant(&homogeneous),
        VariantChoice::RowFirst => Variant::RowFirst,
        VariantChoice::ColFirst => Variant::ColFirst,
    };
    let x0 = match config.warm_start {
        WarmStart::PlainA => homogeneous.a().as_standard_layout().into_owned(),
        WarmStart::CombinedAnalytic => warm_start_projection(&homogeneous)?,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Domain(format!("cannot build thread pool: {e}")))?;
    let mut result = pool.install(|| iterate(x0, &homogeneous, variant, config))?;
    if let Some(d) = instance.lower_bounds() {
        result.x_final = from_homogeneous(&result.x_final, d)?;
    }
    Ok(result)
}

fn iterate(
    mut x: Array2<f64>,
    instance: &ProblemInstance,
    variant: Variant,
    config: &SolveConfig,
) -> Result<SolveResult> {
    let start = Instant::now();
    let (p, q) = (instance.p(), instance.q());
    let m = x.ncols();
    let det = config.deterministic;
    let data = x.as_slice_mut().expect("standard layout");

    let mut rows = reduce::row_sums(data, m);
    let mut cols = reduce::col_sums(data, m, det);
    let v0 = abs_gap(&rows, p) + abs_gap(&cols, q);
    let threshold = config.tol_abs.max(config.tol_rel * v0);
    let mut trace = vec![v0];
    let mut converged = v0 <= threshold;
    let mut steps = 0;

    while !converged && steps < config.max_steps {
        steps += 1;
        let row_turn = (steps % 2 == 1) == (variant == Variant::RowFirst);
        // Only the marginal not enforced by this step contributes to V.
        let v = if row_turn {
            let f = row_factors(&rows, p)?;
            cols = reduce::scale_rows(data, m, &f, det);
            abs_gap(&cols, q)
        } else {
            let g = col_factors(&cols, q)?;
            rows = reduce::scale_cols(data, m, &g);
            abs_gap(&rows, p)
        };
        trace.push(v);
        if steps % 2 == 0 || steps == config.max_steps {
            converged = v <= threshold;
        }
    }

    Ok(SolveResult {
        v_final: *trace.last().unwrap(),
        x_final: x,
        steps_taken: steps,
        v_trace: trace,
        variant_used: variant,
        wall_time: start.elapsed(),
        converged,
    })
}

fn abs_gap(sums: &[f64], target: &Array1<f64>) -> f64 {
    sums.iter().zip(target).map(|(s, t)| (s - t).abs()).sum()
}
