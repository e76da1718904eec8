//! Per-run report rows, written as CSV or as an aligned text table.

use std::fmt::Write as _;

use qtp_core::{
    delta_j, epsilon_p_hat, epsilon_q_hat, lyapunov_v, ConvergenceReport, ProblemInstance,
    SolveResult, WarmStart,
};
use qtp_core::diagnostics::{residual_zp, residual_zq};
use ndarray::Array2;

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub n: usize,
    pub m: usize,
    pub zero_pct: f64,
    /// Generator turbulence; `None` for instances read from files.
    pub turbulence: Option<f64>,
    pub variant: String,
    pub warm_start: String,
    pub iterations: usize,
    pub converged: bool,
    pub v_final: f64,
    /// Present only when `V(A) > 0`.
    pub delta_j: Option<f64>,
    pub eps_p_hat: Option<f64>,
    pub eps_q_hat: Option<f64>,
    /// Present only when the starting criterion holds.
    pub alpha: Option<f64>,
    pub z_p_start: Option<f64>,
    pub z_q_start: Option<f64>,
    pub z_p_end: Option<f64>,
    pub z_q_end: Option<f64>,
    /// Signed mean of `(x - a) / a` over the nonzeros of `A`.
    pub mean_rel_correction: f64,
    pub wall_time_s: f64,
}

impl RunRow {
    /// Assembles the row for `result`, obtained from `instance` starting at `x0`.
    pub fn new(
        instance: &ProblemInstance,
        x0: &Array2<f64>,
        result: &SolveResult,
        warm_start: WarmStart,
        turbulence: Option<f64>,
    ) -> RunRow {
        let a = instance.a();
        let (p, q) = (instance.p(), instance.q());
        let (n, m) = a.dim();
        let zeros = a.iter().filter(|&&v| v == 0.0).count();
        let start = ConvergenceReport::compute(x0, p, q, result.variant_used, 1e-8);
        let v_a = lyapunov_v(a, p, q);
        let x = &result.x_final;
        let (sum, count) = a
            .iter()
            .zip(x)
            .filter(|(&av, _)| av != 0.0)
            .fold((0.0, 0usize), |(s, c), (&av, &xv)| (s + (xv - av) / av, c + 1));
        RunRow {
            n,
            m,
            zero_pct: 100.0 * zeros as f64 / (n * m) as f64,
            turbulence,
            variant: result.variant_used.to_string(),
            warm_start: warm_start.to_string(),
            iterations: result.iterations(),
            converged: result.converged,
            v_final: result.v_final,
            delta_j: if v_a > 0.0 { delta_j(x, instance).ok() } else { None },
            eps_p_hat: epsilon_p_hat(x0).ok(),
            eps_q_hat: epsilon_q_hat(x0).ok(),
            alpha: start.alpha,
            z_p_start: residual_zp(x0, p, q).ok().filter(|v| v.is_finite()),
            z_q_start: residual_zq(x0, p, q).ok().filter(|v| v.is_finite()),
            z_p_end: residual_zp(x, p, q).ok().filter(|v| v.is_finite()),
            z_q_end: residual_zq(x, p, q).ok().filter(|v| v.is_finite()),
            mean_rel_correction: if count > 0 { sum / count as f64 } else { 0.0 },
            wall_time_s: result.wall_time.as_secs_f64(),
        }
    }

    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.6e}"));
        vec![
            self.n.to_string(),
            self.m.to_string(),
            format!("{:.2}", self.zero_pct),
            self.turbulence.map_or_else(String::new, |t| format!("{t}")),
            self.variant.clone(),
            self.warm_start.clone(),
            self.iterations.to_string(),
            self.converged.to_string(),
            format!("{:.6e}", self.v_final),
            opt(self.delta_j),
            opt(self.eps_p_hat),
            opt(self.eps_q_hat),
            opt(self.alpha),
            opt(self.z_p_start),
            opt(self.z_q_start),
            opt(self.z_p_end),
            opt(self.z_q_end),
            format!("{:.6e}", self.mean_rel_correction),
            format!("{:.4}", self.wall_time_s),
        ]
    }
}

pub const HEADER: [&str; 19] = [
    "n",
    "m",
    "zero_pct",
    "turbulence",
    "variant",
    "warm_start",
    "iterations",
    "converged",
    "v_final",
    "delta_j",
    "eps_p_hat",
    "eps_q_hat",
    "alpha",
    "z_p_start",
    "z_q_start",
    "z_p_end",
    "z_q_end",
    "mean_rel_correction",
    "wall_time_s",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub rows: Vec<RunRow>,
}

impl RunReport {
    pub fn to_csv(&self) -> String {
        let mut out = HEADER.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.fields().join(","));
            out.push('\n');
        }
        out
    }

    /// Right-aligned columns; empty optional cells print as `-`.
    pub fn to_table(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                r.fields()
                    .into_iter()
                    .map(|c| if c.is_empty() { "-".to_string() } else { c })
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = HEADER
            .iter()
            .enumerate()
            .map(|(k, h)| cells.iter().map(|r| r[k].len()).chain([h.len()]).max().unwrap())
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, row: &[&str]| {
            for (k, c) in row.iter().enumerate() {
                let _ = write!(out, "{}{c:>w$}", if k == 0 { "" } else { "  " }, w = widths[k]);
            }
            out.push('\n');
        };
        line(&mut out, &HEADER);
        for r in &cells {
            line(&mut out, &r.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }
}
