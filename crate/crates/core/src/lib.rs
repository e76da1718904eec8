//! Approximate solver for the quadratic transportation problem with
//! zero-pattern and lower-bound constraints.
//!
//! The solver alternates row and column proportional scaling starting from
//! the data matrix (or from a clamped closed-form warm start). Around it sit
//! the convergence diagnostics (Lyapunov residual, contraction constants,
//! a priori iteration estimates), the a posteriori objective and distance
//! bounds, a random instance generator, and a small exact projection solver
//! used to certify those bounds on desk-sized instances.
//!
//! Matrices are dense, row-major [`ndarray::Array2<f64>`].

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod analytic;
pub mod balance;
pub mod diagnostics;
mod error;
pub mod gen;
pub mod io;
pub mod model;
pub mod oracle;
mod reduce;

pub use analytic::{
    asymptotic_distance, delta_j, distance_bound, error_bounds, j_upper_bound, objective_j,
    relaxed_solution, warm_start_projection, ErrorBounds,
};
pub use balance::{
    choose_variant, col_step, row_step, solve, SolveConfig, SolveResult, Variant, VariantChoice,
    WarmStart,
};
pub use diagnostics::{
    alpha, apriori_iterations, convergence_criterion, epsilon_p_exact, epsilon_p_hat,
    epsilon_q_exact, epsilon_q_hat, lyapunov_v, majorant_check, r_function, residual_zp,
    residual_zq, subset_ratio_g, ConvergenceReport, CriterionDetail,
};
pub use error::{Error, Result};
pub use gen::{generate, GeneratorConfig};
pub use model::{from_homogeneous, ProblemInstance, ValidationReport, Violation};
pub use oracle::{exact_solve, kkt_certificate, KktResiduals, OracleConfig, OracleSolution};

pub use ndarray::{Array1, Array2};
