//! Problem data, validation, and the lower-bound change of variables.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::{Error, Result};

/// Relative tolerance on `|sum(p) - sum(q)|`, measured against `sum(p)`.
pub const BALANCE_TOL: f64 = 1e-12;

/// Data of one quadratic transportation problem.
///
/// The structural zero set is not stored: it is exactly the set of positions
/// where `a` is `0.0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance {
    a: Array2<f64>,
    p: Array1<f64>,
    q: Array1<f64>,
    lower_bounds: Option<Array2<f64>>,
}

/// One failed invariant, with the indices involved.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NonFinite { i: usize, j: usize },
    NegativeEntry { i: usize, j: usize, value: f64 },
    NonPositiveP { i: usize, value: f64 },
    NonPositiveQ { j: usize, value: f64 },
    ZeroRow { i: usize },
    ZeroColumn { j: usize },
    Imbalance { sum_p: f64, sum_q: f64 },
    /// `a_ij > d_ij` fails off the zero pattern.
    LowerBoundEntry { i: usize, j: usize, a: f64, d: f64 },
    /// `d_ij` is nonzero on the zero pattern (so `a_ij = d_ij` fails there).
    LowerBoundOnZero { i: usize, j: usize, d: f64 },
    /// `p_i > sum_j d_ij` fails.
    LowerBoundRow { i: usize, p: f64, sum_d: f64 },
    /// `q_j > sum_i d_ij` fails.
    LowerBoundColumn { j: usize, q: f64, sum_d: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::NonFinite { i, j } => write!(f, "a[{i},{j}] is not finite"),
            Violation::NegativeEntry { i, j, value } => write!(f, "a[{i},{j}] = {value} < 0"),
            Violation::NonPositiveP { i, value } => write!(f, "p[{i}] = {value} is not > 0"),
            Violation::NonPositiveQ { j, value } => write!(f, "q[{j}] = {value} is not > 0"),
            Violation::ZeroRow { i } => write!(f, "row {i} of A is entirely zero"),
            Violation::ZeroColumn { j } => write!(f, "column {j} of A is entirely zero"),
            Violation::Imbalance { sum_p, sum_q } => {
                write!(f, "marginals unbalanced: sum(p) = {sum_p}, sum(q) = {sum_q}")
            }
            Violation::LowerBoundEntry { i, j, a, d } => {
                write!(f, "a[{i},{j}] = {a} is not > d[{i},{j}] = {d}")
            }
            Violation::LowerBoundOnZero { i, j, d } => write!(
                f,
                "a[{i},{j}] = 0 but d[{i},{j}] = {d}; lower bounds must vanish on the zero pattern"
            ),
            Violation::LowerBoundRow { i, p, sum_d } => {
                write!(f, "p[{i}] = {p} is not > row sum of d = {sum_d}")
            }
            Violation::LowerBoundColumn { j, q, sum_d } => {
                write!(f, "q[{j}] = {q} is not > column sum of d = {sum_d}")
            }
        }
    }
}

/// Outcome of [`ProblemInstance::validate`]. Empty means accepted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_accepted(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "accepted");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl ProblemInstance {
    /// Builds an instance after checking shapes. Value constraints are left
    /// to [`validate`](Self::validate).
    pub fn new(a: Array2<f64>, p: Array1<f64>, q: Array1<f64>) -> Result<Self> {
        let (n, m) = a.dim();
        if n == 0 || m == 0 {
            return Err(Error::Shape(format!("A must be non-empty, got {n}x{m}")));
        }
        if p.len() != n {
            return Err(Error::Shape(format!("p has length {}, A has {n} rows", p.len())));
        }
        if q.len() != m {
            return Err(Error::Shape(format!("q has length {}, A has {m} columns", q.len())));
        }
        Ok(ProblemInstance {
            a,
            p,
            q,
            lower_bounds: None,
        })
    }

    /// Attaches a lower-bound matrix `d` (same shape as `A`).
    pub fn with_lower_bounds(mut self, d: Array2<f64>) -> Result<Self> {
        if d.dim() != self.a.dim() {
            return Err(Error::Shape(format!(
                "lower bounds are {:?}, A is {:?}",
                d.dim(),
                self.a.dim()
            )));
        }
        self.lower_bounds = Some(d);
        Ok(self)
    }

    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn p(&self) -> &Array1<f64> {
        &self.p
    }

    pub fn q(&self) -> &Array1<f64> {
        &self.q
    }

    pub fn lower_bounds(&self) -> Option<&Array2<f64>> {
        self.lower_bounds.as_ref()
    }

    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.a.ncols()
    }

    /// Common total `s = sum(p)`.
    pub fn total(&self) -> f64 {
        self.p.sum()
    }

    pub fn min_p(&self) -> f64 {
        self.p.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_q(&self) -> f64 {
        self.q.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Whether `(i, j)` belongs to the zero pattern (`a_ij == 0.0`).
    pub fn is_structural_zero(&self, i: usize, j: usize) -> bool {
        self.a[[i, j]] == 0.0
    }

    /// Row-major list of zero-pattern positions.
    pub fn zero_pattern(&self) -> Vec<(usize, usize)> {
        zero_positions(self.a.view())
    }

    /// Checks every instance invariant and lists the failures.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for ((i, j), &v) in self.a.indexed_iter() {
            if !v.is_finite() {
                violations.push(Violation::NonFinite { i, j });
            } else if v < 0.0 {
                violations.push(Violation::NegativeEntry { i, j, value: v });
            }
        }
        for (i, &v) in self.p.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                violations.push(Violation::NonPositiveP { i, value: v });
            }
        }
        for (j, &v) in self.q.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                violations.push(Violation::NonPositiveQ { j, value: v });
            }
        }
        for (i, row) in self.a.axis_iter(Axis(0)).enumerate() {
            if row.iter().all(|&v| v == 0.0) {
                violations.push(Violation::ZeroRow { i });
            }
        }
        for (j, col) in self.a.axis_iter(Axis(1)).enumerate() {
            if col.iter().all(|&v| v == 0.0) {
                violations.push(Violation::ZeroColumn { j });
            }
        }
        let sum_p = self.p.sum();
        let sum_q = self.q.sum();
        if !((sum_p - sum_q).abs() <= BALANCE_TOL * sum_p.abs()) {
            violations.push(Violation::Imbalance { sum_p, sum_q });
        }
        if let Some(d) = &self.lower_bounds {
            violations.extend(self.lower_bound_violations(d));
        }
        ValidationReport { violations }
    }

    /// `Ok` iff [`validate`](Self::validate) accepts the instance.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_accepted() {
            Ok(())
        } else {
            Err(Error::Invalid(report.to_string()))
        }
    }

    fn lower_bound_violations(&self, d: &Array2<f64>) -> Vec<Violation> {
        let mut out = Vec::new();
        for ((i, j), &dij) in d.indexed_iter() {
            let aij = self.a[[i, j]];
            if aij == 0.0 {
                if dij != 0.0 {
                    out.push(Violation::LowerBoundOnZero { i, j, d: dij });
                }
            } else if !(aij > dij) {
                out.push(Violation::LowerBoundEntry { i, j, a: aij, d: dij });
            }
        }
        for (i, row) in d.axis_iter(Axis(0)).enumerate() {
            let sum_d = row.sum();
            if !(self.p[i] > sum_d) {
                out.push(Violation::LowerBoundRow {
                    i,
                    p: self.p[i],
                    sum_d,
                });
            }
        }
        for (j, col) in d.axis_iter(Axis(1)).enumerate() {
            let sum_d = col.sum();
            if !(self.q[j] > sum_d) {
                out.push(Violation::LowerBoundColumn {
                    j,
                    q: self.q[j],
                    sum_d,
                });
            }
        }
        out
    }

    /// Shifts the lower bounds out of the problem: `a' = a - d`,
    /// `p' = p - rowsum(d)`, `q' = q - colsum(d)`. The result has no lower
    /// bounds and the same zero pattern. Instances without lower bounds are
    /// returned unchanged.
    pub fn to_homogeneous(&self) -> Result<ProblemInstance> {
        let Some(d) = &self.lower_bounds else {
            return Ok(self.clone());
        };
        if let Some(v) = self.lower_bound_violations(d).into_iter().next() {
            return Err(Error::LowerBound(v.to_string()));
        }
        let a = &self.a - d;
        let p = &self.p - &d.sum_axis(Axis(1));
        let q = &self.q - &d.sum_axis(Axis(0));
        ProblemInstance::new(a, p, q)
    }
}

/// Inverse of the lower-bound shift: `x = x' + d`.
pub fn from_homogeneous(solution: &Array2<f64>, lower_bounds: &Array2<f64>) -> Result<Array2<f64>> {
    if solution.dim() != lower_bounds.dim() {
        return Err(Error::Shape(format!(
            "solution is {:?}, lower bounds are {:?}",
            solution.dim(),
            lower_bounds.dim()
        )));
    }
    Ok(solution + lower_bounds)
}

pub(crate) fn zero_positions(x: ArrayView2<'_, f64>) -> Vec<(usize, usize)> {
    x.indexed_iter()
        .filter(|(_, &v)| v == 0.0)
        .map(|(ij, _)| ij)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn inst(a: Array2<f64>, p: Array1<f64>, q: Array1<f64>) -> ProblemInstance {
        ProblemInstance::new(a, p, q).unwrap()
    }

    #[test]
    fn uniform_balanced_instance_is_accepted() {
        let i = inst(array![[1., 1.], [1., 1.]], array![2., 2.], array![2., 2.]);
        assert!(i.validate().is_accepted());
        assert!(i.ensure_valid().is_ok());
    }

    #[test]
    fn zero_row_is_rejected() {
        let i = inst(array![[0., 0.], [1., 1.]], array![1., 3.], array![2., 2.]);
        let r = i.validate();
        assert_eq!(r.violations, vec![Violation::ZeroRow { i: 0 }]);
    }

    #[test]
    fn imbalance_is_rejected() {
        let i = inst(array![[1., 1.], [1., 1.]], array![3., 1.], array![2., 1.]);
        let r = i.validate();
        assert_eq!(
            r.violations,
            vec![Violation::Imbalance {
                sum_p: 4.0,
                sum_q: 3.0
            }]
        );
    }

    #[test]
    fn sign_and_column_violations_are_listed() {
        let i = inst(
            array![[-1., 0.], [1., 0.]],
            array![1., 0.],
            array![1., 0.],
        );
        let v = i.validate().violations;
        assert!(v.contains(&Violation::NegativeEntry { i: 0, j: 0, value: -1.0 }));
        assert!(v.contains(&Violation::NonPositiveP { i: 1, value: 0.0 }));
        assert!(v.contains(&Violation::NonPositiveQ { j: 1, value: 0.0 }));
        assert!(v.contains(&Violation::ZeroColumn { j: 1 }));
    }

    #[test]
    fn degenerate_shapes_are_accepted() {
        let row = inst(array![[1., 2., 3.]], array![6.], array![1., 2., 3.]);
        assert!(row.validate().is_accepted());
        let col = inst(array![[1.], [2.]], array![1., 2.], array![3.]);
        assert!(col.validate().is_accepted());
    }

    #[test]
    fn shape_errors() {
        assert!(ProblemInstance::new(array![[1., 1.]], array![1., 1.], array![1., 1.]).is_err());
        assert!(ProblemInstance::new(array![[1., 1.]], array![2.], array![2.]).is_err());
        assert!(ProblemInstance::new(Array2::zeros((0, 2)), array![], array![1., 1.]).is_err());
    }

    #[test]
    fn zero_pattern_matches_exact_zeros() {
        let i = inst(array![[0., 1.], [2., 0.]], array![1., 2.], array![2., 1.]);
        assert_eq!(i.zero_pattern(), vec![(0, 0), (1, 1)]);
        assert!(i.is_structural_zero(0, 0));
        assert!(!i.is_structural_zero(0, 1));
    }

    #[test]
    fn to_homogeneous_subtracts_bounds() {
        let i = inst(array![[2., 1.], [1., 2.]], array![5., 3.], array![4., 4.])
            .with_lower_bounds(array![[1., 0.], [0., 1.]])
            .unwrap();
        assert!(i.validate().is_accepted());
        let h = i.to_homogeneous().unwrap();
        assert_eq!(h.a(), &array![[1., 1.], [1., 1.]]);
        assert_eq!(h.p(), &array![4., 2.]);
        assert_eq!(h.q(), &array![3., 3.]);
        assert!(h.lower_bounds().is_none());
        assert_eq!(h.zero_pattern(), i.zero_pattern());
    }

    #[test]
    fn to_homogeneous_identity_cases() {
        let base = inst(array![[2., 1.], [1., 2.]], array![3., 3.], array![3., 3.]);
        assert_eq!(base.to_homogeneous().unwrap(), base);
        let zeros = base.clone().with_lower_bounds(Array2::zeros((2, 2))).unwrap();
        assert_eq!(zeros.to_homogeneous().unwrap(), base);
    }

    #[test]
    fn to_homogeneous_rejects_bound_touching_data() {
        let i = inst(array![[1., 1.], [1., 1.]], array![2., 2.], array![2., 2.])
            .with_lower_bounds(array![[1., 0.], [0., 0.]])
            .unwrap();
        let err = i.to_homogeneous().unwrap_err();
        assert!(matches!(err, Error::LowerBound(_)));
        assert!(err.to_string().contains("a[0,0]"), "{err}");
    }

    #[test]
    fn to_homogeneous_rejects_row_budget() {
        let i = inst(array![[2., 2.], [1., 1.]], array![3., 2.], array![2.5, 2.5])
            .with_lower_bounds(array![[1.5, 1.5], [0., 0.]])
            .unwrap();
        let err = i.to_homogeneous().unwrap_err();
        assert!(err.to_string().contains("p[0]"), "{err}");
    }

    #[test]
    fn from_homogeneous_adds_bounds() {
        let x = array![[1., 1.], [1., 1.]];
        let d = array![[1., 0.], [0., 1.]];
        assert_eq!(from_homogeneous(&x, &d).unwrap(), array![[2., 1.], [1., 2.]]);
        assert_eq!(from_homogeneous(&x, &Array2::zeros((2, 2))).unwrap(), x);
        assert!(from_homogeneous(&x, &Array2::zeros((2, 3))).is_err());
    }
}
