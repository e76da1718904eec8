//! Seeded random instances with a controlled zero fraction, magnitude spread
//! ("turbulence") and initial Lyapunov value.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::ProblemInstance;
use crate::{Error, Result};

const PLACEMENT_RESTARTS: usize = 20;
const BISECTION_STEPS: usize = 200;
/// Relative accuracy the bisection aims for; the contract is 1e-3.
const V0_REL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub n: usize,
    pub m: usize,
    /// In `[0, 0.5)`.
    pub zero_fraction: f64,
    /// Ratio of the largest to the smallest positive magnitude, `>= 1`.
    pub turbulence: f64,
    pub target_v0: f64,
    pub total_s: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n: 60,
            m: 102,
            zero_fraction: 0.07,
            turbulence: 10.0,
            target_v0: 0.1 * 6120.0,
            total_s: 6120.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    /// Number of structural zeros that will be placed.
    pub fn zero_count(&self) -> usize {
        (self.zero_fraction * (self.n * self.m) as f64).round() as usize
    }

    /// Rejects configurations that cannot be sampled.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Generator(msg));
        if self.n == 0 || self.m == 0 {
            return bad(format!("dimensions must be positive, got {}x{}", self.n, self.m));
        }
        if !(0.0..0.5).contains(&self.zero_fraction) {
            return bad(format!("zero_fraction must lie in [0, 0.5), got {}", self.zero_fraction));
        }
        if !(self.turbulence >= 1.0 && self.turbulence.is_finite()) {
            return bad(format!("turbulence must be finite and >= 1, got {}", self.turbulence));
        }
        if !(self.total_s > 0.0 && self.total_s.is_finite()) {
            return bad(format!("total_s must be positive, got {}", self.total_s));
        }
        if !(self.target_v0 > 0.0 && self.target_v0.is_finite()) {
            return bad(format!("target_v0 must be positive, got {}", self.target_v0));
        }
        if self.n == 1 && self.m == 1 {
            return bad("a 1x1 instance always has V(A) = 0".into());
        }
        // Perturbing sums by factors exp(+-amp) and renormalizing can move at
        // most the full mass out of each family.
        if self.target_v0 >= 4.0 * self.total_s {
            return bad(format!(
                "target_v0 {} unreachable; V(A) < 4 * total_s = {}",
                self.target_v0,
                4.0 * self.total_s
            ));
        }
        let z = self.zero_count();
        let col_cap = (self.n - 1) / 2;
        let row_cap = self.m - 1;
        if z > col_cap * self.m || z > row_cap * self.n {
            return bad(format!(
                "{z} zeros do not fit a {}x{} matrix with a strict nonzero majority in every column",
                self.n, self.m
            ));
        }
        Ok(())
    }
}

/// Builds an instance. Deterministic in `config`.
pub fn generate(config: &GeneratorConfig) -> Result<ProblemInstance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let zeros = place_zeros(config, &mut rng)?;

    let ln_t = config.turbulence.ln();
    let mut a = Array2::from_shape_fn((config.n, config.m), |(i, j)| {
        if zeros[[i, j]] {
            0.0
        } else {
            (ln_t * rng.random::<f64>()).exp()
        }
    });
    a *= config.total_s / a.sum();

    let rows = a.sum_axis(Axis(1));
    let cols = a.sum_axis(Axis(0));
    let gr: Array1<f64> = (0..config.n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let gc: Array1<f64> = (0..config.m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let marginals = |amp: f64| {
        (
            perturb(&rows, &gr, amp, config.total_s),
            perturb(&cols, &gc, amp, config.total_s),
        )
    };
    // V(A) depends on A only through its row and column sums.
    let v_at = |amp: f64| {
        let (p, q) = marginals(amp);
        l1_dist(&rows, &p) + l1_dist(&cols, &q)
    };

    let target = config.target_v0;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while v_at(hi) < target {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Generator(format!(
                "target_v0 {target} not reachable by perturbing the marginals"
            )));
        }
    }
    let mut amp = hi;
    for _ in 0..BISECTION_STEPS {
        let v = v_at(amp);
        if (v - target).abs() <= V0_REL_TOL * target {
            break;
        }
        if v < target {
            lo = amp;
        } else {
            hi = amp;
        }
        amp = 0.5 * (lo + hi);
    }
    let (p, q) = marginals(amp);
    ProblemInstance::new(a, p, q)
}

fn l1_dist(x: &Array1<f64>, y: &Array1<f64>) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

/// `base_k exp(amp g_k)`, renormalized to `total`.
fn perturb(base: &Array1<f64>, g: &Array1<f64>, amp: f64, total: f64) -> Array1<f64> {
    let mut v = base * &g.mapv(|x| (amp * x).exp());
    v *= total / v.sum();
    v
}

/// Uniform sequential placement conditional on the caps: each column keeps
/// more than half nonzeros and each row at least one.
fn place_zeros(config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<Array2<bool>> {
    let (n, m) = (config.n, config.m);
    let z = config.zero_count();
    let col_cap = (n - 1) / 2;
    let row_cap = m - 1;
    let budget = 100 * n * m + 1000;
    for _ in 0..PLACEMENT_RESTARTS {
        let mut mask = Array2::from_elem((n, m), false);
        let mut per_row = vec![0usize; n];
        let mut per_col = vec![0usize; m];
        let mut placed = 0;
        let mut attempts = 0;
        while placed < z && attempts < budget {
            attempts += 1;
            let k = rng.random_range(0..n * m);
            let (i, j) = (k / m, k % m);
            if mask[[i, j]] || per_col[j] >= col_cap || per_row[i] >= row_cap {
                continue;
            }
            mask[[i, j]] = true;
            per_row[i] += 1;
            per_col[j] += 1;
            placed += 1;
        }
        if placed == z {
            return Ok(mask);
        }
    }
    Err(Error::Generator(format!(
        "could not place {z} zeros in a {n}x{m} matrix under the column-majority cap"
    )))
}
