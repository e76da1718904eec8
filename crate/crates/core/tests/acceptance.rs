//! Acceptance suite: the eleven release criteria, run in order in a single
//! test so the timing criterion does not compete with the others for CPU.
//! Each criterion writes one `PASS`/`FAIL` line to stderr (bypassing the test
//! harness capture); the test fails if any criterion fails, except that the
//! 4-thread speedup is only enforced on machines with at least 4 CPUs.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use qtp_core::diagnostics::epsilon_p_exact;
use qtp_core::oracle::{exact_solve, OracleConfig};
use qtp_core::{
    alpha, apriori_iterations, col_step, distance_bound, epsilon_p_hat, generate, j_upper_bound,
    lyapunov_v, majorant_check, objective_j, r_function, relaxed_solution, row_step, solve,
    subset_ratio_g, ConvergenceReport, GeneratorConfig, ProblemInstance, SolveConfig, Variant,
    VariantChoice, WarmStart,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    /// The machine cannot exercise the criterion; a failure is reported but
    /// does not fail the suite.
    unmeasurable: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        unmeasurable: false,
        detail: detail.into(),
    }
}

fn report(id: u32, name: &str, started: Instant, o: &Outcome) {
    let line = format!(
        "criterion {id:>2} {name:<28} {}{} ({:.1}s) {}",
        if o.pass { "PASS" } else { "FAIL" },
        if !o.pass && o.unmeasurable { " [not enforced: fewer than 4 CPUs]" } else { "" },
        started.elapsed().as_secs_f64(),
        o.detail
    );
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn config(n: usize, m: usize, zero_fraction: f64, turbulence: f64, v0_rel: f64, seed: u64) -> GeneratorConfig {
    let s = (n * m) as f64;
    GeneratorConfig {
        n,
        m,
        zero_fraction,
        turbulence,
        target_v0: v0_rel * s,
        total_s: s,
        seed,
    }
}

/// Every iterate `X^(0), X^(1), ...` of the given variant from `start`,
/// stopping at the first iteration boundary with `V <= tol_rel * V(start)`.
fn iterates(inst: &ProblemInstance, start: &Array2<f64>, variant: Variant, tol_rel: f64, max_iter: usize) -> Vec<Array2<f64>> {
    let (p, q) = (inst.p(), inst.q());
    let v0 = lyapunov_v(start, p, q);
    let mut out = vec![start.clone()];
    for _ in 0..max_iter {
        if lyapunov_v(out.last().unwrap(), p, q) <= tol_rel * v0 {
            break;
        }
        for k in 0..2 {
            let x = out.last().unwrap();
            let rows_now = (variant == Variant::RowFirst) == (k == 0);
            let next = if rows_now { row_step(x, p) } else { col_step(x, q) }.unwrap();
            out.push(next);
        }
    }
    out
}

fn iterations_to(inst: &ProblemInstance, tol_rel: f64, warm_start: WarmStart) -> (usize, Variant, bool, Array2<f64>) {
    let r = solve(
        inst,
        &SolveConfig {
            tol_rel,
            max_steps: 20_000,
            warm_start,
            ..SolveConfig::default()
        },
    )
    .unwrap();
    (r.iterations(), r.variant_used, r.converged, r.x_final)
}

/// Small instances satisfying the starting-point criterion for the row-first
/// variant, with the exact contraction constant.
fn filtered_instances(count: usize) -> Vec<(ProblemInstance, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut out = Vec::new();
    for seed in 0..20_000u64 {
        if out.len() == count {
            break;
        }
        let n = rng.random_range(2..=8);
        let m = rng.random_range(2..=24 - n);
        let zf = if n >= 3 && rng.random_bool(0.5) { 0.1 } else { 0.0 };
        let kappa = rng.random_range(0.002..0.05);
        let cfg = GeneratorConfig {
            target_v0: kappa * (n * m) as f64 / n as f64,
            ..config(n, m, zf, rng.random_range(1.0..5.0), 0.0, 1000 + seed)
        };
        let Ok(inst) = generate(&cfg) else { continue };
        let rep = ConvergenceReport::compute(inst.a(), inst.p(), inst.q(), Variant::RowFirst, 1e-8);
        if rep.eps_p_exact.is_none() || !rep.criterion_ok {
            continue;
        }
        if let Some(a) = rep.alpha {
            out.push((inst, a));
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let sizes = [(60, 102), (300, 510), (600, 1020), (3000, 5100)];
    let mut counts = Vec::new();
    for (k, &(n, m)) in sizes.iter().enumerate() {
        let inst = generate(&config(n, m, 0.07, 10.0, 0.1, 11 + k as u64)).unwrap();
        let (it, _, conv, _) = iterations_to(&inst, 1e-8, WarmStart::PlainA);
        if !conv {
            return outcome(false, format!("{n}x{m} did not converge"));
        }
        counts.push(it);
    }
    let pass = counts[3] <= 2 * counts[0];
    outcome(pass, format!("iterations per size {counts:?}; largest <= 2 x smallest"))
}

fn criterion_2() -> Outcome {
    let mut med = Vec::new();
    for zf in [0.07, 0.25] {
        let its: Vec<f64> = (0..20)
            .map(|seed| {
                let inst = generate(&config(300, 510, zf, 10.0, 0.1, 200 + seed)).unwrap();
                iterations_to(&inst, 1e-8, WarmStart::PlainA).0 as f64
            })
            .collect();
        med.push(median(its));
    }
    outcome(
        med[1] >= med[0],
        format!("median iterations: {} at 7% zeros, {} at 25% zeros", med[0], med[1]),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut lower_checked, mut upper_checked) = (0usize, 0usize);
    let mut worst_lower = f64::NEG_INFINITY;
    let mut worst_upper = f64::NEG_INFINITY;
    let mut made = 0;
    let mut seed = 0u64;
    while made < 50 {
        seed += 1;
        let n = rng.random_range(3..=15);
        let m = rng.random_range(3..=(600 / n).min(40));
        let zf = [0.0, 0.07, 0.2][rng.random_range(0..3)];
        let Ok(inst) = generate(&config(n, m, zf, 10.0, rng.random_range(0.02..0.3), 300 + seed)) else {
            continue;
        };
        let Ok(sol) = exact_solve(&inst, &OracleConfig::default()) else {
            return outcome(false, format!("oracle failed on instance seed {seed}"));
        };
        made += 1;
        let a = inst.a();
        let j_star = objective_j(&sol.x_star, a);
        let j_hat = objective_j(&relaxed_solution(&inst), a);
        worst_lower = worst_lower.max((j_hat - j_star) / j_star);
        lower_checked += 1;

        let variant = qtp_core::choose_variant(&inst);
        let xs = iterates(&inst, a, variant, 1e-12, 5000);
        let v0 = lyapunov_v(a, inst.p(), inst.q());
        for (s, x) in xs.iter().enumerate() {
            // Only (near-)feasible iterates are comparable with the minimum
            // over the feasible set.
            if s % 2 == 0 && lyapunov_v(x, inst.p(), inst.q()) <= 1e-6 * v0 {
                worst_upper = worst_upper.max((j_star - objective_j(x, a)) / j_star);
                upper_checked += 1;
            }
        }
    }
    let pass = worst_lower <= 1e-9 && worst_upper <= 1e-9 && upper_checked > 0;
    outcome(
        pass,
        format!(
            "{lower_checked} instances; max (J^ - J*)/J* = {worst_lower:.2e}; {upper_checked} near-feasible iterates, max (J* - J(X))/J* = {worst_upper:.2e}"
        ),
    )
}

fn criterion_4_5_6(set: &[(ProblemInstance, f64)]) -> (Outcome, Outcome, Outcome) {
    if set.len() < 50 {
        let o = || outcome(false, format!("only {} instances pass the starting criterion", set.len()));
        return (o(), o(), o());
    }
    let (mut maj_fail, mut jup_fail, mut dist_fail) = (0, 0, 0);
    let (mut jup_ratio, mut dist_ratio) = (0.0_f64, 0.0_f64);
    let mut oracle_fail = 0;
    let mut max_excess = f64::NEG_INFINITY;
    let oracle = OracleConfig::default();
    for (inst, alpha) in set {
        let a = inst.a();
        let (p, q) = (inst.p(), inst.q());
        let v_a = lyapunov_v(a, p, q);
        let xs = iterates(inst, a, Variant::RowFirst, 1e-13, 5000);
        let even: Vec<&Array2<f64>> = xs.iter().step_by(2).collect();
        let v_iter: Vec<f64> = even.iter().map(|x| lyapunov_v(x, p, q)).collect();
        if !majorant_check(&v_iter, v_a, *alpha) {
            maj_fail += 1;
        }
        for (t, x) in even.iter().enumerate() {
            let bound = j_upper_bound(v_a, *alpha, t as u64).unwrap();
            let j = objective_j(x, a);
            if j > bound * (1.0 + 1e-12) {
                jup_fail += 1;
            } else if bound > 0.0 {
                jup_ratio = jup_ratio.max(j / bound);
            }
        }
        let Ok(sol) = exact_solve(inst, &oracle) else {
            oracle_fail += 1;
            continue;
        };
        let j_star = objective_j(&sol.x_star, a);
        // The bound is attained in the limit when no inequality is active,
        // so the comparison must absorb the oracle's own error in X*.
        let slack = 10.0 * (a.len() as f64).sqrt() * oracle.tol;
        for (t, x) in even.iter().enumerate() {
            let delta = objective_j(x, a) / j_star - 1.0;
            let dist = objective_j(x, &sol.x_star);
            match distance_bound(j_star, delta, v_a, *alpha, t as u64) {
                Ok(b) => {
                    max_excess = max_excess.max(dist - b);
                    if dist <= b + slack {
                        dist_ratio = dist_ratio.max(dist / b.max(1e-300));
                    } else {
                        dist_fail += 1;
                    }
                }
                Err(_) => dist_fail += 1,
            }
        }
    }
    (
        outcome(maj_fail == 0, format!("{} instances, {maj_fail} majorant violations", set.len())),
        outcome(
            jup_fail == 0,
            format!("{jup_fail} violations; max J(X^(2t)) / bound = {jup_ratio:.3e}"),
        ),
        outcome(
            dist_fail == 0 && oracle_fail == 0,
            format!(
                "{dist_fail} violations, {oracle_fail} oracle failures; max distance / bound = {dist_ratio:.6}, max distance - bound = {max_excess:.2e}"
            ),
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut ratios = Vec::new();
    for seed in 0..30 {
        let inst = generate(&config(60, 102, 0.07, 1000.0, 0.1, 700 + seed)).unwrap();
        let (_, _, c1, plain) = iterations_to(&inst, 1e-10, WarmStart::PlainA);
        let (_, _, c2, combined) = iterations_to(&inst, 1e-10, WarmStart::CombinedAnalytic);
        if !(c1 && c2) {
            return outcome(false, format!("seed {seed} did not converge"));
        }
        let d_plain = qtp_core::delta_j(&plain, &inst).unwrap();
        let d_comb = qtp_core::delta_j(&combined, &inst).unwrap();
        ratios.push(d_plain / d_comb);
    }
    let med = median(ratios.clone());
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(med >= 1.5, format!("median dJ(plain)/dJ(combined) = {med:.3} (min {lo:.3}) over 30 instances, turbulence 1000"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut violations = 0;
    let mut checked = 0;
    while checked < 200 {
        let n = rng.random_range(2..=6);
        let m = rng.random_range(2..=6);
        let mut x = Array2::from_shape_fn((n, m), |_| rng.random_range(0.01..10.0));
        // Up to (n - 1) / 2 zeros per column keeps a strict nonzero majority.
        for mut col in x.axis_iter_mut(Axis(1)) {
            let z = rng.random_range(0..=(n - 1) / 2);
            for _ in 0..z {
                col[rng.random_range(0..n)] = 0.0;
            }
        }
        if x.sum_axis(Axis(1)).iter().any(|&r| r == 0.0) {
            continue;
        }
        let hat = epsilon_p_hat(&x).unwrap();
        let exact = epsilon_p_exact(&x).unwrap();
        if hat > exact * (1.0 + 1e-12) + 1e-15 {
            violations += 1;
        }
        checked += 1;
    }
    outcome(violations == 0, format!("{checked} matrices, {violations} violations of eps_hat <= eps"))
}

fn subsets(k: usize) -> Vec<Vec<usize>> {
    (1..1usize << k)
        .map(|mask| (0..k).filter(|b| mask >> b & 1 == 1).collect())
        .collect()
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0_f64;
    let mut pairs = 0;
    for trial in 0..100 {
        let m = if trial % 2 == 0 { 3 } else { 4 };
        let x = Array2::from_shape_fn((3, m), |_| rng.random_range(0.01..10.0));
        let q = Array1::from_shape_fn(m, |_| rng.random_range(0.5..5.0));
        let y = col_step(&x, &q).unwrap();
        for i_set in subsets(3) {
            for j_set in subsets(m) {
                let before = subset_ratio_g(&x, &i_set, &j_set).unwrap();
                let after = subset_ratio_g(&y, &i_set, &j_set).unwrap();
                worst = worst.max((before - after).abs());
                pairs += 1;
            }
        }
    }
    outcome(worst <= 1e-12, format!("{pairs} subset pairs, max |G before - G after| = {worst:.2e}"))
}

fn criterion_10() -> Outcome {
    let inst = generate(&config(1000, 1700, 0.07, 10.0, 0.1, 1010)).unwrap();
    let run = |threads: usize| {
        solve(
            &inst,
            &SolveConfig {
                tol_rel: 1e-8,
                threads,
                deterministic: false,
                variant: VariantChoice::RowFirst,
                ..SolveConfig::default()
            },
        )
        .unwrap()
    };
    let single = run(1);
    let multi = run(4);
    let t1 = single.wall_time.as_secs_f64();
    let t4 = multi.wall_time.as_secs_f64();
    let speedup = t1 / t4;
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    let budget_ok = single.converged && t1 < 60.0;
    let mut o = outcome(
        budget_ok && speedup >= 2.0,
        format!(
            "1 thread {t1:.2}s ({} iterations), 4 threads {t4:.2}s, speedup {speedup:.2}x; {cpus} logical CPU(s) available",
            single.iterations()
        ),
    );
    o.unmeasurable = budget_ok && cpus < 4;
    o
}

fn criterion_11() -> Outcome {
    let r = r_function(0.1, 0.5).unwrap();
    let a = alpha(1.0, 1.0, 0.1).unwrap();
    let t = apriori_iterations(1.0, 0.16066, 1e-6).unwrap();
    let pass = (r - 2.98980).abs() <= 1e-5 && (a - 0.16066).abs() <= 1e-5 && t == 79;
    outcome(pass, format!("r(0.1, 0.5) = {r:.6}, alpha(1, 1, 0.1) = {a:.6}, a priori iterations = {t}"))
}

#[test]
fn acceptance_suite() {
    let _ = writeln!(std::io::stderr());
    let mut failed = Vec::new();
    let mut record = |id: u32, name: &str, started: Instant, o: Outcome| {
        report(id, name, started, &o);
        if !o.pass && !o.unmeasurable {
            failed.push(format!("{id} ({name}): {}", o.detail));
        }
    };

    let t = Instant::now();
    record(1, "dimension-independent", t, criterion_1());
    let t = Instant::now();
    record(2, "zeros degrade convergence", t, criterion_2());
    let t = Instant::now();
    record(3, "sandwich bound", t, criterion_3());
    let t = Instant::now();
    let set = filtered_instances(50);
    let (c4, c5, c6) = criterion_4_5_6(&set);
    record(4, "geometric majorant", t, c4);
    record(5, "objective upper bound", t, c5);
    record(6, "distance bound", t, c6);
    let t = Instant::now();
    record(7, "combined warm start", t, criterion_7());
    let t = Instant::now();
    record(8, "eps hat lower bound", t, criterion_8());
    let t = Instant::now();
    record(9, "G invariance", t, criterion_9());
    let t = Instant::now();
    record(10, "throughput", t, criterion_10());
    let t = Instant::now();
    record(11, "exact values", t, criterion_11());

    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
