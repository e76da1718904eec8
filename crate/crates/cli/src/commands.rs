use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use qtp_core::analytic::warm_start_projection;
use qtp_core::io::{read_matrix, read_vector, write_matrix, write_vector, Format};
use qtp_core::oracle::{exact_solve, OracleConfig};
use qtp_core::{
    choose_variant, col_step, distance_bound, generate as gen_instance, j_upper_bound, lyapunov_v,
    majorant_check, objective_j, relaxed_solution, row_step, solve as solve_instance,
    ConvergenceReport, GeneratorConfig, ProblemInstance, SolveConfig, Variant, VariantChoice,
    WarmStart,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::report::{RunReport, RunRow};
use crate::{
    AnalyzeArgs, CliError, ConfigFile, ExperimentArgs, GenerateArgs, GlobalArgs, InstanceArgs,
    OracleArgs, SolveArgs, VerifyArgs, EXIT_NOT_CONVERGED, EXIT_OK,
};

pub(crate) struct Context {
    pub cfg: ConfigFile,
    pub threads: usize,
    pub deterministic: bool,
    pub seed: u64,
    pub format: Format,
}

impl Context {
    pub fn new(g: &GlobalArgs, cfg: ConfigFile) -> Result<Self, CliError> {
        Ok(Context {
            threads: cfg.value(g.threads, "threads", 1)?,
            deterministic: cfg.value(g.deterministic, "deterministic", true)?,
            seed: cfg.value(g.seed, "seed", 0)?,
            format: cfg.value(g.format, "format", Format::Csv)?,
            cfg,
        })
    }

    fn oracle_config(&self, tol: Option<f64>, max_iters: Option<usize>, size_limit: Option<usize>) -> Result<OracleConfig, CliError> {
        let d = OracleConfig::default();
        Ok(OracleConfig {
            tol: self.cfg.value(tol, "oracle_tol", d.tol)?,
            max_iters: self.cfg.value(max_iters, "oracle_max_iters", d.max_iters)?,
            size_limit: self.cfg.value(size_limit, "oracle_size_limit", d.size_limit)?,
            ..d
        })
    }

    fn extension(&self) -> &'static str {
        match self.format {
            Format::Csv => "csv",
            Format::Bin => "bin",
        }
    }
}

fn input_err(path: &Path, e: qtp_core::Error) -> CliError {
    match e {
        qtp_core::Error::Io(io) => CliError::Input(format!("{}: {io}", path.display())),
        other => CliError::Input(other.to_string()),
    }
}

fn load_instance(args: &InstanceArgs) -> Result<ProblemInstance, CliError> {
    let a = read_matrix(&args.a).map_err(|e| input_err(&args.a, e))?;
    let p = read_vector(&args.p).map_err(|e| input_err(&args.p, e))?;
    let q = read_vector(&args.q).map_err(|e| input_err(&args.q, e))?;
    let mut inst = ProblemInstance::new(a, p, q).map_err(|e| CliError::Input(e.to_string()))?;
    if let Some(path) = &args.d {
        let d = read_matrix(path).map_err(|e| input_err(path, e))?;
        inst = inst.with_lower_bounds(d).map_err(|e| CliError::Input(e.to_string()))?;
    }
    let report = inst.validate();
    if !report.is_accepted() {
        return Err(CliError::Input(format!("instance rejected:\n{report}")));
    }
    Ok(inst)
}

pub(crate) fn solve(ctx: &Context, args: SolveArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let inst = load_instance(&args.instance)?;
    let d = SolveConfig::default();
    let config = SolveConfig {
        tol_rel: ctx.cfg.value(args.tol_rel, "tol_rel", d.tol_rel)?,
        tol_abs: ctx.cfg.value(args.tol_abs, "tol_abs", d.tol_abs)?,
        max_steps: ctx.cfg.value(args.max_steps, "max_steps", d.max_steps)?,
        variant: ctx.cfg.value(args.variant, "variant", d.variant)?,
        warm_start: ctx.cfg.value(args.warm_start, "warm_start", d.warm_start)?,
        threads: ctx.threads,
        deterministic: ctx.deterministic,
    };
    config.validate().map_err(|e| CliError::Input(e.to_string()))?;
    let result = solve_instance(&inst, &config)?;
    let x0 = match config.warm_start {
        WarmStart::PlainA => inst.a().clone(),
        WarmStart::CombinedAnalytic => warm_start_projection(&inst)?,
    };
    let report = RunReport {
        rows: vec![RunRow::new(&inst, &x0, &result, config.warm_start, None)],
    };
    write!(out, "{}", report.to_table())?;
    if let Some(path) = &args.out {
        write_matrix(path, &result.x_final, ctx.format)?;
    }
    if let Some(path) = &args.report {
        std::fs::write(path, report.to_csv())?;
    }
    if result.converged {
        Ok(EXIT_OK)
    } else {
        writeln!(
            out,
            "not converged: V = {:.3e} after {} steps",
            result.v_final, result.steps_taken
        )?;
        Ok(EXIT_NOT_CONVERGED)
    }
}

pub(crate) fn generate(ctx: &Context, args: GenerateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let d = GeneratorConfig::default();
    let n = ctx.cfg.value(args.n, "n", d.n)?;
    let m = ctx.cfg.value(args.m, "m", d.m)?;
    let total_s = ctx.cfg.value(args.total_s, "total_s", (n * m) as f64)?;
    let v0_rel = ctx.cfg.value(args.v0_rel, "v0_rel", 0.1)?;
    let gc = GeneratorConfig {
        n,
        m,
        zero_fraction: ctx.cfg.value(args.zero_fraction, "zero_fraction", d.zero_fraction)?,
        turbulence: ctx.cfg.value(args.turbulence, "turbulence", d.turbulence)?,
        target_v0: ctx.cfg.value(args.target_v0, "target_v0", v0_rel * total_s)?,
        total_s,
        seed: ctx.seed,
    };
    let inst = gen_instance(&gc)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let ext = ctx.extension();
    let path = |name: &str| args.out_dir.join(format!("{name}.{ext}"));
    write_matrix(path("a"), inst.a(), ctx.format)?;
    write_vector(path("p"), inst.p(), ctx.format)?;
    write_vector(path("q"), inst.q(), ctx.format)?;
    let zeros = inst.a().iter().filter(|&&v| v == 0.0).count();
    writeln!(
        out,
        "wrote {}x{} instance to {}: {zeros} zeros, V(A) = {:.6e}, s = {:.6e}, seed {}",
        gc.n,
        gc.m,
        args.out_dir.display(),
        lyapunov_v(inst.a(), inst.p(), inst.q()),
        inst.total(),
        gc.seed
    )?;
    Ok(EXIT_OK)
}

fn parse_list<T, F>(s: &str, what: &str, f: F) -> Result<Vec<T>, CliError>
where
    F: Fn(&str) -> Option<T>,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| f(t).ok_or_else(|| CliError::Input(format!("bad {what} entry {t:?}"))))
        .collect()
}

pub(crate) fn experiment(ctx: &Context, args: ExperimentArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let dims = parse_list(&args.dims, "dimension", |t| {
        let (n, m) = t.split_once(['x', 'X'])?;
        Some((n.trim().parse::<usize>().ok()?, m.trim().parse::<usize>().ok()?))
    })?;
    let zfs = parse_list(&args.zero_fractions, "zero fraction", |t| t.parse::<f64>().ok())?;
    let variants = parse_list(&args.variants, "variant", |t| match t.parse::<VariantChoice>().ok()? {
        VariantChoice::Auto => None,
        v => Some(v),
    })?;
    let starts = parse_list(&args.warm_starts, "warm start", |t| t.parse::<WarmStart>().ok())?;
    let turbulence = ctx.cfg.value(args.turbulence, "turbulence", 10.0)?;
    let v0_rel = ctx.cfg.value(args.v0_rel, "v0_rel", 0.1)?;
    let d = SolveConfig::default();
    let tol_rel = ctx.cfg.value(args.tol_rel, "tol_rel", d.tol_rel)?;
    let max_steps = ctx.cfg.value(args.max_steps, "max_steps", d.max_steps)?;
    let jobs = ctx.cfg.value(args.jobs, "jobs", 1usize)?.max(1);

    let cells: Vec<(usize, (usize, usize), f64)> = dims
        .iter()
        .flat_map(|&nm| zfs.iter().map(move |&zf| (nm, zf)))
        .enumerate()
        .map(|(k, (nm, zf))| (k, nm, zf))
        .collect();
    let run_cell = |&(k, (n, m), zf): &(usize, (usize, usize), f64)| -> Result<Vec<RunRow>, CliError> {
        let s = (n * m) as f64;
        let inst = gen_instance(&GeneratorConfig {
            n,
            m,
            zero_fraction: zf,
            turbulence,
            target_v0: v0_rel * s,
            total_s: s,
            seed: ctx.seed.wrapping_add(k as u64),
        })?;
        let mut rows = Vec::new();
        for &warm_start in &starts {
            let x0 = match warm_start {
                WarmStart::PlainA => inst.a().clone(),
                WarmStart::CombinedAnalytic => warm_start_projection(&inst)?,
            };
            for &variant in &variants {
                let r = solve_instance(
                    &inst,
                    &SolveConfig {
                        tol_rel,
                        max_steps,
                        variant,
                        warm_start,
                        threads: ctx.threads,
                        deterministic: ctx.deterministic,
                        ..SolveConfig::default()
                    },
                )?;
                rows.push(RunRow::new(&inst, &x0, &r, warm_start, Some(turbulence)));
            }
        }
        Ok(rows)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let results: Vec<Result<Vec<RunRow>, CliError>> = pool.install(|| cells.par_iter().map(run_cell).collect());
    let mut report = RunReport::default();
    for r in results {
        report.rows.extend(r?);
    }
    write!(out, "{}", report.to_table())?;
    if let Some(path) = &args.out {
        std::fs::write(path, report.to_csv())?;
    }
    Ok(EXIT_OK)
}

/// Every iterate from `A` until `V <= tol_rel V(A)` at an iteration boundary.
fn iterates(inst: &ProblemInstance, variant: Variant, tol_rel: f64, max_iter: usize) -> Result<Vec<Array2<f64>>, CliError> {
    let (p, q) = (inst.p(), inst.q());
    let v0 = lyapunov_v(inst.a(), p, q);
    let mut xs = vec![inst.a().clone()];
    for _ in 0..max_iter {
        if lyapunov_v(xs.last().unwrap(), p, q) <= tol_rel * v0 {
            break;
        }
        for k in 0..2 {
            let x = xs.last().unwrap();
            let rows_now = (variant == Variant::RowFirst) == (k == 0);
            let next = if rows_now { row_step(x, p)? } else { col_step(x, q)? };
            xs.push(next);
        }
    }
    Ok(xs)
}

#[derive(Default)]
struct Tally {
    checked: usize,
    violations: usize,
}

impl Tally {
    fn check(&mut self, ok: bool) {
        self.checked += 1;
        if !ok {
            self.violations += 1;
        }
    }
}

pub(crate) fn verify(ctx: &Context, args: VerifyArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let oc = ctx.oracle_config(args.oracle_tol, args.oracle_max_iters, args.oracle_size_limit)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut feas = Tally::default();
    let mut sandwich = Tally::default();
    let mut majorant = Tally::default();
    let mut jup = Tally::default();
    let mut dist = Tally::default();
    let (mut skipped, mut with_criterion, mut made) = (0, 0, 0);

    for k in 0..args.count {
        let n = args.n.unwrap_or_else(|| rng.random_range(3..=12));
        let m = args.m.unwrap_or_else(|| rng.random_range(3..=(args.max_entries / n).clamp(3, 40)));
        if n * m > oc.size_limit {
            writeln!(out, "skip: {n}x{m} exceeds the oracle size limit of {} entries", oc.size_limit)?;
            skipped += 1;
            continue;
        }
        let s = (n * m) as f64;
        // Small V(A) relative to the row sums makes the starting criterion
        // hold for part of the sample.
        let kappa = 10f64.powf(rng.random_range(-2.7..-0.5));
        let gc = GeneratorConfig {
            n,
            m,
            zero_fraction: if n >= 3 && rng.random_bool(0.5) { 0.1 } else { 0.0 },
            turbulence: rng.random_range(1.0..10.0),
            target_v0: kappa * s / n as f64,
            total_s: s,
            seed: ctx.seed.wrapping_add(k as u64),
        };
        let inst = gen_instance(&gc)?;
        made += 1;
        let a = inst.a();
        let (p, q) = (inst.p(), inst.q());
        let mut sol = exact_solve(&inst, &oc)?;
        if args.inject_fault {
            let (i, j) = (0..n * m)
                .map(|e| (e / m, e % m))
                .find(|&(i, j)| a[[i, j]] != 0.0)
                .expect("instance has a nonzero");
            sol.x_star[[i, j]] += 1e-3 * s / (n * m) as f64;
        }
        let x_star = &sol.x_star;
        let v_star = lyapunov_v(x_star, p, q);
        feas.check(
            v_star <= (n + m) as f64 * oc.tol && inst.zero_pattern().iter().all(|&(i, j)| x_star[[i, j]] == 0.0),
        );

        let j_star = objective_j(x_star, a);
        let j_hat = objective_j(&relaxed_solution(&inst), a);
        sandwich.check(j_hat <= j_star * (1.0 + 1e-9));
        let v_a = lyapunov_v(a, p, q);
        let variant = choose_variant(&inst);
        let xs = iterates(&inst, variant, 1e-12, 5000)?;
        for x in xs.iter().step_by(2) {
            if lyapunov_v(x, p, q) <= 1e-6 * v_a {
                sandwich.check(j_star <= objective_j(x, a) * (1.0 + 1e-9));
            }
        }

        let rep = ConvergenceReport::compute(a, p, q, Variant::RowFirst, 1e-8);
        let Some(alpha) = rep.alpha.filter(|_| rep.criterion_ok) else {
            continue;
        };
        with_criterion += 1;
        let xs = if variant == Variant::RowFirst { xs } else { iterates(&inst, Variant::RowFirst, 1e-12, 5000)? };
        let even: Vec<&Array2<f64>> = xs.iter().step_by(2).collect();
        let v_iter: Vec<f64> = even.iter().map(|x| lyapunov_v(x, p, q)).collect();
        majorant.check(majorant_check(&v_iter, v_a, alpha));
        let slack = 10.0 * ((n * m) as f64).sqrt() * oc.tol;
        for (t, x) in even.iter().enumerate() {
            let j = objective_j(x, a);
            jup.check(j_upper_bound(v_a, alpha, t as u64).is_ok_and(|b| j <= b * (1.0 + 1e-12)));
            let d = objective_j(x, x_star);
            let bound = distance_bound(j_star, j / j_star - 1.0, v_a, alpha, t as u64);
            dist.check(bound.is_ok_and(|b| d <= b + slack));
        }
    }

    writeln!(
        out,
        "{made} instances checked, {skipped} skipped, {with_criterion} satisfy the starting criterion"
    )?;
    let suites = [
        ("oracle feasibility", &feas),
        ("sandwich", &sandwich),
        ("geometric majorant", &majorant),
        ("objective upper bound", &jup),
        ("distance bound", &dist),
    ];
    let mut failed = Vec::new();
    for (name, t) in suites {
        let verdict = if t.violations == 0 { "ok" } else { "FAILED" };
        writeln!(out, "{name:<22} {verdict:<6} {} checks, {} violations", t.checked, t.violations)?;
        if t.violations > 0 {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}

pub(crate) fn oracle(ctx: &Context, args: OracleArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let inst = load_instance(&args.instance)?;
    let oc = ctx.oracle_config(args.oracle_tol, args.oracle_max_iters, args.oracle_size_limit)?;
    let sol = exact_solve(&inst, &oc)?;
    let a = inst.a();
    writeln!(out, "iterations        {}", sol.iterations)?;
    writeln!(out, "J(X*)             {:.12e}", objective_j(&sol.x_star, a))?;
    writeln!(out, "J(X^)             {:.12e}", objective_j(&relaxed_solution(&inst), a))?;
    writeln!(out, "stationarity      {:.3e}", sol.kkt_stationarity)?;
    writeln!(out, "feasibility       {:.3e}", sol.kkt_feasibility)?;
    writeln!(out, "complementarity   {:.3e}", sol.kkt_complementarity)?;
    if let Some(path) = &args.out {
        write_matrix(path, &sol.x_star, ctx.format)?;
    }
    Ok(EXIT_OK)
}

pub(crate) fn analyze(ctx: &Context, args: AnalyzeArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let inst = load_instance(&args.instance)?.to_homogeneous()?;
    let choice = ctx.cfg.value(args.variant, "variant", VariantChoice::Auto)?;
    let tol_rel = ctx.cfg.value(args.tol_rel, "tol_rel", SolveConfig::default().tol_rel)?;
    let variant = match choice {
        VariantChoice::Auto => choose_variant(&inst),
        VariantChoice::RowFirst => Variant::RowFirst,
        VariantChoice::ColFirst => Variant::ColFirst,
    };
    let r = ConvergenceReport::compute(inst.a(), inst.p(), inst.q(), variant, tol_rel);
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6e}"));
    writeln!(out, "size              {}x{}", inst.nrows(), inst.ncols())?;
    writeln!(out, "variant           {}", r.variant)?;
    writeln!(out, "V(A)              {:.6e}", r.v0)?;
    writeln!(out, "eps_p hat         {}", opt(r.eps_p_hat))?;
    writeln!(out, "eps_q hat         {}", opt(r.eps_q_hat))?;
    writeln!(out, "eps_p exact       {}", opt(r.eps_p_exact))?;
    writeln!(out, "eps_q exact       {}", opt(r.eps_q_exact))?;
    writeln!(out, "epsilon1          {:.6e}", r.epsilon1)?;
    writeln!(out, "epsilon2          {:.6e}", r.epsilon2)?;
    match &r.criterion {
        Some(c) => writeln!(
            out,
            "criterion         {} (lhs {:.6e}, rhs {:.6e}; leading order {})",
            if c.satisfied { "holds" } else { "fails" },
            c.lhs,
            c.rhs,
            if c.simplified_satisfied { "holds" } else { "fails" }
        )?,
        None => writeln!(out, "criterion         outside its domain")?,
    }
    writeln!(out, "alpha             {}", opt(r.alpha))?;
    writeln!(
        out,
        "predicted iters   {}",
        r.predicted_iterations.map_or_else(|| "n/a".to_string(), |t| t.to_string())
    )?;
    writeln!(out, "Z_p               {}", opt(r.z_p))?;
    writeln!(out, "Z_q               {}", opt(r.z_q))?;
    writeln!(out, "J(X^)             {:.6e}", objective_j(&relaxed_solution(&inst), inst.a()))?;
    Ok(EXIT_OK)
}
