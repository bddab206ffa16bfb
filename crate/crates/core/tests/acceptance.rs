//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
//! criterion fails.
//!
//! Run with `cargo test -p tikreg --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use tikreg::bregman::bregman_distance;
use tikreg::experiments::{compare_rules, error_decomposition, log_spaced, sweep_point, AlphaStart, SweepGrid};
use tikreg::linops::LinearOperator;
use tikreg::problems::{
    add_noise, blur_problem, construct_source_solution, deconvolution_problem, noise_condition_epsilon, GridSpec,
    WSpec,
};
use tikreg::rng::SplitMix64;
use tikreg::rules::{hanke_raus, quasi_optimality, Rule};
use tikreg::vector::{dot, norm};
use tikreg::{Penalty, RegularizationPath, SolverOptions, TikhonovSolver};

// Pinned thresholds.
const C1_DELTAS: [f64; 3] = [1e-3, 2e-2, 1e-1];
const C1_N: usize = 128;
const C1_GRID_POINTS: usize = 40;
const C1_Q: f64 = 0.8;
const C1_SLACK: f64 = 1e-6;
const C1_BUDGET: Duration = Duration::from_secs(120);

const C2_SLACK: f64 = 1e-8;

const C3_SAMPLES: usize = 1000;
const C3_EXPONENTS: [f64; 3] = [1.2, 1.5, 2.0];
const C3_TOL: f64 = 1e-8;
const C3_BUDGET: Duration = Duration::from_secs(5);

const C4_ADJOINT_TOL: f64 = 1e-10;
const C4_SOLVER_TOL: f64 = 1e-6;

const C5_N: usize = 128;
const C5_DELTA_RANGE: (f64, f64) = (1e-4, 1e-1);
const C5_DELTA_COUNT: usize = 12;
const C5_RATIO: f64 = 5.0;
const C5_DECAY: f64 = 10.0;
const C5_BUDGET: Duration = Duration::from_secs(600);

const C6_REFERENCE_HR: f64 = 2.61e-3;
const C6_REFERENCE_QO: f64 = 3.02e-3;
const C6_ALPHA_RANGE: (f64, f64) = (1e-4, 1e-1);
const C6_ORACLE_FACTOR: f64 = 2.0;
const C6_BUDGET: Duration = Duration::from_secs(300);

const C7_MIN_EPSILON: f64 = 0.05;
const C7_GAP_FACTOR: f64 = 10.0;

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Outcome {
            pass,
            summary: summary.into(),
            details: Vec::new(),
        }
    }

    fn failed(err: impl std::fmt::Display) -> Self {
        Outcome::new(false, format!("error: {err}"))
    }
}

fn within_budget(start: Instant, budget: Duration, detail: &mut Vec<String>) -> bool {
    let took = start.elapsed();
    detail.push(format!("runtime {:.1} s (budget {} s)", took.as_secs_f64(), budget.as_secs()));
    took <= budget
}

/// Estimates on the deconvolution problem at three noise levels.
fn inequality_suite(paths: &mut Vec<(String, RegularizationPath)>) -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut total = 0;
    for &delta in &C1_DELTAS {
        let inst = match deconvolution_problem(C1_N, 1.2, &WSpec::default(), delta, SEED) {
            Ok(i) => i,
            Err(e) => return Outcome::failed(e),
        };
        let grid = GridSpec {
            alpha0: inst.operator_norm * inst.operator_norm,
            q: C1_Q,
            count: C1_GRID_POINTS,
        };
        let run = match error_decomposition(&inst, &grid, SolverOptions::default(), C1_SLACK) {
            Ok(r) => r,
            Err(e) => return Outcome::failed(e),
        };
        details.push(format!("delta={delta:e}: {} violations", run.violations.len()));
        details.extend(run.violations.iter().map(|v| format!("  {v}")));
        total += run.violations.len();
        paths.push((format!("deconvolution noisy delta={delta:e}"), run.path_noisy));
        paths.push((format!("deconvolution exact delta={delta:e}"), run.path_exact));
    }
    let fast = within_budget(start, C1_BUDGET, &mut details);
    let mut o = Outcome::new(total == 0 && fast, format!("{total} estimate violations over {} noise levels", C1_DELTAS.len()));
    o.details = details;
    o
}

/// Residual norms are nondecreasing in α and bounded by `‖y^δ‖`, the
/// residual of the penalty minimizer `0`.
fn residual_monotonicity(paths: &[(String, RegularizationPath)]) -> Outcome {
    let mut details = Vec::new();
    for (name, path) in paths {
        let bound = norm(&path.data) + C2_SLACK;
        // Grids descend in α, so residuals must not increase along the path.
        let res = path.residuals();
        let breaks = res.windows(2).filter(|w| w[1] > w[0] + C2_SLACK).count();
        let over = res.iter().filter(|&&r| r > bound).count();
        if breaks + over > 0 {
            details.push(format!("{name}: {breaks} monotonicity breaks, {over} residuals above bound"));
        }
    }
    let mut o = Outcome::new(details.is_empty(), format!("{} paths checked", paths.len()));
    o.details = details;
    o
}

/// `½(x − t)² + λ|x|^p − (½(b − t)² + λ|b|^p)` without forming either
/// objective, so that nearby points still compare accurately.
fn objective_difference(a: f64, b: f64, t: f64, lambda: f64, p: f64) -> f64 {
    let quad = 0.5 * (a - b) * (a + b - 2.0 * t);
    let (ma, mb) = (a.abs(), b.abs());
    let pow = if ma == 0.0 || mb == 0.0 || a.signum() != b.signum() {
        ma.powf(p) - mb.powf(p)
    } else {
        mb.powf(p) * (p * ((ma - mb) / mb).ln_1p()).exp_m1()
    };
    quad + lambda * pow
}

fn golden_section_prox(t: f64, lambda: f64, p: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = if t >= 0.0 { (0.0, t) } else { (t, 0.0) };
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    for _ in 0..200 {
        if hi - lo <= 1e-15 * (1.0 + t.abs()) {
            break;
        }
        if objective_difference(c, d, t, lambda, p) < 0.0 {
            hi = d;
        } else {
            lo = c;
        }
        c = hi - inv_phi * (hi - lo);
        d = lo + inv_phi * (hi - lo);
    }
    0.5 * (lo + hi)
}

fn prox_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = SplitMix64::new(SEED);
    let mut worst = 0.0_f64;
    for i in 0..C3_SAMPLES {
        let p = C3_EXPONENTS[i % C3_EXPONENTS.len()];
        let t = 10.0 * rng.next_uniform() - 5.0;
        let lambda = 10f64.powf(4.0 * rng.next_uniform() - 3.0);
        let penalty = Penalty::lp_power(p).expect("exponent in range");
        let got = penalty.prox_scalar(t, lambda);
        worst = worst.max((got - golden_section_prox(t, lambda, p)).abs());
    }
    let mut details = Vec::new();
    let fast = within_budget(start, C3_BUDGET, &mut details);
    let mut o = Outcome::new(
        worst <= C3_TOL && fast,
        format!("max |prox - oracle| = {worst:.2e} over {C3_SAMPLES} samples (tol {C3_TOL:e})"),
    );
    o.details = details;
    o
}

fn random_vec(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    rng.normals(n)
}

fn adjoint_defect(op: &LinearOperator, rng: &mut SplitMix64) -> f64 {
    let x = random_vec(rng, op.domain_dim());
    let y = random_vec(rng, op.range_dim());
    let ax = op.apply(&x).unwrap();
    let aty = op.apply_adjoint(&y).unwrap();
    (dot(&ax, &y) - dot(&x, &aty)).abs() / (norm(&ax) * norm(&y)).max(norm(&x) * norm(&aty))
}

fn adjoint_and_solver() -> Outcome {
    let mut rng = SplitMix64::new(SEED);
    let dense = LinearOperator::dense(5, 7, random_vec(&mut rng, 35)).unwrap();
    let ops: Vec<(&str, LinearOperator)> = vec![
        ("dense", dense),
        ("identity", LinearOperator::identity(9).unwrap()),
        ("diagonal", LinearOperator::diagonal(&random_vec(&mut rng, 6)).unwrap()),
        ("convolution", LinearOperator::convolution(random_vec(&mut rng, 16)).unwrap()),
        ("circular_convolution", LinearOperator::circular_convolution(64, 0.2).unwrap()),
        ("haar_synthesis", LinearOperator::haar_synthesis(64).unwrap()),
        ("blur", LinearOperator::blur(12, 3, 1.2).unwrap()),
        (
            "composition",
            LinearOperator::compose(
                LinearOperator::circular_convolution(32, 0.2).unwrap(),
                LinearOperator::haar_synthesis(32).unwrap(),
            )
            .unwrap(),
        ),
    ];
    let mut details = Vec::new();
    let mut worst_adjoint = 0.0_f64;
    for (name, op) in &ops {
        let d = (0..5).map(|_| adjoint_defect(op, &mut rng)).fold(0.0_f64, f64::max);
        if d > C4_ADJOINT_TOL {
            details.push(format!("{name}: adjoint defect {d:e}"));
        }
        worst_adjoint = worst_adjoint.max(d);
    }

    // (KᵀK + αηI)x = Kᵀy for dense K and R = (η/2)‖x‖².
    let mut worst_solver = 0.0_f64;
    for (rows, cols) in [(8, 8), (6, 4), (3, 8), (8, 5)] {
        let data = random_vec(&mut rng, rows * cols);
        let y = random_vec(&mut rng, rows);
        let op = LinearOperator::dense(rows, cols, data.clone()).unwrap();
        let k = DMatrix::from_row_slice(rows, cols, &data);
        for (alpha, eta) in [(1e-2, 1.0), (0.5, 2.0), (3.0, 0.1)] {
            let solver = TikhonovSolver::new(&op, Penalty::quadratic(eta).unwrap(), SolverOptions::default()).unwrap();
            let x = match solver.solve(&y, alpha) {
                Ok(s) => s.x,
                Err(e) => return Outcome::failed(e),
            };
            let lhs = k.transpose() * &k + DMatrix::identity(cols, cols) * (alpha * eta);
            let rhs = k.transpose() * DVector::from_column_slice(&y);
            let exact = lhs.lu().solve(&rhs).expect("regularized system is invertible");
            let err = (DVector::from_column_slice(&x) - &exact).norm() / exact.norm();
            if err > C4_SOLVER_TOL {
                details.push(format!("dense {rows}x{cols} alpha={alpha} eta={eta}: relative error {err:e}"));
            }
            worst_solver = worst_solver.max(err);
        }
    }
    let mut o = Outcome::new(
        worst_adjoint <= C4_ADJOINT_TOL && worst_solver <= C4_SOLVER_TOL,
        format!(
            "adjoint defect {worst_adjoint:.2e} over {} operator kinds, solver vs normal equations {worst_solver:.2e}",
            ops.len()
        ),
    );
    o.details = details;
    o
}

fn rule_quality() -> Outcome {
    let start = Instant::now();
    let base = match deconvolution_problem(C5_N, 1.2, &WSpec::default(), 0.0, SEED) {
        Ok(b) => b,
        Err(e) => return Outcome::failed(e),
    };
    let deltas = log_spaced(C5_DELTA_RANGE.0, C5_DELTA_RANGE.1, C5_DELTA_COUNT);
    let grids = [
        (
            Rule::HankeRaus,
            SweepGrid {
                start: AlphaStart::OperatorNorm,
                q: 0.8,
                count: 60,
                k0: 1,
            },
        ),
        (
            Rule::QuasiOptimality,
            SweepGrid {
                start: AlphaStart::HundredDeltaCapped,
                q: 0.8,
                count: 60,
                k0: 1,
            },
        ),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    let mut worst = 0.0_f64;
    for (rule, grid) in &grids {
        let mut errors = Vec::new();
        for (j, &delta) in deltas.iter().enumerate() {
            let pt = match sweep_point(&base, *rule, delta, SEED + j as u64, grid, SolverOptions::default()) {
                Ok(p) => p,
                Err(e) => return Outcome::failed(e),
            };
            let ratio = pt.rule_error / pt.oracle_error;
            worst = worst.max(ratio);
            if !(ratio <= C5_RATIO) {
                pass = false;
                details.push(format!("{rule} delta={delta:.3e}: error ratio {ratio:.3}"));
            }
            errors.push(pt.rule_error);
        }
        let decay = errors[errors.len() - 1] / errors[0];
        details.push(format!(
            "{rule}: error {:.3e} at delta={:.0e}, {:.3e} at delta={:.0e} (decay {:.1e}x)",
            errors[errors.len() - 1],
            C5_DELTA_RANGE.1,
            errors[0],
            C5_DELTA_RANGE.0,
            decay
        ));
        if !(decay >= C5_DECAY) {
            pass = false;
        }
    }
    let fast = within_budget(start, C5_BUDGET, &mut details);
    let mut o = Outcome::new(
        pass && fast,
        format!("worst rule/oracle Bregman error ratio {worst:.3} (limit {C5_RATIO})"),
    );
    o.details = details;
    o
}

fn within_order_of_magnitude(alpha: f64, reference: f64) -> bool {
    (alpha / reference).log10().abs() <= 1.0
}

fn experiment4(paths: &mut Vec<(String, RegularizationPath)>) -> Outcome {
    let start = Instant::now();
    let inst = match blur_problem(50, 5, 1.2, 1e-3, 0.1, SEED) {
        Ok(i) => i,
        Err(e) => return Outcome::failed(e),
    };
    let cmp = match compare_rules(&inst, &inst.grid, 1, 1.0, SolverOptions::default()) {
        Ok(c) => c,
        Err(e) => return Outcome::failed(e),
    };
    let (ob, hr, qo, dp) = (
        cmp.row(Rule::OracleBregman),
        cmp.row(Rule::HankeRaus),
        cmp.row(Rule::QuasiOptimality),
        cmp.row(Rule::Discrepancy),
    );
    let in_range = |a: f64| (C6_ALPHA_RANGE.0..=C6_ALPHA_RANGE.1).contains(&a);
    let a = in_range(hr.alpha)
        && in_range(qo.alpha)
        && within_order_of_magnitude(hr.alpha, C6_REFERENCE_HR)
        && within_order_of_magnitude(qo.alpha, C6_REFERENCE_QO);
    let b = dp.alpha < hr.alpha && dp.bregman > hr.bregman && dp.bregman > qo.bregman;
    let c = hr.bregman <= C6_ORACLE_FACTOR * ob.bregman && qo.bregman <= C6_ORACLE_FACTOR * ob.bregman;
    let mut details: Vec<String> = cmp
        .rows
        .iter()
        .map(|r| format!("{:<17} alpha={:.3e} bregman={:.3e} norm={:.3e}", r.rule.name(), r.alpha, r.bregman, r.norm))
        .collect();
    details.push(format!(
        "(a) alphas in range and within 10x of reference values: {}",
        if a { "yes" } else { "no" }
    ));
    details.push(format!(
        "(b) discrepancy alpha smaller than Hanke-Raus and error larger than both heuristics: {}",
        if b { "yes" } else { "no" }
    ));
    details.push(format!(
        "(c) heuristic errors within {C6_ORACLE_FACTOR}x oracle: hanke_raus {:.2}x, quasi_optimality {:.2}x",
        hr.bregman / ob.bregman,
        qo.bregman / ob.bregman
    ));
    let fast = within_budget(start, C6_BUDGET, &mut details);
    let verdict = |x: bool| if x { "ok" } else { "fail" };
    let mut o = Outcome::new(
        a && b && c && fast,
        format!("(a) {} (b) {} (c) {}", verdict(a), verdict(b), verdict(c)),
    );
    o.details = details;
    paths.push(("blur".to_string(), cmp.path));
    o
}

/// Tall smoothing matrix: its range misses a large part of random noise.
fn tall_smoothing(rows: usize, cols: usize) -> LinearOperator {
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let s = i as f64 / (rows - 1) as f64;
        for j in 0..cols {
            let t = j as f64 / (cols - 1) as f64;
            data.push((-((s - t) / 0.1).powi(2)).exp() / cols as f64);
        }
    }
    LinearOperator::dense(rows, cols, data).unwrap()
}

fn delta_star_guard(paths: &mut Vec<(String, RegularizationPath)>) -> Outcome {
    let op = tall_smoothing(64, 32);
    let p = 1.2;
    let mut rng = SplitMix64::new(SEED);
    let w = rng.normals(64);
    let (_, x_dagger) = construct_source_solution(&op, &w, p).unwrap();
    // y† is homogeneous of degree 1/(p − 1) in w; rescale w so that ‖y†‖ = 1.
    let s = norm(&op.apply(&x_dagger).unwrap()).powf(-(p - 1.0));
    let w: Vec<f64> = w.iter().map(|v| v * s).collect();
    let (_, x_dagger) = construct_source_solution(&op, &w, p).unwrap();
    let y_dagger = op.apply(&x_dagger).unwrap();
    let scale = norm(&y_dagger);
    let mut details = Vec::new();
    let mut checked = 0;
    let mut pass = true;
    for (j, rel) in [1e-3, 1e-2, 5e-2, 1e-1].into_iter().enumerate() {
        let delta = rel * scale;
        let y = add_noise(&y_dagger, delta, SEED + j as u64).unwrap();
        let eps = noise_condition_epsilon(&op, &y_dagger, &y).unwrap();
        if eps <= C7_MIN_EPSILON {
            details.push(format!("delta={delta:.3e}: epsilon_hat {eps:.3} too small, skipped"));
            continue;
        }
        let opn = op.operator_norm(1e-10).unwrap();
        let solver = TikhonovSolver::new(&op, Penalty::lp_power(p).unwrap(), SolverOptions::default()).unwrap();
        let path = match solver.solve_path(&y, opn * opn, 0.8, 50) {
            Ok(path) => path,
            Err(e) => return Outcome::failed(e),
        };
        let sel = hanke_raus(&path, opn).unwrap();
        let sol = &path.solutions[sel.index.unwrap()];
        let lower = eps * delta - C7_GAP_FACTOR * sol.optimality_gap;
        let ok = sel.delta_star.unwrap() >= lower;
        pass &= ok;
        checked += 1;
        details.push(format!(
            "delta={delta:.3e}: epsilon_hat={eps:.3}, delta*={:.4e} >= {lower:.4e}: {}",
            sel.delta_star.unwrap(),
            if ok { "yes" } else { "no" }
        ));
        paths.push((format!("tall smoothing delta={delta:.3e}"), path));
    }
    let mut o = Outcome::new(pass && checked > 0, format!("{checked} instances with epsilon_hat > {C7_MIN_EPSILON}"));
    o.details = details;
    o
}

fn degenerate_bregman() -> Outcome {
    let l1 = Penalty::l1();
    let d = match bregman_distance(&l1, &[2.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]) {
        Ok(d) => d,
        Err(e) => return Outcome::failed(e),
    };
    let mut details = vec![format!("l1 distance between (2,0) and (1,0) with xi=(1,0): {d:e}")];

    // Identity operator with data (3, 0): x_α = (3 − α, 0) for α < 3 and
    // every consecutive Bregman distance vanishes.
    let op = LinearOperator::identity(2).unwrap();
    let solver = TikhonovSolver::new(&op, l1, SolverOptions::default()).unwrap();
    let mut warned = true;
    for (name, y) in [("zero data", [0.0, 0.0]), ("colinear path", [3.0, 0.0])] {
        let outcome = solver
            .solve_path(&y, 1.0, 0.8, 20)
            .and_then(|path| quasi_optimality(&op, &l1, &path, 1));
        match outcome {
            Ok(sel) => {
                let w = !sel.warnings.is_empty();
                warned &= w;
                details.push(format!(
                    "{name}: selected k={} with mu={:e}, warning raised: {}",
                    sel.index.unwrap(),
                    sel.criterion,
                    if w { "yes" } else { "no" }
                ));
            }
            Err(e) => {
                warned = false;
                details.push(format!("{name}: failed with {e}"));
            }
        }
    }
    let mut o = Outcome::new(d == 0.0 && warned, format!("distance {d:e}, vanishing-sequence warnings raised: {warned}"));
    o.details = details;
    o
}

fn main() -> ExitCode {
    let names = [
        "inequality suite on the deconvolution problem",
        "residual monotonicity along computed paths",
        "prox against golden-section oracle",
        "adjoint and normal-equations oracles",
        "rule quality over the noise sweep",
        "deblurring rule comparison",
        "delta* lower bound from the noise condition",
        "degenerate l1 Bregman distance",
    ];
    let mut paths = Vec::new();
    let c1 = inequality_suite(&mut paths);
    let c5 = rule_quality();
    let c6 = experiment4(&mut paths);
    let c7 = delta_star_guard(&mut paths);
    let c2 = residual_monotonicity(&paths);
    let outcomes = [c1, c2, prox_oracle(), adjoint_and_solver(), c5, c6, c7, degenerate_bregman()];

    let mut failures = 0;
    for (i, (name, o)) in names.iter().zip(&outcomes).enumerate() {
        println!("{} criterion {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.summary);
        for d in &o.details {
            println!("    {d}");
        }
        failures += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", outcomes.len() - failures, outcomes.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
