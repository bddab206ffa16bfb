//! Subcommand implementations.

use std::path::Path;

use rayon::prelude::*;
use tikreg::bregman::{Violation, REPORT_CSV_HEADER};
use tikreg::experiments::{
    compare_rules, comparison_csv, error_decomposition, log_spaced, solver_for, sweep_point, AlphaStart, SweepGrid,
    SweepPoint,
};
use tikreg::io::{dat_string, fmt_f64};
use tikreg::problems::{blur_problem, deconvolution_problem_with_width, GridSpec, ProblemInstance};
use tikreg::rules::{
    discrepancy_principle, hanke_raus, oracle_best, quasi_optimality, DiscrepancyOptions, OracleMetric, Rule,
    SELECTION_CSV_HEADER,
};
use tikreg::SolverOptions;

use crate::config::{at_least, bad, nonnegative, positive, power_of_two, ratio, DeltaSweep, ExperimentConfig};
use crate::output::OutDir;
use crate::CliError;

pub const DEFAULT_SEED: u64 = 1;

fn solver_options(c: &ExperimentConfig) -> Result<SolverOptions, CliError> {
    let d = SolverOptions::default();
    Ok(SolverOptions {
        tol: positive("tol", c.tol.unwrap_or(d.tol))?,
        max_iter: at_least("max_iter", c.max_iter.unwrap_or(d.max_iter), 1)?,
        ..d
    })
}

fn deconvolution(c: &ExperimentConfig, default_n: usize, delta: f64, seed: u64) -> Result<ProblemInstance, CliError> {
    let n = power_of_two("n", c.n.unwrap_or(default_n))?;
    let p = c.p.unwrap_or(1.2);
    if !(p > 1.0 && p <= 2.0) {
        return Err(bad("p", format!("must lie in (1, 2], got {p}")).into());
    }
    let width = ratio("width", c.width.unwrap_or(0.2))?;
    let w_spec = c.w_spec.clone().unwrap_or_default();
    Ok(deconvolution_problem_with_width(n, p, width, &w_spec, delta, seed)?)
}

fn blur(c: &ExperimentConfig, delta: f64, seed: u64) -> Result<ProblemInstance, CliError> {
    let n = at_least("n", c.n.unwrap_or(50), 1)?;
    let band = at_least("band", c.band.unwrap_or(5), 1)?;
    if band > n {
        return Err(bad("band", format!("must not exceed n = {n}, got {band}")).into());
    }
    let sigma = positive("sigma", c.sigma.unwrap_or(1.2))?;
    let eta = nonnegative("eta", c.eta.unwrap_or(1e-3))?;
    Ok(blur_problem(n, band, sigma, eta, delta, seed)?)
}

fn violations_text(v: &[Violation]) -> String {
    v.iter().map(|v| format!("{v}\n")).collect()
}

/// Error decomposition on one noise level over a log-spaced α-grid.
pub fn experiment1(c: &ExperimentConfig, out: &OutDir) -> Result<bool, CliError> {
    c.check_experiment(1)?;
    let delta = nonnegative("delta", c.delta.unwrap_or(0.02))?;
    let seed = c.seed.unwrap_or(DEFAULT_SEED);
    let alpha_max = positive("alpha_max", c.alpha_max.unwrap_or(1.0))?;
    let alpha_min = positive("alpha_min", c.alpha_min.unwrap_or(1e-4))?;
    if alpha_min >= alpha_max {
        return Err(bad("alpha_min", "must be smaller than alpha_max").into());
    }
    let count = at_least("count", c.count.unwrap_or(41), 2)?;
    let slack = nonnegative("slack", c.slack.unwrap_or(1e-6))?;
    let opts = solver_options(c)?;
    let inst = deconvolution(c, 512, delta, seed)?;

    let q = (alpha_min / alpha_max).powf(1.0 / (count - 1) as f64);
    let grid = GridSpec { alpha0: alpha_max, q, count };
    let run = error_decomposition(&inst, &grid, opts, slack)?;
    let r = &run.report;
    out.text("total_error.dat", &dat_string(&r.curve(|row| row.total_error)))?;
    out.text("data_error.dat", &dat_string(&r.curve(|row| row.data_error)))?;
    out.text("approx_error.dat", &dat_string(&r.curve(|row| row.approx_error)))?;
    out.text("phi.dat", &dat_string(&r.curve(|row| row.phi)))?;
    out.text("total_bound.dat", &dat_string(&r.curve(|row| row.total_bound)))?;
    out.text("report.csv", &r.to_csv())?;
    out.text("violations.txt", &violations_text(&run.violations))?;
    println!(
        "experiment 1: n={} delta={} |w|={} support={} grid={} points, {} violations",
        inst.op.domain_dim(),
        fmt_f64(delta),
        fmt_f64(r.w_norm),
        inst.support_size(),
        count,
        run.violations.len()
    );
    for v in &run.violations {
        eprintln!("{v}");
    }
    Ok(run.violations.is_empty())
}

/// Columns of the sweep CSV.
pub const SWEEP_CSV_HEADER: &str =
    "delta,seed,epsilon_hat,alpha_rule,error_rule,alpha_oracle,error_oracle,error_ratio,delta_star,warnings";

fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = format!("{SWEEP_CSV_HEADER}\n");
    for p in points {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(p.delta),
            p.seed,
            p.epsilon_hat.map(fmt_f64).unwrap_or_default(),
            fmt_f64(p.selection.alpha_selected),
            fmt_f64(p.rule_error),
            fmt_f64(p.oracle.alpha_selected),
            fmt_f64(p.oracle_error),
            fmt_f64(p.rule_error / p.oracle_error),
            p.selection.delta_star.map(fmt_f64).unwrap_or_default(),
            p.selection.warnings.join(" | ").replace(',', ";"),
        ));
    }
    s
}

/// Rule against oracle over a geometric sweep of noise levels.
pub fn sweep(c: &ExperimentConfig, out: &OutDir, rule: Rule) -> Result<bool, CliError> {
    let id = if rule == Rule::HankeRaus { 2 } else { 3 };
    c.check_experiment(id)?;
    let sweep = c.deltas.unwrap_or(DeltaSweep { min: 1e-4, max: 1e-1, count: 12 });
    positive("deltas.min", sweep.min)?;
    positive("deltas.max", sweep.max)?;
    at_least("deltas.count", sweep.count, 1)?;
    if sweep.min > sweep.max {
        return Err(bad("deltas.min", "must not exceed deltas.max").into());
    }
    let default_start = if rule == Rule::HankeRaus {
        AlphaStart::OperatorNorm
    } else {
        AlphaStart::HundredDeltaCapped
    };
    let grid = SweepGrid {
        start: c.alpha_start.unwrap_or(default_start),
        q: ratio("q", c.q.unwrap_or(0.8))?,
        count: at_least("count", c.count.unwrap_or(60), 3)?,
        k0: at_least("k0", c.k0.unwrap_or(1), 1)?,
    };
    let seed = c.seed.unwrap_or(DEFAULT_SEED);
    let opts = solver_options(c)?;
    let base = deconvolution(c, 128, 0.0, seed)?;
    let deltas = log_spaced(sweep.min, sweep.max, sweep.count);
    let points: Vec<SweepPoint> = deltas
        .par_iter()
        .enumerate()
        .map(|(j, &delta)| sweep_point(&base, rule, delta, seed.wrapping_add(j as u64), &grid, opts))
        .collect::<Result<_, _>>()?;

    let curve = |f: &dyn Fn(&SweepPoint) -> f64| dat_string(&points.iter().map(|p| (p.delta, f(p))).collect::<Vec<_>>());
    out.text("alpha_rule.dat", &curve(&|p| p.selection.alpha_selected))?;
    out.text("alpha_oracle.dat", &curve(&|p| p.oracle.alpha_selected))?;
    out.text("error_rule.dat", &curve(&|p| p.rule_error))?;
    out.text("error_oracle.dat", &curve(&|p| p.oracle_error))?;
    out.text("sweep.csv", &sweep_csv(&points))?;

    let worst = points.iter().map(|p| p.rule_error / p.oracle_error).fold(0.0_f64, f64::max);
    let grid_step = 1.0 / grid.q * (1.0 + 1e-12);
    let monotone = points
        .windows(2)
        .all(|w| w[1].selection.alpha_selected * grid_step >= w[0].selection.alpha_selected);
    println!(
        "experiment {id}: {} on {} noise levels; worst error ratio to oracle {:.3}; alpha nondecreasing in delta (one grid step slack): {}",
        rule,
        points.len(),
        worst,
        if monotone { "yes" } else { "no" }
    );
    Ok(true)
}

/// Rule comparison on the deblurring problem.
pub fn experiment4(c: &ExperimentConfig, out: &OutDir) -> Result<bool, CliError> {
    c.check_experiment(4)?;
    let delta = positive("delta", c.delta.unwrap_or(0.1))?;
    let seed = c.seed.unwrap_or(DEFAULT_SEED);
    let tau = c.tau.unwrap_or(1.0);
    if !(tau >= 1.0) {
        return Err(bad("tau", format!("must be at least 1, got {tau}")).into());
    }
    let opts = solver_options(c)?;
    let inst = blur(c, delta, seed)?;
    let mut grid = inst.grid;
    if let Some(q) = c.q {
        grid.q = ratio("q", q)?;
    }
    if let Some(count) = c.count {
        grid.count = at_least("count", count, 3)?;
    }
    let k0 = at_least("k0", c.k0.unwrap_or(1), 1)?;
    let cmp = compare_rules(&inst, &grid, k0, tau, opts)?;
    out.text("table.csv", &comparison_csv(&cmp.rows))?;
    let n = match inst.params {
        tikreg::problems::ProblemParams::Blur { n, .. } => n,
        _ => unreachable!("blur instance"),
    };
    out.floats("x_dagger.f64", &inst.x_dagger)?;
    out.floats("y_dagger.f64", &inst.y_dagger)?;
    out.floats("y_delta.f64", &inst.y_delta)?;
    let vmax = inst.x_dagger.iter().fold(0.0_f64, |m, v| m.max(*v));
    let png = c.png.unwrap_or(false);
    if png {
        out.png("x_dagger.png", &inst.x_dagger, n, vmax)?;
        out.png("y_dagger.png", &inst.y_dagger, n, vmax)?;
        out.png("y_delta.png", &inst.y_delta, n, vmax)?;
    }
    for row in &cmp.rows {
        out.floats(&format!("{}.f64", row.rule), &row.x)?;
        if png {
            out.png(&format!("{}.png", row.rule), &row.x, n, vmax)?;
        }
    }
    println!("experiment 4: {}x{} image, delta={}", n, n, fmt_f64(delta));
    for row in &cmp.rows {
        println!(
            "  {:<17} alpha={:.3e}  bregman={:.3e}  norm={:.3e}",
            row.rule.name(),
            row.alpha,
            row.bregman,
            row.norm
        );
    }
    Ok(true)
}

/// Problem parameters for `synthesize`.
pub enum ProblemKind {
    Deconvolution,
    Blur,
}

pub fn synthesize(kind: ProblemKind, c: &ExperimentConfig, dir: &Path) -> Result<bool, CliError> {
    let delta = nonnegative("delta", c.delta.unwrap_or(0.02))?;
    let seed = c.seed.unwrap_or(DEFAULT_SEED);
    let inst = match kind {
        ProblemKind::Deconvolution => deconvolution(c, 128, delta, seed)?,
        ProblemKind::Blur => blur(c, delta, seed)?,
    };
    inst.save(dir)?;
    println!(
        "wrote {} (domain {}, range {}, delta {}, epsilon_hat {})",
        dir.display(),
        inst.op.domain_dim(),
        inst.op.range_dim(),
        fmt_f64(inst.delta),
        inst.epsilon_hat.map(fmt_f64).unwrap_or_else(|| "undefined".into())
    );
    Ok(true)
}

pub fn load(dir: &Path) -> Result<ProblemInstance, CliError> {
    ProblemInstance::load(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))
}

/// Manifest grid with `alpha0`, `q` and `count` overrides.
fn grid_for(inst: &ProblemInstance, c: &ExperimentConfig) -> Result<GridSpec, CliError> {
    let mut g = inst.grid;
    if let Some(a) = c.alpha_max {
        g.alpha0 = positive("alpha0", a)?;
    }
    if let Some(q) = c.q {
        g.q = ratio("q", q)?;
    }
    if let Some(n) = c.count {
        g.count = at_least("count", n, 2)?;
    }
    Ok(g)
}

pub const PATH_CSV_HEADER: &str = "alpha,residual,penalty,objective,iterations,optimality_gap";

pub fn solve_path(dir: &Path, c: &ExperimentConfig, out: Option<&OutDir>) -> Result<bool, CliError> {
    let inst = load(dir)?;
    let grid = grid_for(&inst, c)?;
    let solver = solver_for(&inst, solver_options(c)?)?;
    let path = solver.solve_path(&inst.y_delta, grid.alpha0, grid.q, grid.count)?;
    let mut csv = format!("{PATH_CSV_HEADER}\n");
    for s in &path.solutions {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f64(s.alpha),
            fmt_f64(s.residual_norm),
            fmt_f64(s.penalty_value),
            fmt_f64(s.objective),
            s.iterations,
            fmt_f64(s.optimality_gap)
        ));
    }
    match out {
        Some(out) => {
            out.text("path.csv", &csv)?;
            let pts = |f: &dyn Fn(&tikreg::TikhonovSolution) -> f64| {
                dat_string(&path.solutions.iter().map(|s| (s.alpha, f(s))).collect::<Vec<_>>())
            };
            out.text("residual.dat", &pts(&|s| s.residual_norm))?;
            out.text("phi.dat", &pts(&|s| s.residual_norm * s.residual_norm / s.alpha))?;
            for (k, s) in path.solutions.iter().enumerate() {
                out.floats(&format!("x_{k:03}.f64"), &s.x)?;
            }
        }
        None => print!("{csv}"),
    }
    Ok(true)
}

pub fn select(dir: &Path, rule: Rule, c: &ExperimentConfig, out: Option<&OutDir>) -> Result<bool, CliError> {
    let inst = load(dir)?;
    let grid = grid_for(&inst, c)?;
    let k0 = at_least("k0", c.k0.unwrap_or(1), 1)?;
    let opts = solver_options(c)?;
    let solver = solver_for(&inst, opts)?;
    let path = solver.solve_path(&inst.y_delta, grid.alpha0, grid.q, grid.count)?;
    let (r, xd, xid) = (&inst.penalty, &inst.x_dagger, &inst.xi_dagger);
    let sel = match rule {
        Rule::HankeRaus => hanke_raus(&path, inst.operator_norm)?,
        Rule::QuasiOptimality => quasi_optimality(&inst.op, r, &path, k0)?,
        Rule::OracleBregman => oracle_best(&path, r, xd, xid, OracleMetric::Bregman)?,
        Rule::OracleNorm => oracle_best(&path, r, xd, xid, OracleMetric::Norm)?,
        Rule::Discrepancy => {
            let tau = c.tau.unwrap_or(1.0);
            if !(tau >= 1.0) {
                return Err(bad("tau", format!("must be at least 1, got {tau}")).into());
            }
            let bracket = (*path.alphas.last().unwrap(), path.alphas[0]);
            let dp = DiscrepancyOptions {
                solver: SolverOptions {
                    lipschitz: Some(solver.lipschitz()),
                    ..opts
                },
                ..DiscrepancyOptions::default()
            };
            discrepancy_principle(&inst.op, &inst.y_delta, r, inst.delta, tau, bracket, &dp)?.0
        }
    };
    println!(
        "# rule={} alpha0={} q={} count={} k0={}",
        rule,
        fmt_f64(grid.alpha0),
        grid.q,
        grid.count,
        k0
    );
    println!("{SELECTION_CSV_HEADER}");
    println!("{}", sel.csv_row());
    if let Some(out) = out {
        out.text("selection.csv", &format!("{SELECTION_CSV_HEADER}\n{}\n", sel.csv_row()))?;
        out.text("diagnostics.dat", &sel.diagnostics_dat())?;
    }
    Ok(true)
}

pub fn report(dir: &Path, c: &ExperimentConfig, out: Option<&OutDir>) -> Result<bool, CliError> {
    let inst = load(dir)?;
    if inst.w.is_none() {
        return Err(CliError::Usage(format!(
            "{}: the error report needs a problem with a source element",
            dir.display()
        )));
    }
    let grid = grid_for(&inst, c)?;
    let slack = nonnegative("slack", c.slack.unwrap_or(1e-6))?;
    let run = error_decomposition(&inst, &grid, solver_options(c)?, slack)?;
    let csv = run.report.to_csv();
    debug_assert!(csv.starts_with(REPORT_CSV_HEADER));
    match out {
        Some(out) => {
            out.text("report.csv", &csv)?;
            out.text("violations.txt", &violations_text(&run.violations))?;
        }
        None => print!("{csv}"),
    }
    for v in &run.violations {
        eprintln!("{v}");
    }
    Ok(run.violations.is_empty())
}
