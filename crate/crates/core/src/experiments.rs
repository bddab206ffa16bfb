//! End-to-end pipelines shared by the command-line driver and the test
//! suites: error decomposition on one noise level, rule-versus-oracle sweeps
//! over noise levels, and the rule comparison on the deblurring problem.

use serde::{Deserialize, Serialize};

use crate::bregman::{bregman_raw, build_error_report, check_estimates, ErrorReport, Violation};
use crate::error::{invalid, Result};
use crate::problems::{GridSpec, ProblemInstance};
use crate::rules::{
    discrepancy_principle, hanke_raus, oracle_best, quasi_optimality, DiscrepancyOptions, OracleMetric, Rule,
    RuleSelection,
};
use crate::solver::{RegularizationPath, SolverOptions, TikhonovSolver};
use crate::vector::dist;

/// Where a geometric α-grid starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaStart {
    /// `‖K‖²`, needs no knowledge of δ.
    OperatorNorm,
    /// `100δ`.
    HundredDelta,
    /// `min(100δ, ‖K‖²)`.
    HundredDeltaCapped,
}

impl AlphaStart {
    pub fn alpha0(self, operator_norm: f64, delta: f64) -> f64 {
        let k2 = operator_norm * operator_norm;
        match self {
            AlphaStart::OperatorNorm => k2,
            AlphaStart::HundredDelta => 100.0 * delta,
            AlphaStart::HundredDeltaCapped => (100.0 * delta).min(k2),
        }
    }
}

/// Error decomposition of one instance against its noise-free counterpart.
#[derive(Clone, Debug)]
pub struct DecompositionRun {
    pub report: ErrorReport,
    pub violations: Vec<Violation>,
    pub path_noisy: RegularizationPath,
    pub path_exact: RegularizationPath,
}

/// Solves the noisy and the exact-data path on `grid` and checks every
/// error estimate with relative `slack`. Needs an instance with a source
/// element.
pub fn error_decomposition(
    inst: &ProblemInstance,
    grid: &GridSpec,
    opts: SolverOptions,
    slack: f64,
) -> Result<DecompositionRun> {
    let w = inst
        .w
        .as_ref()
        .ok_or_else(|| invalid("instance", "error decomposition needs a source element w"))?;
    let solver = solver_for(inst, opts)?;
    let path_noisy = solver.solve_path(&inst.y_delta, grid.alpha0, grid.q, grid.count)?;
    let path_exact = solver.solve_path(&inst.y_dagger, grid.alpha0, grid.q, grid.count)?;
    let report = build_error_report(
        &inst.op,
        &inst.penalty,
        &path_noisy,
        &path_exact,
        &inst.x_dagger,
        w,
        inst.delta,
    )?;
    let violations = check_estimates(&report, slack);
    Ok(DecompositionRun {
        report,
        violations,
        path_noisy,
        path_exact,
    })
}

/// The solver with the stored operator norm as Lipschitz estimate, unless
/// `opts` fixes one.
pub fn solver_for(inst: &ProblemInstance, opts: SolverOptions) -> Result<TikhonovSolver<'_>> {
    let lipschitz = opts
        .lipschitz
        .or(Some(crate::solver::LIPSCHITZ_INFLATION * inst.operator_norm * inst.operator_norm));
    TikhonovSolver::new(&inst.op, inst.penalty, SolverOptions { lipschitz, ..opts })
}

/// Grid policy of a noise-level sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub start: AlphaStart,
    pub q: f64,
    pub count: usize,
    /// First admissible quasi-optimality index.
    pub k0: usize,
}

/// One noise level of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub seed: u64,
    pub epsilon_hat: Option<f64>,
    pub selection: RuleSelection,
    /// `D(x_α^δ, x†)` at the selected α.
    pub rule_error: f64,
    pub oracle: RuleSelection,
    pub oracle_error: f64,
}

/// Fresh noise of level `delta` from `seed`, a path on the sweep grid, the
/// heuristic `rule` and the Bregman oracle on the same path.
pub fn sweep_point(
    base: &ProblemInstance,
    rule: Rule,
    delta: f64,
    seed: u64,
    grid: &SweepGrid,
    opts: SolverOptions,
) -> Result<SweepPoint> {
    let inst = base.with_noise(delta, seed)?;
    let solver = solver_for(&inst, opts)?;
    let alpha0 = grid.start.alpha0(inst.operator_norm, delta);
    let path = solver.solve_path(&inst.y_delta, alpha0, grid.q, grid.count)?;
    let selection = match rule {
        Rule::HankeRaus => hanke_raus(&path, inst.operator_norm)?,
        Rule::QuasiOptimality => quasi_optimality(&inst.op, &inst.penalty, &path, grid.k0)?,
        other => return Err(invalid("rule", format!("{other} is not a heuristic rule on a path"))),
    };
    let oracle = oracle_best(&path, &inst.penalty, &inst.x_dagger, &inst.xi_dagger, OracleMetric::Bregman)?;
    let index = selection.index.expect("grid rules report an index");
    let rule_error = bregman_raw(&inst.penalty, &path.solutions[index].x, &inst.x_dagger, &inst.xi_dagger);
    Ok(SweepPoint {
        delta,
        seed,
        epsilon_hat: inst.epsilon_hat,
        selection,
        rule_error,
        oracle_error: oracle.criterion,
        oracle,
    })
}

/// `count` noise levels spaced evenly in `log δ` from `lo` to `hi`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|j| match j {
                    0 => lo,
                    j if j == count - 1 => hi,
                    j => (a + (b - a) * j as f64 / (count - 1) as f64).exp(),
                })
                .collect()
        }
    }
}

/// One row of the rule comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub rule: Rule,
    pub alpha: f64,
    /// `D(x_α^δ, x†)`
    pub bregman: f64,
    /// `‖x_α^δ − x†‖`
    pub norm: f64,
    pub x: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub selections: Vec<RuleSelection>,
    pub path: RegularizationPath,
}

impl Comparison {
    pub fn row(&self, rule: Rule) -> &ComparisonRow {
        self.rows.iter().find(|r| r.rule == rule).expect("every rule is reported")
    }
}

/// Column names of [`comparison_csv`].
pub const COMPARISON_CSV_HEADER: &str = "rule,alpha,bregman_distance,norm_error";

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    use crate::io::fmt_f64;
    let mut s = String::from(COMPARISON_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.rule, fmt_f64(r.alpha), fmt_f64(r.bregman), fmt_f64(r.norm)));
    }
    s
}

/// Both oracles, Hanke-Raus and quasi-optimality on one path over `grid`,
/// and the discrepancy principle with level `τδ` bracketed by the grid ends.
pub fn compare_rules(
    inst: &ProblemInstance,
    grid: &GridSpec,
    k0: usize,
    tau: f64,
    opts: SolverOptions,
) -> Result<Comparison> {
    let solver = solver_for(inst, opts)?;
    let path = solver.solve_path(&inst.y_delta, grid.alpha0, grid.q, grid.count)?;
    let (r, xd, xid) = (&inst.penalty, &inst.x_dagger, &inst.xi_dagger);
    let mut selections = vec![
        oracle_best(&path, r, xd, xid, OracleMetric::Bregman)?,
        oracle_best(&path, r, xd, xid, OracleMetric::Norm)?,
        hanke_raus(&path, inst.operator_norm)?,
        quasi_optimality(&inst.op, r, &path, k0)?,
    ];
    let mut rows: Vec<ComparisonRow> = selections
        .iter()
        .map(|s| {
            let x = path.solutions[s.index.expect("grid rule")].x.clone();
            ComparisonRow {
                rule: s.rule,
                alpha: s.alpha_selected,
                bregman: bregman_raw(r, &x, xd, xid),
                norm: dist(&x, xd),
                x,
                warnings: s.warnings.clone(),
            }
        })
        .collect();
    let bracket = (*path.alphas.last().expect("nonempty grid"), path.alphas[0]);
    let dp_opts = DiscrepancyOptions {
        solver: SolverOptions {
            lipschitz: Some(solver.lipschitz()),
            ..opts
        },
        ..DiscrepancyOptions::default()
    };
    let (sel, sol) = discrepancy_principle(&inst.op, &inst.y_delta, r, inst.delta, tau, bracket, &dp_opts)?;
    rows.push(ComparisonRow {
        rule: Rule::Discrepancy,
        alpha: sel.alpha_selected,
        bregman: bregman_raw(r, &sol.x, xd, xid),
        norm: dist(&sol.x, xd),
        x: sol.x,
        warnings: sel.warnings.clone(),
    });
    selections.push(sel);
    Ok(Comparison { rows, selections, path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{blur_problem, deconvolution_problem, WSpec};

    #[test]
    fn log_spacing_hits_endpoints() {
        let d = log_spaced(1e-4, 1e-1, 12);
        assert_eq!(d.len(), 12);
        assert_eq!(d[0], 1e-4);
        assert_eq!(d[11], 1e-1);
        assert!(d.windows(2).all(|w| w[1] > w[0]));
        assert!((d[1] / d[0] - 10f64.powf(3.0 / 11.0)).abs() < 1e-12);
    }

    #[test]
    fn alpha_start_policies() {
        assert_eq!(AlphaStart::OperatorNorm.alpha0(0.5, 1.0), 0.25);
        assert_eq!(AlphaStart::HundredDelta.alpha0(0.5, 0.01), 1.0);
        assert_eq!(AlphaStart::HundredDeltaCapped.alpha0(0.5, 0.01), 0.25);
        assert_eq!(AlphaStart::HundredDeltaCapped.alpha0(0.5, 1e-4), 0.01);
    }

    #[test]
    fn small_decomposition_has_no_violations() {
        let inst = deconvolution_problem(32, 1.2, &WSpec::default(), 0.02, 1).unwrap();
        let grid = GridSpec { alpha0: inst.operator_norm.powi(2), q: 0.7, count: 12 };
        let run = error_decomposition(&inst, &grid, SolverOptions::default(), 1e-6).unwrap();
        assert_eq!(run.report.rows.len(), 12);
        assert!(run.violations.is_empty(), "{:?}", run.violations);
    }

    #[test]
    fn decomposition_needs_a_source_element() {
        let inst = blur_problem(6, 2, 1.0, 1e-3, 0.1, 1).unwrap();
        let grid = GridSpec::heuristic(inst.operator_norm);
        assert!(error_decomposition(&inst, &grid, SolverOptions::default(), 1e-6).is_err());
    }

    #[test]
    fn pixelwise_blur_comparison_runs_end_to_end() {
        // band = 1: the blur scales each pixel, so every solve is componentwise
        let inst = blur_problem(8, 1, 1.0, 1e-3, 0.1, 1).unwrap();
        let grid = GridSpec { alpha0: inst.operator_norm.powi(2), q: 0.7, count: 25 };
        let cmp = compare_rules(&inst, &grid, 1, 1.0, SolverOptions::default()).unwrap();
        assert_eq!(cmp.rows.len(), 5);
        let dp = cmp.row(Rule::Discrepancy);
        assert!(dp.alpha > 0.0 && dp.bregman >= -1e-10);
        let csv = comparison_csv(&cmp.rows);
        assert_eq!(csv.lines().count(), 6);
    }
}
