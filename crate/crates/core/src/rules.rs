//! Parameter-choice rules over a computed regularization path: the
//! Hanke-Raus rule, the quasi-optimality principle, the discrepancy
//! principle and oracle baselines, plus the auto-regularization ratio.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bregman::{bregman_raw, canonical_xi, check_same_grid};
use crate::error::{check_len, invalid, Error, Result};
use crate::io::{dat_string, fmt_f64};
use crate::linops::LinearOperator;
use crate::penalty::Penalty;
use crate::solver::{RegularizationPath, SolverOptions, TikhonovSolution, TikhonovSolver};
use crate::vector::dist;

/// Hanke-Raus warns when `δ*` falls below this fraction of the largest
/// residual on the path.
pub const DELTA_STAR_WARNING: f64 = 1e-3;

/// The quasi-optimality minimum counts as zero below this fraction of
/// `1 + max R(x_k)`.
pub const QO_DEGENERATE_TOL: f64 = 1e-10;

/// Relative slack on `α ≤ ‖K‖²` so that a grid started at a computed
/// `‖K‖²` keeps its first point.
const ADMISSIBLE_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    HankeRaus,
    QuasiOptimality,
    Discrepancy,
    OracleBregman,
    OracleNorm,
}

impl Rule {
    pub const ALL: [Rule; 5] = [
        Rule::OracleBregman,
        Rule::OracleNorm,
        Rule::HankeRaus,
        Rule::QuasiOptimality,
        Rule::Discrepancy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::HankeRaus => "hanke_raus",
            Rule::QuasiOptimality => "quasi_optimality",
            Rule::Discrepancy => "discrepancy",
            Rule::OracleBregman => "oracle_bregman",
            Rule::OracleNorm => "oracle_norm",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Rule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| invalid("rule", format!("unknown rule `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMetric {
    /// `D_ξ†(x_α^δ, x†)`
    Bregman,
    /// `‖x_α^δ − x†‖`
    Norm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleSelection {
    pub rule: Rule,
    pub alpha_selected: f64,
    /// Position in the path; absent for the discrepancy principle, which
    /// solves off the grid.
    pub index: Option<usize>,
    /// Criterion value at the selection (`φ`, `μ_k`, the residual or the
    /// oracle error).
    pub criterion: f64,
    /// `(α, criterion)` for every candidate.
    pub diagnostics: Vec<(f64, f64)>,
    /// Residual `‖Kx_α^δ − y^δ‖` at the selected α.
    pub delta_star: Option<f64>,
    pub warnings: Vec<String>,
}

/// Column names of [`RuleSelection::csv_row`].
pub const SELECTION_CSV_HEADER: &str = "rule,alpha,index,criterion,delta_star,warnings";

impl RuleSelection {
    pub fn csv_row(&self) -> String {
        let warnings: Vec<String> = self.warnings.iter().map(|w| w.replace([',', '\n'], ";")).collect();
        format!(
            "{},{},{},{},{},{}",
            self.rule,
            fmt_f64(self.alpha_selected),
            self.index.map(|i| i.to_string()).unwrap_or_default(),
            fmt_f64(self.criterion),
            self.delta_star.map(fmt_f64).unwrap_or_default(),
            warnings.join(" | ")
        )
    }

    pub fn diagnostics_dat(&self) -> String {
        dat_string(&self.diagnostics)
    }
}

/// Index of the smallest value; on ties the candidate with the larger α.
fn argmin_prefer_large_alpha(candidates: &[(usize, f64, f64)]) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for &(i, alpha, v) in candidates {
        best = match best {
            Some((_, ba, bv)) if v > bv || (v == bv && alpha <= ba) => best,
            _ if v.is_nan() => best,
            _ => Some((i, alpha, v)),
        };
    }
    best.map(|b| b.0)
}

/// Minimizes `φ(α) = ‖Kx_α^δ − y^δ‖²/α` over the grid points with
/// `α ≤ ‖K‖²`.
///
/// Warns when `δ* = ‖Kx_{α*}^δ − y^δ‖` is below [`DELTA_STAR_WARNING`] times
/// the largest residual on the path, a sign that the selection may
/// under-regularize.
pub fn hanke_raus(path: &RegularizationPath, k_norm: f64) -> Result<RuleSelection> {
    let limit = k_norm * k_norm * (1.0 + ADMISSIBLE_SLACK);
    let candidates: Vec<(usize, f64, f64)> = path
        .alphas
        .iter()
        .zip(&path.solutions)
        .enumerate()
        .filter(|(_, (&a, _))| a <= limit)
        .map(|(i, (&a, s))| (i, a, s.residual_norm * s.residual_norm / a))
        .collect();
    let index = argmin_prefer_large_alpha(&candidates).ok_or_else(|| {
        Error::NoAdmissiblePoint(format!(
            "all {} grid points exceed ‖K‖² = {:e}",
            path.len(),
            k_norm * k_norm
        ))
    })?;
    let sol = &path.solutions[index];
    let delta_star = sol.residual_norm;
    let max_res = path.solutions.iter().fold(0.0_f64, |m, s| m.max(s.residual_norm));
    let mut warnings = Vec::new();
    if delta_star < DELTA_STAR_WARNING * max_res {
        warnings.push(format!(
            "delta* = {delta_star:e} is below {DELTA_STAR_WARNING:e} of the largest residual {max_res:e}; the selection may be unreliable"
        ));
    }
    Ok(RuleSelection {
        rule: Rule::HankeRaus,
        alpha_selected: path.alphas[index],
        index: Some(index),
        criterion: delta_star * delta_star / path.alphas[index],
        diagnostics: candidates.iter().map(|&(_, a, v)| (a, v)).collect(),
        delta_star: Some(delta_star),
        warnings,
    })
}

/// `μ_k = D_{ξ_{k−1}}(x_k, x_{k−1})` for `k = 1..len`, with `ξ_{k−1}` the
/// canonical subgradient at the larger parameter. Entry `k − 1` holds `μ_k`.
pub fn quasi_optimality_sequence(
    op: &LinearOperator,
    penalty: &Penalty,
    path: &RegularizationPath,
) -> Result<Vec<f64>> {
    (1..path.len())
        .map(|k| {
            let prev = &path.solutions[k - 1];
            let xi = canonical_xi(op, &path.data, path.alphas[k - 1], &prev.x)?;
            Ok(bregman_raw(penalty, &path.solutions[k].x, &prev.x, &xi))
        })
        .collect()
}

/// Chooses the grid index `k ≥ k0` minimizing the Bregman distance `μ_k`
/// between consecutive solutions; ties go to the smaller `k`.
///
/// A vanishing minimum, possible for penalties that are not strictly
/// convex, produces a warning rather than an error.
pub fn quasi_optimality(
    op: &LinearOperator,
    penalty: &Penalty,
    path: &RegularizationPath,
    k0: usize,
) -> Result<RuleSelection> {
    if k0 < 1 {
        return Err(invalid("k0", "the quasi-optimality sequence starts at k = 1"));
    }
    if path.len() < k0 + 2 {
        return Err(invalid(
            "path",
            format!("quasi-optimality with k0 = {k0} needs at least {} grid points, got {}", k0 + 2, path.len()),
        ));
    }
    let mu = quasi_optimality_sequence(op, penalty, path)?;
    let mut index = k0;
    for k in k0..path.len() {
        if mu[k - 1] < mu[index - 1] {
            index = k;
        }
    }
    let min = mu[index - 1];
    let scale = 1.0
        + path
            .solutions
            .iter()
            .fold(0.0_f64, |m, s| m.max(s.penalty_value.abs()));
    let mut warnings = Vec::new();
    if min < -QO_DEGENERATE_TOL * scale {
        warnings.push(format!(
            "minimal quasi-optimality value {min:e} is negative; the path solutions are too inexact \
             for Bregman distances at this alpha (tighten the solver tolerance)"
        ));
    } else if min <= QO_DEGENERATE_TOL * scale {
        warnings.push(format!(
            "minimal quasi-optimality value {min:e} vanishes; the Bregman distance is degenerate for this penalty"
        ));
    }
    let sol = &path.solutions[index];
    Ok(RuleSelection {
        rule: Rule::QuasiOptimality,
        alpha_selected: path.alphas[index],
        index: Some(index),
        criterion: min,
        diagnostics: (1..path.len()).map(|k| (path.alphas[k], mu[k - 1])).collect(),
        delta_star: Some(sol.residual_norm),
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyOptions {
    /// Stop when `|‖Kx_α^δ − y^δ‖ − τδ| ≤ rel_tol·τδ`.
    pub rel_tol: f64,
    pub max_steps: usize,
    pub solver: SolverOptions,
}

impl Default for DiscrepancyOptions {
    fn default() -> Self {
        DiscrepancyOptions {
            rel_tol: 1e-6,
            max_steps: 200,
            solver: SolverOptions::default(),
        }
    }
}

/// Finds α with `‖Kx_α^δ − y^δ‖ = τδ` by bisection in `log α` inside
/// `bracket = (α_lo, α_hi)`, relying on the residual increasing with α.
///
/// Returns the selection and the solution at the selected α.
pub fn discrepancy_principle(
    op: &LinearOperator,
    y_delta: &[f64],
    penalty: &Penalty,
    delta: f64,
    tau: f64,
    bracket: (f64, f64),
    opts: &DiscrepancyOptions,
) -> Result<(RuleSelection, TikhonovSolution)> {
    if !(delta > 0.0) {
        return Err(invalid("delta", format!("must be positive, got {delta}")));
    }
    if !(tau >= 1.0) {
        return Err(invalid("tau", format!("must be at least 1, got {tau}")));
    }
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(invalid("bracket", format!("need 0 < alpha_lo < alpha_hi, got ({lo:e}, {hi:e})")));
    }
    if !(opts.rel_tol > 0.0) {
        return Err(invalid("rel_tol", format!("must be positive, got {}", opts.rel_tol)));
    }
    check_len(op.range_dim(), y_delta.len())?;
    let solver = TikhonovSolver::new(op, *penalty, opts.solver)?;
    let solve = |alpha: f64, start: &[f64]| -> Result<TikhonovSolution> {
        let s = solver.solve_from(y_delta, alpha, start)?;
        if !s.converged {
            return Err(Error::PathSolve {
                index: 0,
                alpha,
                reason: format!("no convergence after {} iterations (gap {:e})", s.iterations, s.optimality_gap),
            });
        }
        Ok(s)
    };
    let target = tau * delta;
    let accept = |s: &TikhonovSolution| (s.residual_norm - target).abs() <= opts.rel_tol * target;

    let mut diagnostics = Vec::new();
    let mut sol_hi = solve(hi, &vec![0.0; op.domain_dim()])?;
    diagnostics.push((hi, sol_hi.residual_norm));
    if sol_hi.residual_norm < target && !accept(&sol_hi) {
        return Err(Error::Bracket(format!(
            "residual {:e} at alpha_hi = {hi:e} stays below tau*delta = {target:e}; the level is unreachable or alpha_hi is too small",
            sol_hi.residual_norm
        )));
    }
    let mut sol_lo = solve(lo, &sol_hi.x)?;
    diagnostics.push((lo, sol_lo.residual_norm));
    if sol_lo.residual_norm > target && !accept(&sol_lo) {
        return Err(Error::Bracket(format!(
            "residual {:e} at alpha_lo = {lo:e} exceeds tau*delta = {target:e}; decrease alpha_lo",
            sol_lo.residual_norm
        )));
    }

    let mut warnings = Vec::new();
    let finish = |s: TikhonovSolution, diagnostics: Vec<(f64, f64)>, warnings: Vec<String>| {
        let sel = RuleSelection {
            rule: Rule::Discrepancy,
            alpha_selected: s.alpha,
            index: None,
            criterion: s.residual_norm,
            diagnostics,
            delta_star: Some(s.residual_norm),
            warnings,
        };
        (sel, s)
    };
    if accept(&sol_hi) {
        return Ok(finish(sol_hi, diagnostics, warnings));
    }
    if accept(&sol_lo) {
        return Ok(finish(sol_lo, diagnostics, warnings));
    }
    for _ in 0..opts.max_steps {
        let mid = (lo * hi).sqrt();
        let s = solve(mid, &sol_hi.x)?;
        diagnostics.push((mid, s.residual_norm));
        if s.residual_norm > sol_hi.residual_norm || s.residual_norm < sol_lo.residual_norm {
            warnings.push(format!(
                "residual {:e} at alpha = {mid:e} breaks monotonicity of the bracket",
                s.residual_norm
            ));
        }
        if accept(&s) {
            return Ok(finish(s, diagnostics, warnings));
        }
        if s.residual_norm > target {
            hi = mid;
            sol_hi = s;
        } else {
            lo = mid;
            sol_lo = s;
        }
        if hi / lo - 1.0 <= 4.0 * f64::EPSILON {
            break;
        }
    }
    let (alpha, residual) = *diagnostics.last().expect("bracket solves recorded");
    Err(Error::Bisection {
        steps: diagnostics.len() - 2,
        alpha,
        residual,
        target,
    })
}

/// Grid point with the smallest error against the known solution `x†`;
/// ties go to the larger α.
pub fn oracle_best(
    path: &RegularizationPath,
    penalty: &Penalty,
    x_dagger: &[f64],
    xi_dagger: &[f64],
    metric: OracleMetric,
) -> Result<RuleSelection> {
    if path.is_empty() {
        return Err(invalid("path", "empty path"));
    }
    let dim = path.solutions[0].x.len();
    check_len(dim, x_dagger.len())?;
    check_len(dim, xi_dagger.len())?;
    let candidates: Vec<(usize, f64, f64)> = path
        .solutions
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let e = match metric {
                OracleMetric::Bregman => bregman_raw(penalty, &s.x, x_dagger, xi_dagger),
                OracleMetric::Norm => dist(&s.x, x_dagger),
            };
            (i, path.alphas[i], e)
        })
        .collect();
    let index = argmin_prefer_large_alpha(&candidates).expect("nonempty path");
    Ok(RuleSelection {
        rule: match metric {
            OracleMetric::Bregman => Rule::OracleBregman,
            OracleMetric::Norm => Rule::OracleNorm,
        },
        alpha_selected: path.alphas[index],
        index: Some(index),
        criterion: candidates[index].2,
        diagnostics: candidates.iter().map(|&(_, a, v)| (a, v)).collect(),
        delta_star: Some(path.solutions[index].residual_norm),
        warnings: Vec::new(),
    })
}

/// `min_k |μ_k − μ_k†| / D_{ξ_k}(x_k^δ, x_k)` over `k ≥ 1`, the largest
/// `r` for which the data satisfy the auto-regularization condition on this
/// grid.
///
/// `μ_k†` is the quasi-optimality sequence of the exact-data path and
/// `ξ_k` the canonical subgradient at the exact-data solution. Terms with a
/// vanishing denominator impose no constraint and are skipped; if none
/// remain the result is `+∞`.
pub fn autoreg_ratio(
    op: &LinearOperator,
    penalty: &Penalty,
    path_noisy: &RegularizationPath,
    path_exact: &RegularizationPath,
) -> Result<f64> {
    check_same_grid(path_noisy, path_exact)?;
    let mu = quasi_optimality_sequence(op, penalty, path_noisy)?;
    let mu_exact = quasi_optimality_sequence(op, penalty, path_exact)?;
    let mut ratio = f64::INFINITY;
    for k in 1..path_noisy.len() {
        let xe = &path_exact.solutions[k].x;
        let xi = canonical_xi(op, &path_exact.data, path_exact.alphas[k], xe)?;
        let denom = bregman_raw(penalty, &path_noisy.solutions[k].x, xe, &xi).max(0.0);
        let num = (mu[k - 1] - mu_exact[k - 1]).abs();
        if denom > 0.0 {
            ratio = ratio.min(num / denom);
        }
    }
    Ok(ratio)
}
