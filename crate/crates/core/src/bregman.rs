//! Bregman distances, canonical residual-based subgradients and runnable
//! checks of the error estimates for convex Tikhonov regularization.
//!
//! Subgradient conventions are fixed throughout:
//!
//! * at the exact solution `x†`: `ξ = K^*w` from the source condition;
//! * at an exact-data minimizer `x_α`: `ξ_α = −K^*(Kx_α − y†)/α`;
//! * at a noisy-data minimizer `x_α^δ`: `ξ_α^δ = −K^*(Kx_α^δ − y^δ)/α`.
//!
//! The estimates hold for exact minimizers. Numerical minimizers carry an
//! optimality gap `g = dist(ξ_α, ∂R(x_α))`, so every check is inflated by a
//! term proportional to the gaps involved (see [`GAP_INFLATION`]).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::io::fmt_f64;
use crate::linops::LinearOperator;
use crate::penalty::Penalty;
use crate::solver::RegularizationPath;
use crate::vector::{dist, dot, norm, sub};

/// Multiplier `c` of the solver-inexactness slack added to every check.
pub const GAP_INFLATION: f64 = 10.0;

/// Absolute slack below which every estimate is considered satisfied.
pub const ABSOLUTE_FLOOR: f64 = 1e-12;

/// Relative slack on nonnegativity of a Bregman distance.
pub const NONNEGATIVITY_SLACK: f64 = 1e-10;

/// `D_ξ(x_to, x_from) = R(x_to) − R(x_from) − ⟨ξ, x_to − x_from⟩`, unchecked.
pub fn bregman_raw(penalty: &Penalty, x_to: &[f64], x_from: &[f64], xi: &[f64]) -> f64 {
    let r_to = penalty.value(x_to);
    let r_from = penalty.value(x_from);
    let pairing: f64 = xi
        .iter()
        .zip(x_to.iter().zip(x_from))
        .map(|(g, (a, b))| g * (a - b))
        .sum();
    r_to - r_from - pairing
}

/// Bregman distance from `x_from` to `x_to` with respect to `xi ∈ ∂R(x_from)`.
///
/// Fails when the value is negative beyond `NONNEGATIVITY_SLACK`, relative to
/// the magnitudes of the terms, which signals that `xi` is not a subgradient.
pub fn bregman_distance(penalty: &Penalty, x_to: &[f64], x_from: &[f64], xi: &[f64]) -> Result<f64> {
    check_len(x_from.len(), x_to.len())?;
    check_len(x_from.len(), xi.len())?;
    debug_assert!(
        penalty.subdifferential_distance(x_from, xi).unwrap() <= 1e-6 * (1.0 + norm(xi)),
        "xi is not a subgradient of R at x_from"
    );
    let value = bregman_raw(penalty, x_to, x_from, xi);
    let scale = 1.0
        + penalty.value(x_to)
        + penalty.value(x_from)
        + dot(xi, &sub(x_to, x_from)).abs();
    if value < -NONNEGATIVITY_SLACK * scale {
        return Err(Error::InvalidSubgradient { value });
    }
    Ok(value)
}

/// `−K^*(Kx − y)/α`, the subgradient singled out by the optimality
/// condition of the Tikhonov functional.
pub fn canonical_xi(op: &LinearOperator, y: &[f64], alpha: f64, x: &[f64]) -> Result<Vec<f64>> {
    if !(alpha > 0.0) {
        return Err(invalid("alpha", format!("must be positive, got {alpha}")));
    }
    let r = sub(&op.apply(x)?, y);
    Ok(op.apply_adjoint(&r)?.into_iter().map(|g| -g / alpha).collect())
}

/// Absolute defect of the three-point identity
/// `D_ξ(x', x†) = D_ζ(x', x) + D_ξ(x, x†) + ⟨ξ − ζ, x − x'⟩`.
pub fn splitting_identity_check(
    penalty: &Penalty,
    x_dagger: &[f64],
    xi_dagger: &[f64],
    x_mid: &[f64],
    xi_mid: &[f64],
    x_to: &[f64],
) -> f64 {
    let lhs = bregman_raw(penalty, x_to, x_dagger, xi_dagger);
    let cross: f64 = xi_dagger
        .iter()
        .zip(xi_mid)
        .zip(x_mid.iter().zip(x_to))
        .map(|((a, b), (m, t))| (a - b) * (m - t))
        .sum();
    let rhs = bregman_raw(penalty, x_to, x_mid, xi_mid)
        + bregman_raw(penalty, x_mid, x_dagger, xi_dagger)
        + cross;
    (lhs - rhs).abs()
}

/// One row of the error decomposition at a single α.
///
/// The `step_*` fields compare `x_α^δ` with the next grid solution
/// `x_{qα}^δ` and are absent on the last row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub alpha: f64,
    /// `D_ξ(x_α, x†)`
    pub approx_error: f64,
    /// `‖w‖²α/2`
    pub approx_bound: f64,
    /// `D_{ξ_α}(x_α^δ, x_α)`
    pub data_error: f64,
    /// `δ²/(2α)`
    pub data_bound: f64,
    /// `D_ξ(x_α^δ, x†)`
    pub total_error: f64,
    /// `½(δ/√α + √α‖w‖)²`
    pub total_bound: f64,
    /// `‖Kx_α − y†‖`
    pub approx_discrepancy: f64,
    /// `2‖w‖α`
    pub approx_discrepancy_bound: f64,
    /// `‖K(x_α^δ − x_α)‖`
    pub data_discrepancy: f64,
    /// `2δ`
    pub data_discrepancy_bound: f64,
    /// `‖Kx_α^δ − y^δ‖`
    pub residual: f64,
    /// `δ + 2α‖w‖`
    pub residual_bound: f64,
    /// `total − (approx + data)`, signed
    pub splitting_defect: f64,
    /// `6‖w‖δ`
    pub splitting_bound: f64,
    /// `‖Kx_α^δ − y^δ‖²/α`
    pub phi: f64,
    /// `D_{ξ_α^δ}(x_{qα}^δ, x_α^δ)`
    pub step_error: Option<f64>,
    /// `(1−q)²‖Kx_α^δ − y^δ‖²/(2αq)`
    pub step_error_bound: Option<f64>,
    /// `‖K(x_{qα}^δ − x_α^δ)‖`
    pub step_discrepancy: Option<f64>,
    /// `2(1−q)(δ + 2α‖w‖)`
    pub step_discrepancy_bound: Option<f64>,
    pub gap_exact: f64,
    pub gap_noisy: f64,
    pub gap_next: Option<f64>,
    pub dist_exact_dagger: f64,
    pub dist_noisy_dagger: f64,
    pub dist_noisy_exact: f64,
    pub dist_step: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub delta: f64,
    pub w_norm: f64,
    pub q: f64,
    pub rows: Vec<ErrorRow>,
}

/// The inequalities verified by [`check_estimates`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimate {
    ApproxError,
    ApproxDiscrepancy,
    DataError,
    DataDiscrepancy,
    TotalError,
    Residual,
    Splitting,
    StepError,
    StepDiscrepancy,
}

impl Estimate {
    pub const ALL: [Estimate; 9] = [
        Estimate::ApproxError,
        Estimate::ApproxDiscrepancy,
        Estimate::DataError,
        Estimate::DataDiscrepancy,
        Estimate::TotalError,
        Estimate::Residual,
        Estimate::Splitting,
        Estimate::StepError,
        Estimate::StepDiscrepancy,
    ];
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimate::ApproxError => "approx_error ≤ ‖w‖²α/2",
            Estimate::ApproxDiscrepancy => "‖Kx_α − y†‖ ≤ 2‖w‖α",
            Estimate::DataError => "data_error ≤ δ²/(2α)",
            Estimate::DataDiscrepancy => "‖K(x_α^δ − x_α)‖ ≤ 2δ",
            Estimate::TotalError => "total_error ≤ ½(δ/√α + √α‖w‖)²",
            Estimate::Residual => "‖Kx_α^δ − y^δ‖ ≤ δ + 2α‖w‖",
            Estimate::Splitting => "|total − (approx + data)| ≤ 6‖w‖δ",
            Estimate::StepError => "D(x_qα^δ, x_α^δ) ≤ (1−q)²‖Kx_α^δ − y^δ‖²/(2αq)",
            Estimate::StepDiscrepancy => "‖K(x_qα^δ − x_α^δ)‖ ≤ 2(1−q)(δ + 2α‖w‖)",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub estimate: Estimate,
    pub alpha: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs` plus relative and solver-inexactness slack.
    pub allowed: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} violated at alpha={}: lhs={} rhs={} allowed={}",
            self.estimate,
            fmt_f64(self.alpha),
            fmt_f64(self.lhs),
            fmt_f64(self.rhs),
            fmt_f64(self.allowed)
        )
    }
}

pub(crate) fn check_same_grid(a: &RegularizationPath, b: &RegularizationPath) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch {
            index: a.len().min(b.len()),
        });
    }
    for (index, (x, y)) in a.alphas.iter().zip(&b.alphas).enumerate() {
        if (x - y).abs() > 1e-12 * x.abs().max(y.abs()) {
            return Err(Error::GridMismatch { index });
        }
    }
    Ok(())
}

/// Decomposes the error of a noisy-data path against an exact-data path on
/// the same grid.
///
/// `w` is the source element with `ξ = K^*w ∈ ∂R(x†)`; `path_exact` must be
/// computed from `y† = Kx†`.
pub fn build_error_report(
    op: &LinearOperator,
    penalty: &Penalty,
    path_noisy: &RegularizationPath,
    path_exact: &RegularizationPath,
    x_dagger: &[f64],
    w: &[f64],
    delta: f64,
) -> Result<ErrorReport> {
    check_same_grid(path_noisy, path_exact)?;
    check_len(op.domain_dim(), x_dagger.len())?;
    let xi = op.apply_adjoint(w)?;
    let w_norm = norm(w);
    let q = path_noisy.q;
    let y_delta = &path_noisy.data;
    let y_dagger = &path_exact.data;
    let n = path_noisy.len();

    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let alpha = path_noisy.alphas[k];
        let xn = &path_noisy.solutions[k];
        let xe = &path_exact.solutions[k];
        let xi_exact = canonical_xi(op, y_dagger, alpha, &xe.x)?;

        let approx_error = bregman_raw(penalty, &xe.x, x_dagger, &xi);
        let data_error = bregman_raw(penalty, &xn.x, &xe.x, &xi_exact);
        let total_error = bregman_raw(penalty, &xn.x, x_dagger, &xi);
        let data_discrepancy = norm(&op.apply(&sub(&xn.x, &xe.x))?);

        let step = if k + 1 < n {
            let next = &path_noisy.solutions[k + 1];
            let xi_noisy = canonical_xi(op, y_delta, alpha, &xn.x)?;
            let diff = sub(&next.x, &xn.x);
            Some((
                bregman_raw(penalty, &next.x, &xn.x, &xi_noisy),
                (1.0 - q).powi(2) * xn.residual_norm.powi(2) / (2.0 * alpha * q),
                norm(&op.apply(&diff)?),
                2.0 * (1.0 - q) * (delta + 2.0 * alpha * w_norm),
                next.optimality_gap,
                norm(&diff),
            ))
        } else {
            None
        };

        rows.push(ErrorRow {
            alpha,
            approx_error,
            approx_bound: 0.5 * w_norm * w_norm * alpha,
            data_error,
            data_bound: delta * delta / (2.0 * alpha),
            total_error,
            total_bound: 0.5 * (delta / alpha.sqrt() + alpha.sqrt() * w_norm).powi(2),
            approx_discrepancy: xe.residual_norm,
            approx_discrepancy_bound: 2.0 * w_norm * alpha,
            data_discrepancy,
            data_discrepancy_bound: 2.0 * delta,
            residual: xn.residual_norm,
            residual_bound: delta + 2.0 * alpha * w_norm,
            splitting_defect: total_error - (approx_error + data_error),
            splitting_bound: 6.0 * w_norm * delta,
            phi: xn.residual_norm * xn.residual_norm / alpha,
            step_error: step.map(|s| s.0),
            step_error_bound: step.map(|s| s.1),
            step_discrepancy: step.map(|s| s.2),
            step_discrepancy_bound: step.map(|s| s.3),
            gap_exact: xe.optimality_gap,
            gap_noisy: xn.optimality_gap,
            gap_next: step.map(|s| s.4),
            dist_exact_dagger: dist(&xe.x, x_dagger),
            dist_noisy_dagger: dist(&xn.x, x_dagger),
            dist_noisy_exact: dist(&xn.x, &xe.x),
            dist_step: step.map(|s| s.5),
        });
    }
    Ok(ErrorReport {
        delta,
        w_norm,
        q,
        rows,
    })
}

/// Slack for a Bregman-distance estimate between two numerical minimizers
/// with optimality gaps `gaps`, a distance `d` apart.
fn bregman_inflation(gaps: f64, d: f64) -> f64 {
    GAP_INFLATION * gaps * d
}

/// Slack for a discrepancy estimate: an inexact minimizer `x` with gap `g`
/// satisfies `‖K(x − x*)‖² ≤ α g ‖x − x*‖`.
fn discrepancy_inflation(alpha: f64, gaps: f64, d: f64) -> f64 {
    GAP_INFLATION * (alpha * gaps * d).sqrt()
}

/// Lists every estimate that fails by more than `slack` (relative to its
/// bound) plus the solver-inexactness inflation.
pub fn check_estimates(report: &ErrorReport, slack: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    for row in &report.rows {
        let a = row.alpha;
        let mut check = |estimate: Estimate, lhs: f64, rhs: f64, inflation: f64| {
            let allowed = rhs + slack * rhs.abs() + inflation + ABSOLUTE_FLOOR;
            if !(lhs <= allowed) {
                out.push(Violation {
                    estimate,
                    alpha: a,
                    lhs,
                    rhs,
                    allowed,
                });
            }
        };
        let ge = row.gap_exact;
        let gn = row.gap_noisy;

        check(
            Estimate::ApproxError,
            row.approx_error,
            row.approx_bound,
            bregman_inflation(ge, row.dist_exact_dagger),
        );
        check(
            Estimate::ApproxDiscrepancy,
            row.approx_discrepancy,
            row.approx_discrepancy_bound,
            discrepancy_inflation(a, ge, row.dist_exact_dagger),
        );
        check(
            Estimate::DataError,
            row.data_error,
            row.data_bound,
            bregman_inflation(ge + gn, row.dist_noisy_exact),
        );
        check(
            Estimate::DataDiscrepancy,
            row.data_discrepancy,
            row.data_discrepancy_bound,
            discrepancy_inflation(a, ge + gn, row.dist_noisy_exact),
        );
        check(
            Estimate::TotalError,
            row.total_error,
            row.total_bound,
            bregman_inflation(gn, row.dist_noisy_dagger),
        );
        check(
            Estimate::Residual,
            row.residual,
            row.residual_bound,
            discrepancy_inflation(a, gn, row.dist_noisy_dagger),
        );
        check(
            Estimate::Splitting,
            row.splitting_defect.abs(),
            row.splitting_bound,
            bregman_inflation(
                ge + gn,
                row.dist_noisy_dagger + row.dist_noisy_exact + row.dist_exact_dagger,
            ),
        );
        if let (Some(lhs), Some(rhs), Some(gnext), Some(d)) =
            (row.step_error, row.step_error_bound, row.gap_next, row.dist_step)
        {
            check(Estimate::StepError, lhs, rhs, bregman_inflation(gn + gnext, d));
        }
        if let (Some(lhs), Some(rhs), Some(gnext), Some(d)) = (
            row.step_discrepancy,
            row.step_discrepancy_bound,
            row.gap_next,
            row.dist_step,
        ) {
            check(
                Estimate::StepDiscrepancy,
                lhs,
                rhs,
                discrepancy_inflation(a, gn + gnext, d),
            );
        }
    }
    out
}

/// Column names of [`ErrorReport::to_csv`].
pub const REPORT_CSV_HEADER: &str = "alpha,approx_error,approx_bound,data_error,data_bound,\
total_error,total_bound,approx_discrepancy,approx_discrepancy_bound,data_discrepancy,\
data_discrepancy_bound,residual,residual_bound,splitting_defect,splitting_bound,phi,\
step_error,step_error_bound,step_discrepancy,step_discrepancy_bound,gap_exact,gap_noisy";

impl ErrorReport {
    /// One row per α with [`REPORT_CSV_HEADER`]; absent step columns on the
    /// last row are left empty.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut s = String::from(REPORT_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let fields = [
                fmt_f64(r.alpha),
                fmt_f64(r.approx_error),
                fmt_f64(r.approx_bound),
                fmt_f64(r.data_error),
                fmt_f64(r.data_bound),
                fmt_f64(r.total_error),
                fmt_f64(r.total_bound),
                fmt_f64(r.approx_discrepancy),
                fmt_f64(r.approx_discrepancy_bound),
                fmt_f64(r.data_discrepancy),
                fmt_f64(r.data_discrepancy_bound),
                fmt_f64(r.residual),
                fmt_f64(r.residual_bound),
                fmt_f64(r.splitting_defect),
                fmt_f64(r.splitting_bound),
                fmt_f64(r.phi),
                opt(r.step_error),
                opt(r.step_error_bound),
                opt(r.step_discrepancy),
                opt(r.step_discrepancy_bound),
                fmt_f64(r.gap_exact),
                fmt_f64(r.gap_noisy),
            ];
            s.push_str(&fields.join(","));
            s.push('\n');
        }
        s
    }

    /// `(α, value)` pairs for one column.
    pub fn curve(&self, column: impl Fn(&ErrorRow) -> f64) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.alpha, column(r))).collect()
    }
}
