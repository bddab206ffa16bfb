//! Minimization of `J_α(x) = ½‖Kx − y‖² + αR(x)` by proximal gradient
//! descent with optional Nesterov acceleration, and warm-started
//! regularization paths over geometric α-grids.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::linops::LinearOperator;
use crate::penalty::Penalty;
use crate::vector::{dot, norm};

/// Lipschitz estimates are inflated by this factor over `‖K‖²`.
pub const LIPSCHITZ_INFLATION: f64 = 1.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Convergence threshold on the optimality gap, scaled by `1 + ‖K^*y‖/α`.
    pub tol: f64,
    pub max_iter: usize,
    /// FISTA with gradient-based adaptive restart instead of plain
    /// proximal gradient.
    pub accelerate: bool,
    /// Iterations between optimality-gap evaluations.
    pub check_interval: usize,
    /// Lipschitz constant of the data-term gradient; estimated from
    /// `‖K‖²` when absent.
    pub lipschitz: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 200_000,
            accelerate: true,
            check_interval: 10,
            lipschitz: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TikhonovSolution {
    pub x: Vec<f64>,
    pub alpha: f64,
    /// `‖Kx − y‖`
    pub residual_norm: f64,
    /// `R(x)`
    pub penalty_value: f64,
    pub objective: f64,
    pub iterations: usize,
    /// `dist(−K^*(Kx − y)/α, ∂R(x))`
    pub optimality_gap: f64,
    pub converged: bool,
}

/// Solutions over `alphas[k] = alphas[0] q^k` for shared data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizationPath {
    pub alphas: Vec<f64>,
    pub solutions: Vec<TikhonovSolution>,
    pub data: Vec<f64>,
    pub q: f64,
}

impl RegularizationPath {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.solutions.iter().map(|s| s.residual_norm).collect()
    }
}

/// `α_k = α_0 q^k` for `k = 0..count`.
pub fn geometric_grid(alpha0: f64, q: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| alpha0 * q.powi(k as i32)).collect()
}

/// Proximal-gradient solver bound to an operator and a penalty.
#[derive(Clone, Debug)]
pub struct TikhonovSolver<'a> {
    op: &'a LinearOperator,
    penalty: Penalty,
    opts: SolverOptions,
    lipschitz: f64,
}

impl<'a> TikhonovSolver<'a> {
    pub fn new(op: &'a LinearOperator, penalty: Penalty, opts: SolverOptions) -> Result<Self> {
        if !(opts.tol > 0.0) {
            return Err(invalid("tol", format!("must be positive, got {}", opts.tol)));
        }
        let lipschitz = match opts.lipschitz {
            Some(l) if l > 0.0 => l,
            Some(l) => return Err(invalid("lipschitz", format!("must be positive, got {l}"))),
            None => {
                let sigma = op.operator_norm(1e-6)?;
                LIPSCHITZ_INFLATION * sigma * sigma
            }
        };
        Ok(TikhonovSolver {
            op,
            penalty,
            opts,
            lipschitz,
        })
    }

    pub fn operator(&self) -> &LinearOperator {
        self.op
    }

    pub fn penalty(&self) -> Penalty {
        self.penalty
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Solves from the zero vector.
    pub fn solve(&self, y: &[f64], alpha: f64) -> Result<TikhonovSolution> {
        self.solve_from(y, alpha, &vec![0.0; self.op.domain_dim()])
    }

    pub fn solve_from(&self, y: &[f64], alpha: f64, start: &[f64]) -> Result<TikhonovSolution> {
        self.solve_with_observer(y, alpha, start, |_, _| {})
    }

    /// Like [`solve_from`](Self::solve_from), calling `observe(j, x_j)` on
    /// every iterate.
    pub fn solve_with_observer(
        &self,
        y: &[f64],
        alpha: f64,
        start: &[f64],
        mut observe: impl FnMut(usize, &[f64]),
    ) -> Result<TikhonovSolution> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid("alpha", format!("must be positive, got {alpha}")));
        }
        check_len(self.op.range_dim(), y.len())?;
        check_len(self.op.domain_dim(), start.len())?;

        let op = self.op;
        let scale = 1.0 + norm(&op.apply_adjoint_unchecked(y)) / alpha;
        let threshold = self.opts.tol * scale;
        let step = 1.0 / self.lipschitz;
        let check_interval = self.opts.check_interval.max(1);

        let mut x = start.to_vec();
        observe(0, &x);
        let (mut residual, mut gap) = self.residual_and_gap(y, alpha, &x);
        let mut iterations = 0;
        let mut converged = gap <= threshold;

        let n = x.len();
        let mut z = x.clone();
        let mut trial = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut t = 1.0_f64;
        while !converged && iterations < self.opts.max_iter {
            iterations += 1;
            let r: Vec<f64> = op
                .apply_unchecked(&z)
                .iter()
                .zip(y)
                .map(|(a, b)| a - b)
                .collect();
            let g = op.apply_adjoint_unchecked(&r);
            for ((tr, zi), gi) in trial.iter_mut().zip(&z).zip(&g) {
                *tr = zi - step * gi;
            }
            self.penalty.prox_into(&trial, step * alpha, &mut next);

            if self.opts.accelerate {
                // restart momentum when it points against the prox-gradient step
                let restart: f64 = z
                    .iter()
                    .zip(&next)
                    .zip(&x)
                    .map(|((zi, ni), xi)| (zi - ni) * (ni - xi))
                    .sum();
                if restart > 0.0 {
                    t = 1.0;
                    z.copy_from_slice(&next);
                } else {
                    let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                    let beta = (t - 1.0) / t_next;
                    for ((zi, ni), xi) in z.iter_mut().zip(&next).zip(&x) {
                        *zi = ni + beta * (ni - xi);
                    }
                    t = t_next;
                }
            } else {
                z.copy_from_slice(&next);
            }
            std::mem::swap(&mut x, &mut next);
            observe(iterations, &x);

            if iterations % check_interval == 0 || iterations == self.opts.max_iter {
                (residual, gap) = self.residual_and_gap(y, alpha, &x);
                converged = gap <= threshold;
            }
        }

        let residual_norm = norm(&residual);
        let penalty_value = self.penalty.value(&x);
        Ok(TikhonovSolution {
            objective: 0.5 * residual_norm * residual_norm + alpha * penalty_value,
            x,
            alpha,
            residual_norm,
            penalty_value,
            iterations,
            optimality_gap: gap,
            converged,
        })
    }

    fn residual_and_gap(&self, y: &[f64], alpha: f64, x: &[f64]) -> (Vec<f64>, f64) {
        let residual: Vec<f64> = self
            .op
            .apply_unchecked(x)
            .iter()
            .zip(y)
            .map(|(a, b)| a - b)
            .collect();
        let v: Vec<f64> = self
            .op
            .apply_adjoint_unchecked(&residual)
            .iter()
            .map(|g| -g / alpha)
            .collect();
        let gap = self
            .penalty
            .subdifferential_distance(x, &v)
            .expect("dimensions checked");
        (residual, gap)
    }

    /// Solves on `α_k = α_0 q^k`, warm-starting each solve from the previous
    /// (larger-α) solution. Every solve must converge.
    pub fn solve_path(
        &self,
        y: &[f64],
        alpha0: f64,
        q: f64,
        count: usize,
    ) -> Result<RegularizationPath> {
        if !(alpha0 > 0.0) {
            return Err(invalid("alpha0", format!("must be positive, got {alpha0}")));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(invalid("q", format!("must lie in (0, 1), got {q}")));
        }
        if count < 2 {
            return Err(invalid("count", format!("need at least 2 grid points, got {count}")));
        }
        let alphas = geometric_grid(alpha0, q, count);
        self.solve_on_grid(y, &alphas, q)
    }

    pub(crate) fn solve_on_grid(
        &self,
        y: &[f64],
        alphas: &[f64],
        q: f64,
    ) -> Result<RegularizationPath> {
        let mut solutions: Vec<TikhonovSolution> = Vec::with_capacity(alphas.len());
        for (index, &alpha) in alphas.iter().enumerate() {
            let start = match solutions.last() {
                Some(prev) => prev.x.clone(),
                None => vec![0.0; self.op.domain_dim()],
            };
            let sol = self
                .solve_from(y, alpha, &start)
                .map_err(|e| Error::PathSolve {
                    index,
                    alpha,
                    reason: e.to_string(),
                })?;
            if !sol.converged {
                return Err(Error::PathSolve {
                    index,
                    alpha,
                    reason: format!(
                        "no convergence after {} iterations (gap {:e})",
                        sol.iterations, sol.optimality_gap
                    ),
                });
            }
            solutions.push(sol);
        }
        Ok(RegularizationPath {
            alphas: alphas.to_vec(),
            solutions,
            data: y.to_vec(),
            q,
        })
    }
}

/// Minimizes `½‖Kx − y‖² + αR(x)` from the zero vector.
pub fn solve_tikhonov(
    op: &LinearOperator,
    y: &[f64],
    alpha: f64,
    penalty: Penalty,
    opts: SolverOptions,
) -> Result<TikhonovSolution> {
    TikhonovSolver::new(op, penalty, opts)?.solve(y, alpha)
}

pub fn solve_path(
    op: &LinearOperator,
    y: &[f64],
    penalty: Penalty,
    alpha0: f64,
    q: f64,
    count: usize,
    opts: SolverOptions,
) -> Result<RegularizationPath> {
    TikhonovSolver::new(op, penalty, opts)?.solve_path(y, alpha0, q, count)
}

/// `dist(v, ∂R(x))` with `v = −K^*(Kx − y)/α`.
pub fn optimality_gap(
    op: &LinearOperator,
    y: &[f64],
    alpha: f64,
    penalty: Penalty,
    x: &[f64],
) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(invalid("alpha", format!("must be positive, got {alpha}")));
    }
    let v = crate::bregman::canonical_xi(op, y, alpha, x)?;
    penalty.subdifferential_distance(x, &v)
}

/// `J_α(x)`.
pub fn objective(
    op: &LinearOperator,
    y: &[f64],
    alpha: f64,
    penalty: Penalty,
    x: &[f64],
) -> Result<f64> {
    let r = crate::vector::sub(&op.apply(x)?, y);
    Ok(0.5 * dot(&r, &r) + alpha * penalty.value(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id1() -> LinearOperator {
        LinearOperator::identity(1).unwrap()
    }

    #[test]
    fn scalar_quadratic_closed_form() {
        let r = Penalty::quadratic(1.0).unwrap();
        let sol = solve_tikhonov(&id1(), &[2.0], 1.0, r, SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.x[0] - 1.0).abs() < 1e-8);
        let gap = optimality_gap(&id1(), &[2.0], 1.0, r, &[1.0]).unwrap();
        assert!(gap < 1e-10);
    }

    #[test]
    fn scalar_l1_is_soft_threshold() {
        let sol = solve_tikhonov(&id1(), &[3.0], 1.0, Penalty::l1(), SolverOptions::default())
            .unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn huge_alpha_gives_zero() {
        let op = LinearOperator::circular_convolution(16, 0.25).unwrap();
        let y: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin()).collect();
        let k2 = op.operator_norm(1e-10).unwrap().powi(2);
        let sol = solve_tikhonov(&op, &y, k2 * 1e6, Penalty::l1(), SolverOptions::default())
            .unwrap();
        assert!(norm(&sol.x) < 1e-12);
        assert!((sol.residual_norm - norm(&y)).abs() < 1e-10);
    }

    #[test]
    fn rejects_nonpositive_alpha() {
        let r = Penalty::l1();
        assert!(solve_tikhonov(&id1(), &[1.0], 0.0, r, SolverOptions::default()).is_err());
        assert!(optimality_gap(&id1(), &[1.0], -1.0, r, &[0.0]).is_err());
    }

    #[test]
    fn gap_at_zero_for_l1() {
        // |K^*y| / α <= 1 componentwise: zero is the minimizer
        let op = LinearOperator::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        let y = [0.3, -0.2];
        let gap = optimality_gap(&op, &y, 0.5, Penalty::l1(), &[0.0, 0.0]).unwrap();
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn perturbed_minimizer_has_positive_gap() {
        let r = Penalty::quadratic(1.0).unwrap();
        let gap = optimality_gap(&id1(), &[2.0], 1.0, r, &[1.001]).unwrap();
        assert!(gap > 1e-4);
    }

    #[test]
    fn objective_consistency() {
        let op = LinearOperator::circular_convolution(32, 0.2).unwrap();
        let y: Vec<f64> = (0..32).map(|i| ((i * i) % 7) as f64 / 7.0).collect();
        let r = Penalty::lp_power(1.5).unwrap();
        let sol = solve_tikhonov(&op, &y, 1e-3, r, SolverOptions::default()).unwrap();
        let expected = 0.5 * sol.residual_norm.powi(2) + sol.alpha * sol.penalty_value;
        assert!((sol.objective - expected).abs() <= 1e-10 * (1.0 + sol.objective));
        let direct = objective(&op, &y, 1e-3, r, &sol.x).unwrap();
        assert!((sol.objective - direct).abs() <= 1e-10 * (1.0 + direct));
    }

    #[test]
    fn plain_proximal_gradient_is_monotone() {
        let op = LinearOperator::compose(
            LinearOperator::circular_convolution(32, 0.2).unwrap(),
            LinearOperator::haar_synthesis(32).unwrap(),
        )
        .unwrap();
        let y: Vec<f64> = (0..32).map(|i| (i as f64 / 5.0).cos()).collect();
        for r in [Penalty::lp_power(1.2).unwrap(), Penalty::elastic_net(1e-2).unwrap()] {
            let opts = SolverOptions {
                accelerate: false,
                max_iter: 400,
                ..SolverOptions::default()
            };
            let solver = TikhonovSolver::new(&op, r, opts).unwrap();
            let mut values = Vec::new();
            solver
                .solve_with_observer(&y, 1e-3, &[0.0; 32], |_, x| {
                    values.push(objective(&op, &y, 1e-3, r, x).unwrap())
                })
                .unwrap();
            for w in values.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{} > {}", w[1], w[0]);
            }
        }
    }

    #[test]
    fn path_grid_construction() {
        let op = LinearOperator::identity(3).unwrap();
        let path = solve_path(
            &op,
            &[1.0, -2.0, 0.5],
            Penalty::l1(),
            0.7,
            0.5,
            2,
            SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(path.alphas, vec![0.7, 0.35]);
        assert_eq!(path.solutions.len(), 2);
        assert!(solve_path(&op, &[1.0; 3], Penalty::l1(), 1.0, 0.5, 1, SolverOptions::default())
            .is_err());
        assert!(solve_path(&op, &[1.0; 3], Penalty::l1(), 1.0, 1.5, 3, SolverOptions::default())
            .is_err());
    }

    #[test]
    fn path_reports_failing_index() {
        let op = LinearOperator::circular_convolution(64, 0.2).unwrap();
        let y: Vec<f64> = (0..64).map(|i| (i as f64 / 3.0).sin()).collect();
        let opts = SolverOptions {
            max_iter: 3,
            ..SolverOptions::default()
        };
        let err = solve_path(&op, &y, Penalty::lp_power(1.2).unwrap(), 1e-4, 0.5, 4, opts)
            .unwrap_err();
        assert!(matches!(err, Error::PathSolve { index: 0, .. }));
    }
}
