//! Convex separable penalties `R(x) = Σ_k r(x_k)` with values, subgradients,
//! subdifferential distances and exact proximal maps.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};

/// Tolerance of the scalar ℓ^p proximal solve, relative to `|t|`.
pub const LP_PROX_TOL: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Penalty {
    /// `Σ |x_k|^p` with `1 < p <= 2`.
    LpPower { p: f64 },
    /// `Σ |x_k|`.
    L1,
    /// `‖x‖₁ + (η/2)‖x‖²`.
    ElasticNet { eta: f64 },
    /// `(η/2)‖x‖²`, the elastic net without its ℓ¹ part.
    Quadratic { eta: f64 },
}

impl Penalty {
    pub fn lp_power(p: f64) -> Result<Self> {
        if !(p > 1.0 && p <= 2.0) {
            return Err(invalid("p", format!("ℓ^p power penalty needs 1 < p <= 2, got {p}")));
        }
        Ok(Penalty::LpPower { p })
    }

    pub fn l1() -> Self {
        Penalty::L1
    }

    pub fn elastic_net(eta: f64) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(invalid("eta", format!("must be nonnegative, got {eta}")));
        }
        Ok(Penalty::ElasticNet { eta })
    }

    pub fn quadratic(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(invalid("eta", format!("quadratic penalty needs eta > 0, got {eta}")));
        }
        Ok(Penalty::Quadratic { eta })
    }

    /// Whether `R` is strictly convex, which makes Tikhonov minimizers unique.
    /// Pure ℓ¹ (and elastic net with `η = 0`) is not.
    pub fn is_strictly_convex(&self) -> bool {
        match *self {
            Penalty::LpPower { .. } | Penalty::Quadratic { .. } => true,
            Penalty::ElasticNet { eta } => eta > 0.0,
            Penalty::L1 => false,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.atom(v)).sum()
    }

    /// Scalar atom `r` with `R(x) = Σ r(x_k)`.
    pub fn atom(&self, v: f64) -> f64 {
        match *self {
            Penalty::LpPower { p } if p == 2.0 => v * v,
            Penalty::LpPower { p } => v.abs().powf(p),
            Penalty::L1 => v.abs(),
            Penalty::ElasticNet { eta } => v.abs() + 0.5 * eta * v * v,
            Penalty::Quadratic { eta } => 0.5 * eta * v * v,
        }
    }

    /// A member of `∂R(x)`; the ℓ¹ part uses the selection `sign(0) = 0`.
    pub fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.atom_subgradient(v)).collect()
    }

    fn atom_subgradient(&self, v: f64) -> f64 {
        match *self {
            Penalty::LpPower { p } => p * sign(v) * v.abs().powf(p - 1.0),
            Penalty::L1 => sign(v),
            Penalty::ElasticNet { eta } => sign(v) + eta * v,
            Penalty::Quadratic { eta } => eta * v,
        }
    }

    /// Euclidean distance from `v` to the subdifferential `∂R(x)`.
    pub fn subdifferential_distance(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        check_len(x.len(), v.len())?;
        let sum: f64 = x
            .iter()
            .zip(v)
            .map(|(&xi, &vi)| {
                let d = match *self {
                    Penalty::L1 | Penalty::ElasticNet { .. } if xi == 0.0 => {
                        (vi.abs() - 1.0).max(0.0)
                    }
                    _ => vi - self.atom_subgradient(xi),
                };
                d * d
            })
            .sum();
        Ok(sum.sqrt())
    }

    /// Componentwise `argmin_x ½(x - t_k)² + λ r(x)`.
    pub fn prox(&self, t: &[f64], lambda: f64) -> Result<Vec<f64>> {
        if !(lambda >= 0.0) {
            return Err(invalid("lambda", format!("must be nonnegative, got {lambda}")));
        }
        Ok(t.iter().map(|&ti| self.prox_scalar(ti, lambda)).collect())
    }

    pub(crate) fn prox_into(&self, t: &[f64], lambda: f64, out: &mut [f64]) {
        for (o, &ti) in out.iter_mut().zip(t) {
            *o = self.prox_scalar(ti, lambda);
        }
    }

    pub fn prox_scalar(&self, t: f64, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return t;
        }
        match *self {
            Penalty::LpPower { p } => lp_prox(t, lambda, p),
            Penalty::L1 => soft_threshold(t, lambda),
            Penalty::ElasticNet { eta } => soft_threshold(t, lambda) / (1.0 + lambda * eta),
            Penalty::Quadratic { eta } => t / (1.0 + lambda * eta),
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn soft_threshold(t: f64, lambda: f64) -> f64 {
    sign(t) * (t.abs() - lambda).max(0.0)
}

/// Solves `x + c x^{p-1} = a` on `[0, a]` with `c = λp`, `a = |t|`, by
/// Newton's method safeguarded with bisection.
///
/// The root lies in `[min(a/2, (a/2c)^{1/(p-1)}), min(a, (a/c)^{1/(p-1)})]`,
/// a bracket whose endpoints differ by at most a factor `2^{1/(p-1)}`.
fn lp_prox(t: f64, lambda: f64, p: f64) -> f64 {
    let a = t.abs();
    if a == 0.0 {
        return 0.0;
    }
    let c = lambda * p;
    if p == 2.0 {
        return t / (1.0 + c);
    }
    let q = p - 1.0;
    let inv_q = 1.0 / q;
    let mut hi = a.min((a / c).powf(inv_q));
    let mut lo = (0.5 * a).min((0.5 * a / c).powf(inv_q));
    if !(lo > 0.0) {
        // (a/c)^{1/q} underflowed: the prox is zero to double precision
        return 0.0;
    }
    let mut x = (a - c).clamp(lo, hi);
    for _ in 0..200 {
        let xq = x.powf(q);
        let g = x + c * xq - a;
        if g == 0.0 {
            break;
        }
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dg = 1.0 + c * q * xq / x;
        let mut next = x - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - x).abs() <= LP_PROX_TOL * x;
        x = next;
        if done || hi - lo <= LP_PROX_TOL * lo {
            break;
        }
    }
    x.copysign(t)
}
