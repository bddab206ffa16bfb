//! Finite-dimensional linear operators: dense matrices, circular convolution,
//! orthonormal Haar synthesis, separable Gaussian blur and composition.
//!
//! Every operator exposes `apply` and `apply_adjoint` with respect to the
//! Euclidean inner products on its domain and range. Operators are plain
//! immutable data and can be shared across threads.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::vector::{dot, norm};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Maximum number of power-iteration sweeps in [`LinearOperator::operator_norm`].
pub const POWER_ITERATION_MAX: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    Dense,
    CircularConvolution,
    HaarSynthesis,
    SeparableBlur,
    Composition,
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Circular convolution on `R^n`: `(Ax)_i = sum_j kernel_j x_{(i - j) mod n}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircularConvolution {
    pub kernel: Vec<f64>,
}

/// Orthonormal inverse discrete Haar transform on `R^n`, `n = 2^levels`.
///
/// Coefficients are ordered as the coarsest approximation followed by the
/// detail blocks from coarse to fine (sizes 1, 1, 2, 4, ..., n/2).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaarSynthesis {
    pub n: usize,
}

/// Separable blur `X -> T X T^T` on `n x n` images flattened column-major,
/// with `T` symmetric banded Toeplitz with first row `profile`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparableBlur {
    pub n: usize,
    pub band: usize,
    pub sigma: f64,
    pub profile: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinearOperator {
    Dense(DenseMatrix),
    CircularConvolution(CircularConvolution),
    HaarSynthesis(HaarSynthesis),
    SeparableBlur(SeparableBlur),
    /// `outer ∘ inner`: applies `inner` first.
    Composition {
        outer: Box<LinearOperator>,
        inner: Box<LinearOperator>,
    },
}

impl LinearOperator {
    pub fn dense(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("rows/cols", "dense operator needs positive dimensions"));
        }
        check_len(rows * cols, data.len())?;
        Ok(LinearOperator::Dense(DenseMatrix { rows, cols, data }))
    }

    /// Dense operator from a slice of rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_len(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Self::dense(rows.len(), cols, data)
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::dense(n, n, data)
    }

    pub fn diagonal(d: &[f64]) -> Result<Self> {
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for (i, &di) in d.iter().enumerate() {
            data[i * n + i] = di;
        }
        Self::dense(n, n, data)
    }

    /// Circular convolution with an arbitrary kernel.
    pub fn convolution(kernel: Vec<f64>) -> Result<Self> {
        if kernel.is_empty() {
            return Err(invalid("kernel", "empty convolution kernel"));
        }
        Ok(LinearOperator::CircularConvolution(CircularConvolution { kernel }))
    }

    /// Discretized circular convolution on `[0, 1]` with the indicator of an
    /// interval of the given width.
    ///
    /// The grid weight `1/n` is absorbed into the kernel: the kernel holds
    /// `1/n` on the `m = round(width * n)` samples `0..m`, so convolving the
    /// constant one yields `m/n ≈ width`.
    pub fn circular_convolution(n: usize, width: f64) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", format!("need n >= 2, got {n}")));
        }
        if !(width > 0.0 && width < 1.0) {
            return Err(invalid("width", format!("must lie in (0, 1), got {width}")));
        }
        let m = ((width * n as f64).round() as usize).clamp(1, n);
        let h = 1.0 / n as f64;
        let mut kernel = vec![0.0; n];
        kernel[..m].iter_mut().for_each(|k| *k = h);
        Self::convolution(kernel)
    }

    pub fn haar_synthesis(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(invalid("n", format!("Haar synthesis needs a power of two, got {n}")));
        }
        Ok(LinearOperator::HaarSynthesis(HaarSynthesis { n }))
    }

    /// Separable Gaussian blur on `n x n` images.
    ///
    /// The Toeplitz profile is `z_j = exp(-j^2 / (2 sigma^2)) / (sigma sqrt(2 pi))`
    /// for `j < band` and zero beyond.
    pub fn blur(n: usize, band: usize, sigma: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "image size must be positive"));
        }
        if band == 0 || band > n {
            return Err(invalid("band", format!("need 1 <= band <= {n}, got {band}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid("sigma", format!("must be positive, got {sigma}")));
        }
        let scale = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        let profile = (0..band)
            .map(|j| {
                let j = j as f64;
                scale * (-(j * j) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        Ok(LinearOperator::SeparableBlur(SeparableBlur {
            n,
            band,
            sigma,
            profile,
        }))
    }

    /// `outer ∘ inner`.
    pub fn compose(outer: LinearOperator, inner: LinearOperator) -> Result<Self> {
        check_len(outer.domain_dim(), inner.range_dim())?;
        Ok(LinearOperator::Composition {
            outer: Box::new(outer),
            inner: Box::new(inner),
        })
    }

    pub fn kind(&self) -> OperatorKind {
        match self {
            LinearOperator::Dense(_) => OperatorKind::Dense,
            LinearOperator::CircularConvolution(_) => OperatorKind::CircularConvolution,
            LinearOperator::HaarSynthesis(_) => OperatorKind::HaarSynthesis,
            LinearOperator::SeparableBlur(_) => OperatorKind::SeparableBlur,
            LinearOperator::Composition { .. } => OperatorKind::Composition,
        }
    }

    pub fn domain_dim(&self) -> usize {
        match self {
            LinearOperator::Dense(m) => m.cols,
            LinearOperator::CircularConvolution(c) => c.kernel.len(),
            LinearOperator::HaarSynthesis(h) => h.n,
            LinearOperator::SeparableBlur(b) => b.n * b.n,
            LinearOperator::Composition { inner, .. } => inner.domain_dim(),
        }
    }

    pub fn range_dim(&self) -> usize {
        match self {
            LinearOperator::Dense(m) => m.rows,
            LinearOperator::CircularConvolution(c) => c.kernel.len(),
            LinearOperator::HaarSynthesis(h) => h.n,
            LinearOperator::SeparableBlur(b) => b.n * b.n,
            LinearOperator::Composition { outer, .. } => outer.range_dim(),
        }
    }

    /// Returns `Ax`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.domain_dim(), x.len())?;
        Ok(self.apply_unchecked(x))
    }

    /// Returns `A^* y`.
    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.range_dim(), y.len())?;
        Ok(self.apply_adjoint_unchecked(y))
    }

    pub(crate) fn apply_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match self {
            LinearOperator::Dense(m) => m
                .data
                .chunks_exact(m.cols)
                .map(|row| dot(row, x))
                .collect(),
            LinearOperator::CircularConvolution(c) => c.convolve(x, false),
            LinearOperator::HaarSynthesis(_) => haar_synthesize(x),
            LinearOperator::SeparableBlur(b) => b.apply(x),
            LinearOperator::Composition { outer, inner } => {
                outer.apply_unchecked(&inner.apply_unchecked(x))
            }
        }
    }

    pub(crate) fn apply_adjoint_unchecked(&self, y: &[f64]) -> Vec<f64> {
        match self {
            LinearOperator::Dense(m) => {
                let mut out = vec![0.0; m.cols];
                for (row, &yi) in m.data.chunks_exact(m.cols).zip(y) {
                    for (o, a) in out.iter_mut().zip(row) {
                        *o += a * yi;
                    }
                }
                out
            }
            LinearOperator::CircularConvolution(c) => c.convolve(y, true),
            LinearOperator::HaarSynthesis(_) => haar_analyze(y),
            LinearOperator::SeparableBlur(b) => b.apply(y),
            LinearOperator::Composition { outer, inner } => {
                inner.apply_adjoint_unchecked(&outer.apply_adjoint_unchecked(y))
            }
        }
    }

    /// Estimates `‖A‖` by power iteration on `A^*A`, started from the
    /// normalized all-ones vector.
    ///
    /// Stops once the eigen-residual `‖A^*Av - λv‖` drops below `tol·λ`,
    /// which bounds the relative error of `σ = sqrt(λ)` by `tol`.
    pub fn operator_norm(&self, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(invalid("tol", format!("must be positive, got {tol}")));
        }
        let n = self.domain_dim();
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut lambda = 0.0;
        for _ in 0..POWER_ITERATION_MAX {
            let w = self.apply_adjoint_unchecked(&self.apply_unchecked(&v));
            lambda = dot(&v, &w);
            let wn = norm(&w);
            if wn == 0.0 {
                return Ok(0.0);
            }
            let residual = w
                .iter()
                .zip(&v)
                .map(|(wi, vi)| (wi - lambda * vi).powi(2))
                .sum::<f64>()
                .sqrt();
            if residual <= tol * lambda {
                return Ok(lambda.sqrt());
            }
            v = w.into_iter().map(|wi| wi / wn).collect();
        }
        Err(Error::PowerIteration {
            iterations: POWER_ITERATION_MAX,
            estimate: lambda.max(0.0).sqrt(),
        })
    }

    /// Least-squares projection `Pv` of `v` onto the range of the operator,
    /// computed by CGLS to relative gradient tolerance `tol`.
    pub fn project_onto_range(&self, v: &[f64], tol: f64) -> Result<Vec<f64>> {
        check_len(self.range_dim(), v.len())?;
        let x = cgls(self, v, tol);
        Ok(self.apply_unchecked(&x))
    }

    /// `‖Qv‖ / ‖v‖` where `Q` projects onto the orthogonal complement of the
    /// range, via `‖Qv‖² = ‖v‖² - ‖Pv‖²`.
    pub fn range_complement_ratio(&self, v: &[f64], tol: f64) -> Result<f64> {
        check_len(self.range_dim(), v.len())?;
        let vn2 = dot(v, v);
        if vn2 == 0.0 {
            return Err(invalid("v", "range complement ratio of the zero vector"));
        }
        let pv = self.project_onto_range(v, tol)?;
        let q2 = (vn2 - dot(&pv, &pv)).max(0.0);
        Ok((q2 / vn2).sqrt())
    }
}

impl CircularConvolution {
    fn convolve(&self, x: &[f64], adjoint: bool) -> Vec<f64> {
        let n = self.kernel.len();
        let mut out = vec![0.0; n];
        for (j, &k) in self.kernel.iter().enumerate() {
            if k == 0.0 {
                continue;
            }
            // forward: out[i] += k_j x[i - j]; adjoint: out[i] += k_j x[i + j]
            let shift = if adjoint { j } else { (n - j) % n };
            let (head, tail) = x.split_at(shift);
            for (o, xi) in out.iter_mut().zip(tail.iter().chain(head)) {
                *o += k * xi;
            }
        }
        out
    }
}

fn haar_synthesize(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len();
    let mut out = coeffs.to_vec();
    let mut scratch = vec![0.0; n];
    let mut len = 1;
    while len < n {
        for i in 0..len {
            let a = out[i];
            let d = out[len + i];
            scratch[2 * i] = (a + d) * FRAC_1_SQRT_2;
            scratch[2 * i + 1] = (a - d) * FRAC_1_SQRT_2;
        }
        out[..2 * len].copy_from_slice(&scratch[..2 * len]);
        len *= 2;
    }
    out
}

fn haar_analyze(samples: &[f64]) -> Vec<f64> {
    let n = samples.len();
    let mut out = samples.to_vec();
    let mut scratch = vec![0.0; n];
    let mut len = n;
    while len > 1 {
        let half = len / 2;
        for i in 0..half {
            let s0 = out[2 * i];
            let s1 = out[2 * i + 1];
            scratch[i] = (s0 + s1) * FRAC_1_SQRT_2;
            scratch[half + i] = (s0 - s1) * FRAC_1_SQRT_2;
        }
        out[..len].copy_from_slice(&scratch[..len]);
        len = half;
    }
    out
}

impl SeparableBlur {
    /// `T v` for the banded symmetric Toeplitz factor, on a strided line.
    fn toeplitz_line(&self, src: &[f64], dst: &mut [f64], offset: usize, stride: usize) {
        let n = self.n;
        let z = &self.profile;
        for i in 0..n {
            let lo = i.saturating_sub(z.len() - 1);
            let hi = (i + z.len()).min(n);
            let mut acc = 0.0;
            for j in lo..hi {
                acc += z[i.abs_diff(j)] * src[offset + j * stride];
            }
            dst[offset + i * stride] = acc;
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut tmp = vec![0.0; n * n];
        // T X: columns are contiguous in column-major storage
        for col in 0..n {
            self.toeplitz_line(x, &mut tmp, col * n, 1);
        }
        // (T X) T^T: rows have stride n
        let mut out = vec![0.0; n * n];
        for row in 0..n {
            self.toeplitz_line(&tmp, &mut out, row, n);
        }
        out
    }
}

/// Conjugate gradient on the normal equations, starting from zero.
fn cgls(op: &LinearOperator, b: &[f64], tol: f64) -> Vec<f64> {
    let n = op.domain_dim();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut s = op.apply_adjoint_unchecked(&r);
    let s0 = norm(&s);
    if s0 == 0.0 {
        return x;
    }
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let max_iter = 20 * n + 100;
    for _ in 0..max_iter {
        let q = op.apply_unchecked(&p);
        let qq = dot(&q, &q);
        if qq == 0.0 {
            break;
        }
        let step = gamma / qq;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += step * pi;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= step * qi;
        }
        s = op.apply_adjoint_unchecked(&r);
        let gamma_new = dot(&s, &s);
        if gamma_new.sqrt() <= tol * s0 {
            break;
        }
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
    }
    x
}
