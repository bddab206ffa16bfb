//! Synthetic test problems: sparse deconvolution with a solution that
//! satisfies the source condition exactly, a separable image deblurring
//! problem, exact-level noise and the noise-condition diagnostic.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::linops::LinearOperator;
use crate::penalty::Penalty;
use crate::rng::SplitMix64;
use crate::vector::{norm, sub};

/// CGLS tolerance used for the noise-condition ratio.
pub const NOISE_CONDITION_TOL: f64 = 1e-12;

/// Relative tolerance of the stored operator norm.
pub const OPERATOR_NORM_TOL: f64 = 1e-10;

/// Entries below this fraction of the largest magnitude are not counted as
/// support of `x†`.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

/// Scale of the default source profile. Since `x†` grows like the fifth
/// power of `w` for `p = 1.2`, this sets `‖y†‖` to order one.
pub const DEFAULT_AMPLITUDE: f64 = 28.0;

/// A step `value · 1[start, end)` of the source profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub start: f64,
    pub end: f64,
    pub value: f64,
}

/// A Gaussian bump `height · exp(−(t − center)² / (2 width²))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
    pub height: f64,
}

/// Piecewise-constant-plus-smooth profile on `[0, 1]` for the source element
/// `w`, multiplied by `amplitude`.
///
/// Vectors hold `L²`-normalized samples `w(t_i)/√n` at the cell midpoints
/// `t_i = (i + ½)/n`, so Euclidean norms approximate norms in `L²[0, 1]`
/// and the problem scale does not depend on `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WSpec {
    pub steps: Vec<Step>,
    pub bumps: Vec<Bump>,
    pub amplitude: f64,
}

impl Default for WSpec {
    /// Two plateaus at `1` and `−½` and a smooth bump, so the profile stays
    /// in `[−½, 1]` before scaling.
    fn default() -> Self {
        WSpec {
            steps: vec![
                Step { start: 0.1, end: 0.35, value: 1.0 },
                Step { start: 0.5, end: 0.65, value: -0.5 },
            ],
            bumps: vec![Bump { center: 0.82, width: 0.05, height: 0.7 }],
            amplitude: DEFAULT_AMPLITUDE,
        }
    }
}

impl WSpec {
    pub fn eval(&self, t: f64) -> f64 {
        let steps: f64 = self
            .steps
            .iter()
            .filter(|s| t >= s.start && t < s.end)
            .map(|s| s.value)
            .sum();
        let bumps: f64 = self
            .bumps
            .iter()
            .map(|b| b.height * (-0.5 * ((t - b.center) / b.width).powi(2)).exp())
            .sum();
        self.amplitude * (steps + bumps)
    }

    pub fn sample(&self, n: usize) -> Vec<f64> {
        let h = 1.0 / n as f64;
        (0..n).map(|i| self.eval((i as f64 + 0.5) * h) * h.sqrt()).collect()
    }
}

/// Parameters a [`ProblemInstance`] was generated from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
pub enum ProblemParams {
    Deconvolution {
        n: usize,
        p: f64,
        width: f64,
        w_spec: WSpec,
    },
    Blur {
        n: usize,
        band: usize,
        sigma: f64,
        eta: f64,
    },
    /// Loaded or assembled by hand.
    Custom,
}

/// Default geometric α-grid `α_k = alpha0 · q^k`, `k < count`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alpha0: f64,
    pub q: f64,
    pub count: usize,
}

impl GridSpec {
    /// `α_0 = ‖K‖²`, `q = 0.8`, 60 points: usable without knowing δ.
    pub fn heuristic(operator_norm: f64) -> Self {
        GridSpec {
            alpha0: operator_norm * operator_norm,
            q: 0.8,
            count: 60,
        }
    }

    pub fn alphas(&self) -> Vec<f64> {
        crate::solver::geometric_grid(self.alpha0, self.q, self.count)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub params: ProblemParams,
    pub op: LinearOperator,
    pub penalty: Penalty,
    pub operator_norm: f64,
    pub x_dagger: Vec<f64>,
    /// A subgradient of the penalty at `x†`; equals `K^*w` when `w` is known.
    pub xi_dagger: Vec<f64>,
    /// Source element, when the source condition holds by construction.
    pub w: Option<Vec<f64>>,
    pub y_dagger: Vec<f64>,
    pub y_delta: Vec<f64>,
    pub delta: f64,
    pub seed: u64,
    /// `‖Q(y^δ − y†)‖/‖y^δ − y†‖`; absent for noise-free data.
    pub epsilon_hat: Option<f64>,
    pub grid: GridSpec,
    pub notes: Vec<String>,
}

impl ProblemInstance {
    /// Number of entries of `x†` above [`SUPPORT_THRESHOLD`] relative to the
    /// largest.
    pub fn support_size(&self) -> usize {
        let max = self.x_dagger.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        self.x_dagger
            .iter()
            .filter(|v| v.abs() > SUPPORT_THRESHOLD * max)
            .count()
    }

    /// Same problem with fresh noise of level `delta`.
    pub fn with_noise(&self, delta: f64, seed: u64) -> Result<Self> {
        let mut out = self.clone();
        out.y_delta = add_noise(&self.y_dagger, delta, seed)?;
        out.delta = delta;
        out.seed = seed;
        out.epsilon_hat = epsilon_if_noisy(&out.op, &out.y_dagger, &out.y_delta)?;
        Ok(out)
    }
}

/// `ξ = K^*w` and `x†_k = sign(ξ_k)|ξ_k/p|^{1/(p−1)}`, so that `ξ` is the
/// gradient of `Σ|x_k|^p` at `x†`.
pub fn construct_source_solution(op: &LinearOperator, w: &[f64], p: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    Penalty::lp_power(p)?;
    let xi = op.apply_adjoint(w)?;
    let e = 1.0 / (p - 1.0);
    let x = xi.iter().map(|&v| (v / p).abs().powf(e).copysign(v) * (v != 0.0) as u8 as f64).collect();
    Ok((xi, x))
}

/// `y† + δ g/‖g‖` with `g` standard normal from [`SplitMix64`] seeded with
/// `seed`, so that `‖y^δ − y†‖ = δ`.
pub fn add_noise(y_dagger: &[f64], delta: f64, seed: u64) -> Result<Vec<f64>> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(invalid("delta", format!("must be nonnegative, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(y_dagger.to_vec());
    }
    let g = SplitMix64::new(seed).normals(y_dagger.len());
    let s = delta / norm(&g);
    Ok(y_dagger.iter().zip(&g).map(|(y, gi)| y + s * gi).collect())
}

/// Fraction `‖Q(y^δ − y†)‖/‖y^δ − y†‖` of the noise outside the range of
/// the operator.
pub fn noise_condition_epsilon(op: &LinearOperator, y_dagger: &[f64], y_delta: &[f64]) -> Result<f64> {
    check_len(y_dagger.len(), y_delta.len())?;
    let noise = sub(y_delta, y_dagger);
    if norm(&noise) == 0.0 {
        return Err(invalid("y_delta", "noise condition is undefined for noise-free data"));
    }
    op.range_complement_ratio(&noise, NOISE_CONDITION_TOL)
}

fn epsilon_if_noisy(op: &LinearOperator, y_dagger: &[f64], y_delta: &[f64]) -> Result<Option<f64>> {
    if y_dagger == y_delta {
        Ok(None)
    } else {
        noise_condition_epsilon(op, y_dagger, y_delta).map(Some)
    }
}

/// Haar-wavelet deconvolution: `K = A∘B` with `A` circular convolution with
/// the indicator of an interval of width `0.2` and `B` orthonormal Haar
/// synthesis, `R = Σ|x_k|^p`, and `x†` built from `w_spec`.
pub fn deconvolution_problem(n: usize, p: f64, w_spec: &WSpec, delta: f64, seed: u64) -> Result<ProblemInstance> {
    deconvolution_problem_with_width(n, p, 0.2, w_spec, delta, seed)
}

pub fn deconvolution_problem_with_width(
    n: usize,
    p: f64,
    width: f64,
    w_spec: &WSpec,
    delta: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    let penalty = Penalty::lp_power(p)?;
    let op = LinearOperator::compose(
        LinearOperator::circular_convolution(n, width)?,
        LinearOperator::haar_synthesis(n)?,
    )?;
    let w = w_spec.sample(n);
    let (xi, x_dagger) = construct_source_solution(&op, &w, p)?;
    let y_dagger = op.apply(&x_dagger)?;
    let y_delta = add_noise(&y_dagger, delta, seed)?;
    let epsilon_hat = epsilon_if_noisy(&op, &y_dagger, &y_delta)?;
    let operator_norm = op.operator_norm(OPERATOR_NORM_TOL)?;
    let mut notes = Vec::new();
    if epsilon_hat.is_none() {
        notes.push("noise-free data: noise condition undefined".to_string());
    }
    Ok(ProblemInstance {
        params: ProblemParams::Deconvolution {
            n,
            p,
            width,
            w_spec: w_spec.clone(),
        },
        op,
        penalty,
        operator_norm,
        x_dagger,
        xi_dagger: xi,
        w: Some(w),
        y_dagger,
        y_delta,
        delta,
        seed,
        epsilon_hat,
        grid: GridSpec::heuristic(operator_norm),
        notes,
    })
}

/// Nonnegative piecewise-constant `n×n` test image, flattened column-major:
/// a flat ellipse of height 1 containing a smaller one of height 2, a
/// triangle of height 3 and a thin cross of height 4. Shapes are laid out
/// in units of `n/6`, `n/3` and `n/12` pixels and clipped to the image.
pub fn shapes_image(n: usize) -> Vec<f64> {
    let r = |d: f64| (n as f64 / d).round() as usize;
    let (n2, n3, n6, n12) = (r(2.0), r(3.0), r(6.0), r(12.0));
    let mut img = vec![0.0; n * n];
    let mut set = |row: usize, col: usize, v: f64| {
        if row < n && col < n {
            img[col * n + row] = v;
        }
    };
    // quarter ellipse mirrored into a 2n6 × 2n3 block
    let ellipse = |i: usize, j: usize, radius2: f64| {
        let (a, b) = (i.abs_diff(n6) as f64, j.abs_diff(n3) as f64);
        let (a, b) = (if i < n6 { a } else { a + 1.0 }, if j < n3 { b } else { b + 1.0 });
        (a / n6 as f64).powi(2) + (b / n3 as f64).powi(2) < radius2
    };
    let mut outer = vec![vec![0.0; 2 * n3]; 2 * n6];
    for (i, row) in outer.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if ellipse(i, j, 1.0) {
                *v = 1.0;
            }
        }
    }
    let mut values = std::collections::HashMap::new();
    for (i, row) in outer.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            values.insert((2 + i, n3 - 1 + j), v);
        }
    }
    for i in 0..2 * n6 {
        for j in 0..2 * n3 {
            if ellipse(i, j, 0.6) {
                let e = values.entry((n6 + i, n3 - 1 + j)).or_insert(0.0);
                *e = (*e + 2.0_f64).min(2.0);
            }
        }
    }
    for ((row, col), v) in values {
        set(row, col, v);
    }
    // upper-triangular block
    for i in 0..n3 {
        for j in 0..n3 {
            set(n3 + n12 + i, 1 + j, if j >= i { 3.0 } else { 0.0 });
        }
    }
    // cross in a (2n6 + 1)² block
    let m = 2 * n6 + 1;
    for i in 0..m {
        for j in 0..m {
            set(n2 + n12 + i, n2 + j, if i == n6 || j == n6 { 4.0 } else { 0.0 });
        }
    }
    img
}

/// Image deblurring: `K` the separable Gaussian blur, `R` the elastic net
/// `‖x‖₁ + (η/2)‖x‖²`, `x†` the [`shapes_image`].
///
/// No source element is constructed; `xi_dagger = sign(x†) + ηx†`, the
/// subgradient with zero entries off the support.
pub fn blur_problem(n: usize, band: usize, sigma: f64, eta: f64, delta: f64, seed: u64) -> Result<ProblemInstance> {
    let op = LinearOperator::blur(n, band, sigma)?;
    let penalty = Penalty::elastic_net(eta)?;
    let x_dagger = shapes_image(n);
    let xi_dagger = penalty.subgradient(&x_dagger);
    let y_dagger = op.apply(&x_dagger)?;
    let y_delta = add_noise(&y_dagger, delta, seed)?;
    let epsilon_hat = epsilon_if_noisy(&op, &y_dagger, &y_delta)?;
    let operator_norm = op.operator_norm(OPERATOR_NORM_TOL)?;
    let mut notes = Vec::new();
    if eta == 0.0 {
        notes.push("eta = 0: pure l1 penalty, minimizers need not be unique".to_string());
    }
    if epsilon_hat.is_none() {
        notes.push("noise-free data: noise condition undefined".to_string());
    }
    Ok(ProblemInstance {
        params: ProblemParams::Blur { n, band, sigma, eta },
        op,
        penalty,
        operator_norm,
        x_dagger,
        xi_dagger,
        w: None,
        y_dagger,
        y_delta,
        delta,
        seed,
        epsilon_hat,
        grid: GridSpec::heuristic(operator_norm),
        notes,
    })
}

const MANIFEST: &str = "manifest.json";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: u32,
    params: ProblemParams,
    operator: LinearOperator,
    penalty: Penalty,
    domain_dim: usize,
    range_dim: usize,
    operator_norm: f64,
    delta: f64,
    seed: u64,
    epsilon_hat: Option<f64>,
    grid: GridSpec,
    support_size: usize,
    notes: Vec<String>,
    /// Vector name to file name, each file raw little-endian `f64`.
    vectors: Vec<(String, String)>,
}

pub fn write_f64_file(path: &Path, v: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_f64_file(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Manifest(format!(
            "{}: length {} is not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

impl ProblemInstance {
    /// Writes `manifest.json` and one raw float file per vector into `dir`,
    /// creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut vectors = vec![
            ("x_dagger", &self.x_dagger),
            ("xi_dagger", &self.xi_dagger),
            ("y_dagger", &self.y_dagger),
            ("y_delta", &self.y_delta),
        ];
        if let Some(w) = &self.w {
            vectors.push(("w", w));
        }
        let mut names = Vec::new();
        for (name, v) in vectors {
            let file = format!("{name}.f64");
            write_f64_file(&dir.join(&file), v)?;
            names.push((name.to_string(), file));
        }
        let manifest = Manifest {
            format: 1,
            params: self.params.clone(),
            operator: self.op.clone(),
            penalty: self.penalty,
            domain_dim: self.op.domain_dim(),
            range_dim: self.op.range_dim(),
            operator_norm: self.operator_norm,
            delta: self.delta,
            seed: self.seed,
            epsilon_hat: self.epsilon_hat,
            grid: self.grid,
            support_size: self.support_size(),
            notes: self.notes.clone(),
            vectors: names,
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Manifest(e.to_string()))?;
        fs::write(dir.join(MANIFEST), json + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
        if m.format != 1 {
            return Err(Error::Manifest(format!("unsupported format version {}", m.format)));
        }
        if m.operator.domain_dim() != m.domain_dim || m.operator.range_dim() != m.range_dim {
            return Err(Error::Manifest("operator dimensions disagree with manifest".into()));
        }
        let get = |name: &str| -> Result<Option<Vec<f64>>> {
            match m.vectors.iter().find(|(n, _)| n == name) {
                Some((_, file)) => read_f64_file(&dir.join(file)).map(Some),
                None => Ok(None),
            }
        };
        let need = |name: &str, len: usize| -> Result<Vec<f64>> {
            let v = get(name)?.ok_or_else(|| Error::Manifest(format!("missing vector `{name}`")))?;
            if v.len() != len {
                return Err(Error::Manifest(format!(
                    "vector `{name}` has length {}, expected {len}",
                    v.len()
                )));
            }
            Ok(v)
        };
        let w = get("w")?;
        if let Some(w) = &w {
            if w.len() != m.range_dim {
                return Err(Error::Manifest("vector `w` has the wrong length".into()));
            }
        }
        Ok(ProblemInstance {
            x_dagger: need("x_dagger", m.domain_dim)?,
            xi_dagger: need("xi_dagger", m.domain_dim)?,
            y_dagger: need("y_dagger", m.range_dim)?,
            y_delta: need("y_delta", m.range_dim)?,
            w,
            params: m.params,
            op: m.operator,
            penalty: m.penalty,
            operator_norm: m.operator_norm,
            delta: m.delta,
            seed: m.seed,
            epsilon_hat: m.epsilon_hat,
            grid: m.grid,
            notes: m.notes,
        })
    }
}
