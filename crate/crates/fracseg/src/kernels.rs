//! Half-space Poisson kernel `P⁰(x,y) = c y^{2s} (|x|²+y²)^{-(n+2s)/2}`,
//! its Fourier profile Φ solving `Φ'' + a t^{-1} Φ' - Φ = 0`, hyperbolic
//! distance, empirical Harnack and gradient constants of sampled positive
//! fields, and checks of the mean-value, sup and Robin decay bounds.

use std::io::Write;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::Mat;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::core::quadrature::gauss_legendre;
use crate::core::{weighted_volume_integral, FracParam, LogPolarGrid, ThetaRule};
use crate::error::{Error, Result};
use crate::solver::DtnSystem;

/// Kernel in dimension `n` with unit mass on every horizontal line.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KernelEval {
    pub n: usize,
    pub params: FracParam,
    pub normalization: f64,
}

impl KernelEval {
    /// `c = Γ(n/2+s) / (π^{n/2} Γ(s))`.
    pub fn new(n: usize, params: FracParam) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        let s = params.s();
        let h = 0.5 * n as f64;
        let normalization = (ln_gamma(h + s) - ln_gamma(s) - h * std::f64::consts::PI.ln()).exp();
        Ok(Self { n, params, normalization })
    }

    /// Kernel mass outside `[lo, hi]` for the line kernel centred at `x`.
    pub fn tail_mass(&self, x: f64, y: f64, lo: f64, hi: f64) -> Result<f64> {
        if self.n != 1 {
            return Err(Error::Domain("tail mass is available for n = 1 only".into()));
        }
        let s = self.params.s();
        let side = |d: f64| {
            if d <= 0.0 {
                1.0 - 0.5 * beta_reg(s, 0.5, y * y / (d * d + y * y))
            } else {
                0.5 * beta_reg(s, 0.5, y * y / (d * d + y * y))
            }
        };
        Ok(side(x - lo) + side(hi - x))
    }
}

/// `P⁰(x, y)` with the unit-mass normalization.
pub fn poisson_kernel(x: &[f64], y: f64, eval: &KernelEval) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!("height must be positive, got {y}")));
    }
    if x.len() != eval.n {
        return Err(Error::Structural(format!("point has {} coordinates, expected {}", x.len(), eval.n)));
    }
    let s = eval.params.s();
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let q = 1.0 + r2 / (y * y);
    Ok(eval.normalization * y.powf(-(eval.n as f64)) * q.powf(-0.5 * (eval.n as f64 + 2.0 * s)))
}

/// Positive samples on a rectangular `(x, y)` grid; `values[(k, i)]` sits at
/// `(xs[i], ys[k])`.
#[derive(Debug, Clone)]
pub struct SampledField {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Array2<f64>,
}

impl SampledField {
    pub fn from_fn<F: Fn(f64, f64) -> f64>(xs: Vec<f64>, ys: Vec<f64>, f: F) -> Self {
        let values = Array2::from_shape_fn((ys.len(), xs.len()), |(k, i)| f(xs[i], ys[k]));
        Self { xs, ys, values }
    }

    fn cell(nodes: &[f64], v: f64) -> Option<(usize, f64)> {
        let n = nodes.len();
        if n < 2 || v < nodes[0] || v > nodes[n - 1] {
            return None;
        }
        let i = nodes.partition_point(|p| *p <= v).saturating_sub(1).min(n - 2);
        Some((i, (v - nodes[i]) / (nodes[i + 1] - nodes[i])))
    }

    fn bilinear(&self, data: &Array2<f64>, x: f64, y: f64) -> Option<f64> {
        let (i, fx) = Self::cell(&self.xs, x)?;
        let (k, fy) = Self::cell(&self.ys, y)?;
        let lo = data[(k, i)] * (1.0 - fx) + data[(k, i + 1)] * fx;
        let hi = data[(k + 1, i)] * (1.0 - fx) + data[(k + 1, i + 1)] * fx;
        Some(lo * (1.0 - fy) + hi * fy)
    }

    /// Bilinear interpolation; `None` outside the sampled rectangle.
    pub fn value(&self, x: f64, y: f64) -> Option<f64> {
        self.bilinear(&self.values, x, y)
    }

    /// `y |∇u| / u` from nodal central differences, interpolated bilinearly.
    fn gradient_ratio(&self) -> Array2<f64> {
        let (ny, nx) = self.values.dim();
        let d = |nodes: &[f64], k: usize, n: usize, get: &dyn Fn(usize) -> f64| {
            let (a, b) = if k == 0 { (0, 1) } else if k == n - 1 { (n - 2, n - 1) } else { (k - 1, k + 1) };
            (get(b) - get(a)) / (nodes[b] - nodes[a])
        };
        Array2::from_shape_fn((ny, nx), |(k, i)| {
            let gx = d(&self.xs, i, nx, &|c| self.values[(k, c)]);
            let gy = d(&self.ys, k, ny, &|c| self.values[(c, i)]);
            self.ys[k] * gx.hypot(gy) / self.values[(k, i)]
        })
    }
}

/// Trapezoid convolution of line data `g` on sorted nodes `xs` with
/// `P⁰(·, y)`, evaluated at `x_eval × y_levels`. Data are taken as zero
/// outside the window; the missing kernel mass times the edge values must be
/// below `1e-6` of each result.
pub fn poisson_extend(xs: &[f64], g: &[f64], x_eval: &[f64], y_levels: &[f64], eval: &KernelEval) -> Result<SampledField> {
    if eval.n != 1 {
        return Err(Error::Domain("extension is implemented for n = 1".into()));
    }
    if xs.len() != g.len() || xs.len() < 2 {
        return Err(Error::Structural("data nodes and values must match and have two or more entries".into()));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Structural("data nodes must be strictly increasing".into()));
    }
    if g.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain("boundary data must be nonnegative".into()));
    }
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let q: Vec<f64> = (0..xs.len())
        .map(|k| {
            let l = if k > 0 { xs[k] - xs[k - 1] } else { 0.0 };
            let r = if k + 1 < xs.len() { xs[k + 1] - xs[k] } else { 0.0 };
            0.5 * (l + r) * g[k]
        })
        .collect();
    let mut values = Array2::<f64>::zeros((y_levels.len(), x_eval.len()));
    for (k, &y) in y_levels.iter().enumerate() {
        for (i, &x) in x_eval.iter().enumerate() {
            let mut acc = 0.0;
            for (xi, qi) in xs.iter().zip(&q) {
                acc += qi * poisson_kernel(&[x - xi], y, eval)?;
            }
            let edge = g[0].max(g[g.len() - 1]);
            let missing = eval.tail_mass(x, y, lo, hi)? * edge;
            if missing > 1e-6 * acc.max(f64::MIN_POSITIVE) {
                return Err(Error::Truncation(format!(
                    "kernel tail outside [{lo}, {hi}] carries {missing:e} at ({x}, {y})"
                )));
            }
            values[(k, i)] = acc;
        }
    }
    Ok(SampledField { xs: x_eval.to_vec(), ys: y_levels.to_vec(), values })
}

/// Decaying solution of `Φ'' + a t^{-1} Φ' - Φ = 0` with `Φ(0) = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct PhiSolution {
    pub s: f64,
    pub t: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    /// Coefficient of the `t^{2s}` Frobenius branch.
    pub singular_coefficient: f64,
    /// `Φ(0⁺)` from a least-squares fit of `{1, t^{2s}, t²}` on the smallest nodes.
    pub phi0: f64,
}

impl PhiSolution {
    /// Cubic Hermite interpolation of `Φ` on the solved range.
    pub fn value(&self, t: f64) -> Option<f64> {
        let n = self.t.len();
        if t < self.t[0] || t > self.t[n - 1] {
            return None;
        }
        let i = self.t.partition_point(|v| *v <= t).saturating_sub(1).min(n - 2);
        let h = self.t[i + 1] - self.t[i];
        let x = (t - self.t[i]) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * x) * (1.0 - x).powi(2),
            x * (1.0 - x).powi(2),
            x * x * (3.0 - 2.0 * x),
            x * x * (x - 1.0),
        );
        Some(h00 * self.phi[i] + h10 * h * self.dphi[i] + h01 * self.phi[i + 1] + h11 * h * self.dphi[i + 1])
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,phi,dphi")?;
        for i in 0..self.t.len() {
            writeln!(w, "{:.17e},{:.17e},{:.17e}", self.t[i], self.phi[i], self.dphi[i])?;
        }
        Ok(())
    }
}

/// Frobenius series `t^{e} Σ c_k t^{2k}` and its derivative, with
/// `c_k = c_{k-1} / ((2k+e)(2k+e-1+a))`.
fn frobenius(t: f64, e: f64, a: f64) -> (f64, f64) {
    let (mut c, mut v, mut d) = (1.0, 0.0, 0.0);
    for k in 0..30 {
        let p = e + 2.0 * k as f64;
        if k > 0 {
            c /= p * (p - 1.0 + a);
        }
        v += c * t.powf(p);
        if p != 0.0 {
            d += c * p * t.powf(p - 1.0);
        }
    }
    (v, d)
}

/// Logarithmic derivative of `t^s K_s(t)` from the large-argument series.
fn decaying_log_derivative(t: f64, s: f64) -> f64 {
    let mu = 4.0 * s * s;
    let (mut c, mut sum, mut dsum) = (1.0, 1.0, 0.0);
    for k in 1..10 {
        let kf = k as f64;
        c *= (mu - (2.0 * kf - 1.0).powi(2)) / (8.0 * kf);
        sum += c * t.powf(-kf);
        dsum -= kf * c * t.powf(-kf - 1.0);
    }
    s / t - 1.0 - 0.5 / t + dsum / sum
}

fn rk4_step(t: f64, y: [f64; 2], h: f64, a: f64) -> [f64; 2] {
    let f = |t: f64, y: [f64; 2]| [y[1], y[0] - a / t * y[1]];
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
    let k3 = f(t + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
    let k4 = f(t + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Integrates the decaying branch backward from `T_max`, matches it to the
/// regular and `t^{2s}` Frobenius branches at the smallest node and
/// normalizes by the regular coefficient.
pub fn solve_phi(params: FracParam, t_max: f64) -> Result<PhiSolution> {
    if !(10.0..=500.0).contains(&t_max) {
        return Err(Error::Domain(format!("T_max must lie in [10, 500], got {t_max}")));
    }
    let s = params.s();
    let a = params.a();
    let eps: f64 = 1e-4;
    let n_geo = 800;
    let mut t: Vec<f64> = (0..n_geo).map(|k| eps * (1.0 / eps).powf(k as f64 / n_geo as f64)).collect();
    let n_uni = ((t_max - 1.0) * 400.0).ceil() as usize;
    t.extend((0..=n_uni).map(|k| 1.0 + (t_max - 1.0) * k as f64 / n_uni as f64));
    let n = t.len();
    let mut y = vec![[0.0; 2]; n];
    let v0 = (-t_max).exp();
    y[n - 1] = [v0, decaying_log_derivative(t_max, s) * v0];
    for k in (0..n - 1).rev() {
        y[k] = rk4_step(t[k + 1], y[k + 1], t[k] - t[k + 1], a);
    }
    let (r, dr) = frobenius(eps, 0.0, a);
    let (g, dg) = frobenius(eps, 1.0 - a, a);
    let det = r * dg - g * dr;
    let ca = (y[0][0] * dg - g * y[0][1]) / det;
    let cb = (r * y[0][1] - dr * y[0][0]) / det;
    if !(ca > 0.0) || !ca.is_finite() {
        return Err(Error::numerical("matching produced a nonpositive regular coefficient"));
    }
    let phi: Vec<f64> = y.iter().map(|v| v[0] / ca).collect();
    let dphi: Vec<f64> = y.iter().map(|v| v[1] / ca).collect();
    if phi.iter().any(|v| !(*v > 0.0)) || dphi.iter().any(|v| !(*v < 0.0)) {
        return Err(Error::numerical("Φ is not positive and decreasing on the solved range"));
    }
    let m = 8;
    let basis = |x: f64| [1.0, x.powf(2.0 * s), x * x];
    let a_mat = Mat::<f64>::from_fn(m, 3, |i, j| basis(t[i])[j]);
    let b = Mat::<f64>::from_fn(m, 1, |i, _| phi[i]);
    let lhs = a_mat.transpose() * &a_mat;
    let rhs = a_mat.transpose() * &b;
    let coef = lhs.partial_piv_lu().solve(&rhs);
    Ok(PhiSolution { s, t, phi, dphi, singular_coefficient: cb / ca, phi0: coef[(0, 0)] })
}

/// Hyperbolic distance in the upper half-space, via `acosh(1+δ) = log1p(δ + √(δ(δ+2)))`.
pub fn hyperbolic_distance(x1: &[f64], y1: f64, x2: &[f64], y2: f64) -> Result<f64> {
    if !(y1 > 0.0 && y2 > 0.0) {
        return Err(Error::Domain("heights must be positive".into()));
    }
    if x1.len() != x2.len() {
        return Err(Error::Structural("points have different dimensions".into()));
    }
    let dx2: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
    let d = (dx2 + (y1 - y2).powi(2)) / (2.0 * y1 * y2);
    Ok((d + (d * (d + 2.0)).sqrt()).ln_1p())
}

#[derive(Debug, Clone, Serialize)]
pub struct HarnackReport {
    /// `sup |log(u(z₂)/u(z₁))| / dist_H(z₁, z₂)` over sampled pairs.
    pub yau_constant: f64,
    /// `sup y |∇u| / u` over sampled points.
    pub gradient_constant: f64,
    /// `sup_{centres} sup_{B_{y/2}} u / inf_{B_{y/2}} u`.
    pub ball_ratio: f64,
    pub pairs: usize,
    pub seed: u64,
}

/// Monte-Carlo pairs: for each centre, `samples` points uniform in the
/// hyperbolic ball of radius 1 and in the Euclidean ball of radius `y/2`.
pub fn harnack_certificate(field: &SampledField, centers: &[(f64, f64)], samples: usize, seed: u64) -> Result<HarnackReport> {
    if field.values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("field must be positive".into()));
    }
    let grad = field.gradient_ratio();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut disk = |cx: f64, cy: f64, rad: f64| {
        let r = rad * rng.random::<f64>().sqrt();
        let th = std::f64::consts::TAU * rng.random::<f64>();
        (cx + r * th.cos(), cy + r * th.sin())
    };
    let (mut yau, mut gmax, mut ball, mut pairs) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for &(x0, y0) in centers {
        let u0 = field
            .value(x0, y0)
            .ok_or_else(|| Error::Domain(format!("centre ({x0}, {y0}) outside the sampled field")))?;
        gmax = gmax.max(field.bilinear(&grad, x0, y0).unwrap_or(0.0));
        let (ch, rh) = (1f64.cosh(), 1f64.sinh());
        let (mut bmax, mut bmin) = (u0, u0);
        for _ in 0..samples {
            let (x, y) = disk(x0, y0 * ch, y0 * rh);
            if let Some(u) = field.value(x, y) {
                let d = hyperbolic_distance(&[x0], y0, &[x], y)?;
                if d > 1e-3 {
                    yau = yau.max((u / u0).ln().abs() / d);
                    pairs += 1;
                }
                gmax = gmax.max(field.bilinear(&grad, x, y).unwrap_or(0.0));
            }
            let (x, y) = disk(x0, y0, 0.5 * y0);
            if let Some(u) = field.value(x, y) {
                bmax = bmax.max(u);
                bmin = bmin.min(u);
            }
        }
        ball = ball.max(bmax / bmin);
    }
    Ok(HarnackReport { yau_constant: yau, gradient_constant: gmax, ball_ratio: ball, pairs, seed })
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanValueCheck {
    pub radii: Vec<f64>,
    /// `r^{-n-a} ∫_{∂B_r⁺} y^a |z|²`.
    pub means: Vec<f64>,
    /// Same for `u ≡ 1`.
    pub constant_means: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SupBoundCheck {
    /// `sup_{B_{1/2}⁺} u / ∫_{B_1⁺} y^a u` at two quadrature levels.
    pub constants: [f64; 2],
    pub drift: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RobinCheck {
    pub m: Vec<f64>,
    /// `sup_{∂⁰B_{1/2}⁺} v / ∫_{B_1⁺} y^a v`.
    pub sups: Vec<f64>,
    /// `sup(M=10) / sup(M=100)`.
    pub ratio_10_100: f64,
    /// `max / min` of `M · sup` over all `M`.
    pub spread: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AppendixReport {
    pub mean_value: MeanValueCheck,
    pub sup_bound: SupBoundCheck,
    pub robin: RobinCheck,
    pub pass: bool,
    pub failures: Vec<String>,
}

fn mean_value_check(params: FracParam) -> Result<MeanValueCheck> {
    let rule = ThetaRule::gauss_jacobi(64, params.a())?;
    let radii: Vec<f64> = (0..12).map(|k| 0.05 * 20f64.powf(k as f64 / 11.0)).collect();
    // For n = 1 the factors r^{-1-a} and r^{1+a} of the surface element cancel.
    let mean = |r: f64, f: &dyn Fn(f64, f64) -> f64| rule.integrate(|th| f(r * th.cos(), r * th.sin()));
    let means: Vec<f64> = radii.iter().map(|&r| mean(r, &|x, y| x * x + y * y)).collect();
    let constant_means: Vec<f64> = radii.iter().map(|&r| mean(r, &|_, _| 1.0)).collect();
    let mono = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    let pass = mono(&means) && mono(&constant_means);
    Ok(MeanValueCheck { radii, means, constant_means, pass })
}

fn sup_bound_constant(params: FracParam, n: usize) -> Result<f64> {
    let rule = ThetaRule::gauss_jacobi(n, params.a())?;
    let (x, w) = gauss_legendre(n);
    let a = params.a();
    let mut integral = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let rho = 0.5 * (xi + 1.0);
        integral += 0.5 * wi * rho.powf(1.0 + a) * rule.integrate(|th| (rho * th.cos()).powi(2) + (rho * th.sin()).powi(2));
    }
    let mut sup = 0.0f64;
    for k in 0..=n {
        let rho = 0.5 * k as f64 / n as f64;
        for th in &rule.nodes {
            sup = sup.max((rho * th.cos()).powi(2) + (rho * th.sin()).powi(2));
        }
    }
    Ok(sup / integral)
}

/// `L_a v = 0` in `B_1⁺`, `v = 1` on the arc, `∂_y^a v = M v` on the flat part.
fn robin_sup(params: FracParam, m: f64) -> Result<f64> {
    let grid = Arc::new(LogPolarGrid::new(-8.0, 0.0, 257, 32, params)?);
    let sys = DtnSystem::build(grid.clone())?;
    let rows = sys.rows();
    let wdir = vec![1.0; grid.n_cols()];
    let f = sys.forcing(&wdir);
    let mut k = sys.matrix.clone();
    for i in 0..2 * rows {
        k[(i, i)] -= ((1.0 - params.a()) * grid.t_nodes[i % rows]).exp() * m;
    }
    let rhs = Mat::<f64>::from_fn(2 * rows, 1, |i, _| -f[i]);
    let sol = k.partial_piv_lu().solve(&rhs);
    let g: Vec<f64> = (0..2 * rows).map(|i| sol[(i, 0)]).collect();
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("Robin model problem produced non-finite traces"));
    }
    let field = sys.reconstruct(&g, &wdir)?;
    let mass = weighted_volume_integral(&field, (-8f64).exp(), 1.0)?;
    let half = 0.5f64.ln();
    let sup = (0..rows)
        .filter(|&i| grid.t_nodes[i] <= half + 1e-12)
        .map(|i| g[i].abs().max(g[i + rows].abs()))
        .fold(0.0, f64::max);
    Ok(sup / mass)
}

fn robin_check(params: FracParam) -> Result<RobinCheck> {
    let m = vec![10.0, 100.0, 1000.0];
    let sups = m.iter().map(|&mm| robin_sup(params, mm)).collect::<Result<Vec<_>>>()?;
    let scaled: Vec<f64> = m.iter().zip(&sups).map(|(a, b)| a * b).collect();
    let spread = scaled.iter().cloned().fold(0.0, f64::max) / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio_10_100 = sups[0] / sups[1];
    let pass = (5.0..=20.0).contains(&ratio_10_100) && spread <= 3.0;
    Ok(RobinCheck { m, sups, ratio_10_100, spread, pass })
}

/// Mean-value monotonicity for `|z|²`, a refinement-stable sup constant,
/// and the `1/M` decay of the Robin model problem.
pub fn appendix_checks(params: FracParam) -> Result<AppendixReport> {
    let mean_value = mean_value_check(params)?;
    let constants = [sup_bound_constant(params, 32)?, sup_bound_constant(params, 64)?];
    let drift = (constants[1] - constants[0]).abs() / constants[1];
    let sup_bound = SupBoundCheck { constants, drift, pass: drift <= 0.1 };
    let robin = robin_check(params)?;
    let mut failures = Vec::new();
    if !mean_value.pass {
        failures.push("mean-value monotonicity".to_string());
    }
    if !sup_bound.pass {
        failures.push("sup bound".to_string());
    }
    if !robin.pass {
        failures.push("Robin decay".to_string());
    }
    Ok(AppendixReport { pass: failures.is_empty(), mean_value, sup_bound, robin, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::make_params;
    use crate::core::quadrature::{adaptive_integrate, sin_power_total};
    use std::f64::consts::PI;

    fn eval(s: f64) -> KernelEval {
        KernelEval::new(1, make_params(s).unwrap()).unwrap()
    }

    #[test]
    fn half_plane_kernel_value() {
        let k = eval(0.5);
        assert!((poisson_kernel(&[0.0], 1.0, &k).unwrap() - 1.0 / PI).abs() < 1e-15);
        assert!((poisson_kernel(&[0.7], 1.3, &k).unwrap() - 1.3 / PI / (0.49 + 1.69)).abs() < 1e-15);
        assert!(matches!(poisson_kernel(&[0.0], 0.0, &k), Err(Error::Domain(_))));
    }

    #[test]
    fn unit_mass_at_three_heights() {
        for s in [0.3, 0.5, 0.8] {
            let k = eval(s);
            for y in [0.5, 1.0, 2.0] {
                // x = y tan φ maps the line to (-π/2, π/2).
                let f = |p: f64| poisson_kernel(&[y * p.tan()], y, &k).unwrap() * y / p.cos().powi(2);
                let m = adaptive_integrate(f, -PI / 2.0, PI / 2.0, 1e-13);
                assert!((m - 1.0).abs() < 1e-8, "s={s} y={y} mass={m}");
            }
        }
    }

    #[test]
    fn higher_dimensional_normalization() {
        // n = 3: radial integral of 4π r² c (1+r²)^{-(3+2s)/2}.
        let p = make_params(0.4).unwrap();
        let k = KernelEval::new(3, p).unwrap();
        let f = |q: f64| {
            let r = q.tan();
            4.0 * PI * r * r * poisson_kernel(&[r, 0.0, 0.0], 1.0, &k).unwrap() / q.cos().powi(2)
        };
        let m = adaptive_integrate(f, 0.0, PI / 2.0, 1e-12);
        assert!((m - 1.0).abs() < 1e-8, "{m}");
    }

    #[test]
    fn kernel_profile_ratio() {
        let k = eval(0.35);
        for (x, y) in [(0.3, 0.5), (2.0, 1.0), (-4.0, 3.0)] {
            let r = poisson_kernel(&[x], y, &k).unwrap() / poisson_kernel(&[0.0], y, &k).unwrap();
            let want = (1.0 + x * x / (y * y)).powf(-(1.0 + 0.7) / 2.0);
            assert!((r - want).abs() < 1e-14 * want);
        }
    }

    #[test]
    fn tail_mass_matches_quadrature() {
        let k = eval(0.3);
        let tail = k.tail_mass(0.5, 1.0, -3.0, 4.0).unwrap();
        let f = |p: f64| poisson_kernel(&[p.tan()], 1.0, &k).unwrap() / p.cos().powi(2);
        let inside = adaptive_integrate(f, (-3.5f64).atan(), 3.5f64.atan(), 1e-13);
        assert!((tail - (1.0 - inside)).abs() < 1e-10);
    }

    fn line(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn extension_of_indicator_and_constant() {
        let k = eval(0.5);
        let xs = line(-3.0, 3.0, 6001);
        let g: Vec<f64> = xs.iter().map(|x| if x.abs() <= 1.0 + 1e-12 { 1.0 } else { 0.0 }).collect();
        let f = poisson_extend(&xs, &g, &[0.0], &[1.0], &k).unwrap();
        assert!((f.values[(0, 0)] - 0.5).abs() < 1e-3);
        // Constant data need a window far beyond the evaluation point.
        let short = line(-10.0, 10.0, 201);
        let ones = vec![1.0; short.len()];
        assert!(matches!(poisson_extend(&short, &ones, &[0.0], &[1.0], &k), Err(Error::Truncation(_))));
        let mut wide: Vec<f64> = (0..400).map(|i| -(10f64.powf(7.0 * (399 - i) as f64 / 399.0))).collect();
        wide.extend(line(-0.99, 0.99, 199));
        wide.extend((0..400).map(|i| 10f64.powf(7.0 * i as f64 / 399.0)));
        let ones = vec![1.0; wide.len()];
        let f = poisson_extend(&wide, &ones, &[0.0], &[0.5, 1.0], &k).unwrap();
        assert!(f.values.iter().all(|v| (v - 1.0).abs() < 1e-3), "{:?}", f.values);
    }

    #[test]
    fn phi_regular_start_and_decay() {
        for s in [0.25, 0.5, 0.75] {
            let p = make_params(s).unwrap();
            let sol = solve_phi(p, 12.0).unwrap();
            assert!((sol.phi0 - 1.0).abs() < 1e-8, "s={s} phi0={}", sol.phi0);
            assert!(sol.phi.windows(2).all(|w| w[1] < w[0]));
            assert!(*sol.phi.last().unwrap() < 1e-3);
            // t^s K_s(t) normalized: the t^{2s} coefficient is -Γ(1-s)/(Γ(1+s) 4^s).
            let want = -(ln_gamma(1.0 - s) - ln_gamma(1.0 + s) - s * 4f64.ln()).exp();
            assert!((sol.singular_coefficient - want).abs() < 1e-7, "{} vs {want}", sol.singular_coefficient);
        }
        assert!(solve_phi(make_params(0.5).unwrap(), 5.0).is_err());
    }

    /// Wynn epsilon acceleration of partial sums.
    fn wynn(sums: &[f64]) -> f64 {
        let n = sums.len();
        let mut e: Vec<Vec<f64>> = vec![vec![0.0; n + 1]; n + 1];
        for i in 0..n {
            e[i][1] = sums[i];
        }
        for k in 2..=n {
            for i in 0..=n - k {
                let d = e[i + 1][k - 1] - e[i][k - 1];
                e[i][k] = e[i + 1][k - 2] + if d != 0.0 { 1.0 / d } else { 1e300 };
            }
        }
        let kk = if n % 2 == 1 { n } else { n - 1 };
        e[0][kk]
    }

    #[test]
    fn phi_matches_fourier_transform_of_kernel() {
        for s in [0.3, 0.5, 0.7] {
            let p = make_params(s).unwrap();
            let k = eval(s);
            let sol = solve_phi(p, 12.0).unwrap();
            for z in [0.5, 1.0, 2.0] {
                let mut sums = Vec::new();
                let mut acc = 0.0;
                for j in 0..24 {
                    let (lo, hi) = (j as f64 * PI / z, (j + 1) as f64 * PI / z);
                    acc += 2.0 * adaptive_integrate(|x| poisson_kernel(&[x], 1.0, &k).unwrap() * (z * x).cos(), lo, hi, 1e-14);
                    sums.push(acc);
                }
                let want = wynn(&sums[8..]);
                let got = sol.value(z).unwrap();
                assert!((got - want).abs() < 1e-5, "s={s} z={z}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn hyperbolic_distance_identities() {
        let e = std::f64::consts::E;
        assert!((hyperbolic_distance(&[0.0], 1.0, &[0.0], e).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(hyperbolic_distance(&[0.3], 0.7, &[0.3], 0.7).unwrap(), 0.0);
        let d = hyperbolic_distance(&[0.0], 1.0, &[1e-9], 1.0).unwrap();
        assert!((d - 1e-9).abs() < 1e-20);
        assert!(hyperbolic_distance(&[0.0], -1.0, &[0.0], 1.0).is_err());
    }

    fn indicator_extension(nx: usize, ny: usize) -> SampledField {
        let k = eval(0.5);
        let xs = line(-3.0, 3.0, 6001);
        let g: Vec<f64> = xs.iter().map(|x| if x.abs() <= 1.0 + 1e-12 { 1.0 } else { 0.0 }).collect();
        poisson_extend(&xs, &g, &line(-2.0, 2.0, nx), &line(0.5, 2.5, ny), &k).unwrap()
    }

    #[test]
    fn harnack_constants_refinement_stable() {
        let centres: Vec<(f64, f64)> = (0..10).map(|k| (-1.5 + 0.3 * k as f64, 1.0 + 0.05 * k as f64)).collect();
        let c = harnack_certificate(&indicator_extension(41, 21), &centres, 200, 7).unwrap();
        let f = harnack_certificate(&indicator_extension(81, 41), &centres, 200, 7).unwrap();
        for (x, y) in [(c.yau_constant, f.yau_constant), (c.gradient_constant, f.gradient_constant), (c.ball_ratio, f.ball_ratio)] {
            assert!(x.is_finite() && x > 0.0 && ((x - y) / y).abs() <= 0.1, "{x} {y}");
        }
        let one = SampledField::from_fn(line(-1.0, 1.0, 5), line(0.5, 1.5, 5), |_, _| 1.0);
        let r = harnack_certificate(&one, &[(0.0, 1.0)], 50, 1).unwrap();
        assert_eq!((r.yau_constant, r.gradient_constant, r.ball_ratio), (0.0, 0.0, 1.0));
        let neg = SampledField::from_fn(line(-1.0, 1.0, 5), line(0.5, 1.5, 5), |x, _| x);
        assert!(matches!(harnack_certificate(&neg, &[(0.0, 1.0)], 5, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn appendix_suite() {
        for s in [0.3, 0.5, 0.75] {
            let p = make_params(s).unwrap();
            let r = appendix_checks(p).unwrap();
            assert!(r.pass, "s={s}: {:?}", r.failures);
            let mv = &r.mean_value;
            let total = sin_power_total(p.a());
            for (rad, m) in mv.radii.iter().zip(&mv.means) {
                assert!((m - rad * rad * total).abs() < 1e-12 * total);
            }
            // sup |z|² on B_{1/2} is 1/4 and ∫ y^a |z|² over B_1 is ∫sin^a / (4+a).
            let want = 0.25 * (4.0 + p.a()) / total;
            assert!((r.sup_bound.constants[1] - want).abs() < 1e-10 * want);
        }
    }
}
