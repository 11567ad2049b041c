//! Blow-down normalization, the scaled (Emden-Fowler) residual, decay fits,
//! the two-term expansion `u = b r^s φ + a r^{s-1} φ + …` with
//! `φ = cos^{2s}(θ/2)`, and alignment of two profiles by an x-translation.
//!
//! The coefficients come from the projection `c_i = Σ_j W_j ψ_j w_{ij}` onto
//! the discrete first mixed mode `ψ`. On interior rows `c` obeys the
//! three-term recurrence of the discrete radial operator up to the small
//! coupling forcing, so with the two roots `ρ±` of its characteristic
//! polynomial every consecutive pair `(c_i, c_{i+1})` yields local estimates
//! of both coefficients.

use std::f64::consts::PI;

use serde::Serialize;

use crate::core::{FieldKind, FieldPair, FracParam, LogPolarField, LogPolarGrid};
use crate::error::{Error, Result};
use crate::operator::{boundary_trace, DiscreteOperator};
use crate::spectral::{half_angle_profile, mixed_eigen_on_grid};

/// Blow-down normalization at one radius.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BlowdownScaling {
    pub radius: f64,
    pub weighted: bool,
    pub l: f64,
    pub kappa: f64,
}

/// `Σ_j q_j (u² + v²)` on row `i`, with `q = W` (weighted) or `W / sin^a`.
fn circle_integral(pair: &FieldPair, i: usize, weighted: bool) -> f64 {
    let g = pair.grid();
    let a = g.params.a();
    (1..g.n_cols() - 1)
        .map(|j| {
            let w = g.theta_weight_col(j);
            let q = if weighted { w } else { w / g.theta_col(j).sin().powf(a) };
            q * (pair.u.values[(i, j)].powi(2) + pair.v.values[(i, j)].powi(2))
        })
        .sum()
}

fn node_for_radius(grid: &LogPolarGrid, r: f64) -> Result<usize> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {r}")));
    }
    let t = r.ln();
    if t < grid.t_min - 0.5 * grid.h || t > grid.t_max + 0.5 * grid.h {
        return Err(Error::Domain(format!("radius {r} outside the grid")));
    }
    Ok(grid.nearest_t(t))
}

/// `L(R)² = R^{-1-a} ∫ y^a (u²+v²)` over the half circle (weighted) or
/// `R^{-1} ∫ (u²+v²)` (unweighted), and `κ_R = L² R^{1-a}`.
pub fn blowdown_scaling(pair: &FieldPair, radius: f64, weighted: bool) -> Result<BlowdownScaling> {
    let pair = pair.unscaled();
    let g = pair.grid();
    let i = node_for_radius(g, radius)?;
    let l2 = circle_integral(&pair, i, weighted);
    if !(l2 > 0.0) {
        return Err(Error::Degenerate(format!("circle integral vanishes at r = {radius}")));
    }
    let r = g.t_nodes[i].exp();
    let l = l2.sqrt();
    Ok(BlowdownScaling { radius: r, weighted, l, kappa: l2 * r.powf(1.0 - g.params.a()) })
}

/// The rescaled pair `u(Rz) / L(R)` on the grid translated by `-log R`.
pub fn blowdown_pair(pair: &FieldPair, scaling: &BlowdownScaling) -> Result<FieldPair> {
    let g = pair.grid();
    let shift = scaling.radius.ln();
    let grid = std::sync::Arc::new(LogPolarGrid::new(g.t_min - shift, g.t_max - shift, g.n_t(), g.n_theta(), g.params)?);
    let take = |w: &LogPolarField| LogPolarField::new(grid.clone(), w.unscaled().values.mapv(|x| x / scaling.l), FieldKind::Unscaled);
    FieldPair::new(take(&pair.u)?, take(&pair.v)?)
}

/// Residual norms of the scaled equation
/// `ū_tt + ū_t + s(1-s) ū + L_θ ū = 0` with traces `e^{4st} ū v̄²`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScaledResidual {
    pub interior_sup: f64,
    pub interior_l2: f64,
    pub trace_sup: f64,
}

/// Scaled residual of both fields, divided by `max |ū|` of the pair.
pub fn emden_fowler_residual(pair: &FieldPair, params: FracParam) -> Result<ScaledResidual> {
    let w = pair.unscaled();
    let g = w.grid().clone();
    if g.params != params {
        return Err(Error::Structural("pair grid has different parameters".into()));
    }
    let scaled = FieldPair { u: w.u.scaled(), v: w.v.scaled() };
    let scale = scaled.scale();
    if scale == 0.0 {
        return Ok(ScaledResidual { interior_sup: 0.0, interior_l2: 0.0, trace_sup: 0.0 });
    }
    let op = DiscreteOperator::assemble(g.clone());
    let s = params.s();
    let last = g.n_cols() - 1;
    let (mut sup, mut acc, mut vol, mut tsup) = (0.0f64, 0.0, 0.0, 0.0f64);
    for (f, o) in [(&w.u, &w.v), (&w.v, &w.u)] {
        let r = op.apply(f)?;
        for i in 1..g.n_t() - 1 {
            let e = (-s * g.t_nodes[i]).exp();
            for j in 1..last {
                let v = (e * r.values[(i, j)]).abs() / scale;
                sup = sup.max(v);
                let q = g.t_weight[i] * g.theta_weight_col(j);
                acc += q * v * v;
                vol += q;
            }
        }
        for (at_pi, col) in [(false, 0), (true, last)] {
            let tr = boundary_trace(f, at_pi);
            for i in 0..g.n_t() - 1 {
                let t = g.t_nodes[i];
                let e = (-s * t).exp();
                let (x, y) = (e * f.values[(i, col)], e * o.values[(i, col)]);
                let d = e * tr[i] - (4.0 * s * t).exp() * x * y * y;
                tsup = tsup.max(d.abs() / scale);
            }
        }
    }
    Ok(ScaledResidual { interior_sup: sup, interior_l2: (acc / vol).sqrt(), trace_sup: tsup })
}

/// Log-linear least-squares fit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub stderr: f64,
    pub expected: f64,
    /// `|slope - expected| / |expected|`.
    pub relative_error: f64,
    pub points: usize,
}

fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    let stderr = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, icpt, stderr)
}

/// Slope of `log trace` against `t` over `window`.
pub fn fit_decay(t: &[f64], trace: &[f64], expected_slope: f64, window: (f64, f64)) -> Result<DecayFit> {
    if t.len() != trace.len() {
        return Err(Error::Structural("trace and t have different lengths".into()));
    }
    let (lo, hi) = window;
    if !(lo < hi) || t.is_empty() || lo < t[0] - 1e-12 || hi > t[t.len() - 1] + 1e-12 {
        return Err(Error::Fit(format!("window ({lo}, {hi}) outside the data")));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (tt, v) in t.iter().zip(trace) {
        if *tt >= lo && *tt <= hi {
            if !(*v > 0.0) {
                return Err(Error::Fit(format!("nonpositive value {v} at t = {tt}")));
            }
            x.push(*tt);
            y.push(v.ln());
        }
    }
    if x.len() < 3 {
        return Err(Error::Fit("fewer than three points in the window".into()));
    }
    let (slope, _, stderr) = line_fit(&x, &y);
    let relative_error = if expected_slope != 0.0 { ((slope - expected_slope) / expected_slope).abs() } else { slope.abs() };
    Ok(DecayFit { slope, stderr, expected: expected_slope, relative_error, points: x.len() })
}

/// Fit window excluding the innermost 30% and the outermost 20% of the t-range.
pub fn default_window(grid: &LogPolarGrid) -> (f64, f64) {
    let l = grid.t_max - grid.t_min;
    (grid.t_min + 0.3 * l, grid.t_min + 0.8 * l)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpansionOptions {
    /// Fit window in t; `None` uses [`default_window`].
    pub window: Option<(f64, f64)>,
    /// Extract `a_coeff` and `b_coeff` (requires `s > 1/4`).
    pub subleading: bool,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        Self { window: None, subleading: true }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionSlopes {
    /// `log v(t, 0)`: expected `-3s`.
    /// `None` when the trace is not positive on the window.
    pub minority_trace: Option<DecayFit>,
    /// `log |∂_x v(x, 0)|`: expected `-(3s+1)`.
    pub minority_derivative: Option<DecayFit>,
    /// `log u(t, 0)`: expected `s`.
    pub majority_trace: DecayFit,
    /// `log sup_θ |ū - leading|`: expected `-min(1, 4s)`.
    pub envelope: DecayFit,
    /// Decay rate of `|A_i - a_coeff|`, when measurable.
    pub subleading_rate: Option<f64>,
    pub subleading_rate_expected: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionWindows {
    pub fit: (f64, f64),
    /// Leading part of the window used for the rate fit.
    pub rate: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionResiduals {
    pub b_scale_stderr: f64,
    pub a_coeff_stderr: f64,
    pub b_coeff_stderr: f64,
    /// Median absolute deviation of the local estimates around the limit.
    pub noise_floor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionReport {
    pub b_scale: f64,
    pub a_coeff: f64,
    pub b_coeff: f64,
    #[serde(rename = "T")]
    pub t_center: f64,
    pub slopes: ExpansionSlopes,
    pub windows: ExpansionWindows,
    pub residuals: ExpansionResiduals,
}

impl ExpansionReport {
    pub fn coefficient_sum(&self) -> f64 {
        self.a_coeff + self.b_coeff
    }

    pub fn sum_stderr(&self) -> f64 {
        self.residuals.a_coeff_stderr.hypot(self.residuals.b_coeff_stderr)
    }
}

/// Roots `ρ+ > ρ-` of the characteristic polynomial of the interior radial
/// recurrence for the angular eigenvalue `lam`.
pub fn recurrence_roots(a: f64, h: f64, lam: f64) -> (f64, f64) {
    let (alpha, beta, em) = if a.abs() < 1e-14 {
        (1.0 / h, h, 1.0)
    } else {
        (a / (1.0 - (-a * h).exp()), 2.0 * (0.5 * a * h).sinh() / a, (-a * h).exp())
    };
    let b = alpha + alpha * em + lam * beta;
    let disc = (b * b - 4.0 * alpha * alpha * em).sqrt();
    let rp = (b + disc) / (2.0 * alpha);
    (rp, em / rp)
}

/// Local two-term estimates along the t-nodes of one field.
struct LocalEstimates {
    t: Vec<f64>,
    lead: Vec<f64>,
    sub: Vec<f64>,
    mu_plus: f64,
    psi: Vec<f64>,
    norm: f64,
}

fn local_estimates(w: &LogPolarField, mirror: bool) -> Result<LocalEstimates> {
    let g = &w.grid;
    let s = g.params.s();
    let a = g.params.a();
    let n = g.n_theta();
    let eig = mixed_eigen_on_grid(g, 1)?;
    let mut psi = eig.eigenvectors[0].clone();
    if mirror {
        psi.reverse();
    }
    let lam = eig.eigenvalues[0];
    let wts = &g.rule.weights;
    let phi: Vec<f64> = g.rule.nodes.iter().map(|th| half_angle_profile(if mirror { PI - th } else { *th }, s)).collect();
    let norm: f64 = (0..n).map(|j| wts[j] * psi[j] * phi[j]).sum();
    let c: Vec<f64> = (0..g.n_t()).map(|i| (0..n).map(|j| wts[j] * psi[j] * w.values[(i, j + 1)]).sum::<f64>() / norm).collect();
    let (rp, rm) = recurrence_roots(a, g.h, lam);
    let (mp, mm) = (rp.ln() / g.h, rm.ln() / g.h);
    let tm = g.t_max;
    let nt = g.n_t();
    let mut t = Vec::with_capacity(nt - 1);
    let mut lead = Vec::with_capacity(nt - 1);
    let mut sub = Vec::with_capacity(nt - 1);
    for i in 0..nt - 1 {
        let ti = g.t_nodes[i];
        // Discrete exponents referenced to t_max, where the data are exact.
        let fp = (mp * (tm - ti) - s * tm).exp();
        let fm = (mm * (tm - ti) - (s - 1.0) * tm).exp();
        t.push(ti);
        lead.push((c[i + 1] - rm * c[i]) / (rp - rm) * fp);
        sub.push((c[i + 1] - rp * c[i]) / (rm - rp) * fm);
    }
    Ok(LocalEstimates { t, lead, sub, mu_plus: mp, psi, norm })
}

fn window_indices(t: &[f64], w: (f64, f64)) -> Vec<usize> {
    (0..t.len()).filter(|&i| t[i] >= w.0 && t[i] <= w.1).collect()
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

/// Limit of a converging sequence: median of the second half of the window,
/// its noise floor, a standard error, and the decay rate of the leading run
/// of deviations above 100 times the floor.
struct LimitFit {
    limit: f64,
    stderr: f64,
    floor: f64,
    rate: Option<f64>,
    rate_window: Option<(f64, f64)>,
}

fn limit_fit(t: &[f64], v: &[f64]) -> LimitFit {
    let m = v.len();
    let tail: Vec<f64> = v[m / 2..].to_vec();
    let limit = median(tail.clone());
    let floor = median(tail.iter().map(|x| (x - limit).abs()).collect());
    let stderr = 1.4826 * floor / (tail.len() as f64).sqrt();
    let dev: Vec<f64> = v.iter().map(|x| (x - limit).abs()).collect();
    let run = dev.iter().position(|d| !(*d > 100.0 * floor.max(f64::MIN_POSITIVE))).unwrap_or(m);
    let (rate, rate_window) = if run >= 5 {
        let y: Vec<f64> = dev[..run].iter().map(|d| d.ln()).collect();
        let (slope, _, _) = line_fit(&t[..run], &y);
        (Some(-slope), Some((t[0], t[run - 1])))
    } else {
        (None, None)
    };
    LimitFit { limit, stderr, floor, rate, rate_window }
}

/// `b_scale`, `a_coeff`, `b_coeff`, the symmetry center and trace slopes.
pub fn extract_expansion(pair: &FieldPair, params: FracParam, opts: ExpansionOptions) -> Result<ExpansionReport> {
    let pair = pair.unscaled();
    let g = pair.grid().clone();
    if g.params != params {
        return Err(Error::Structural("pair grid has different parameters".into()));
    }
    let s = params.s();
    if opts.subleading && s <= 0.25 {
        return Err(Error::Hypothesis(format!("subleading extraction needs s > 1/4, got {s}")));
    }
    let window = opts.window.unwrap_or_else(|| default_window(&g));
    if !(window.0 < window.1 && window.0 >= g.t_min && window.1 <= g.t_max) {
        return Err(Error::Fit(format!("window ({}, {}) outside the grid", window.0, window.1)));
    }
    let eu = local_estimates(&pair.u, false)?;
    let ev = local_estimates(&pair.v, true)?;
    let idx = window_indices(&eu.t, window);
    if idx.len() < 8 {
        return Err(Error::Fit("fewer than eight nodes in the fit window".into()));
    }
    let tw: Vec<f64> = idx.iter().map(|&i| eu.t[i]).collect();
    let (b_scale, b_scale_stderr) = mean_stderr(&idx.iter().map(|&i| eu.lead[i]).collect::<Vec<_>>());

    let (a_coeff, b_coeff, a_se, b_se, floor, rate, rate_window) = if opts.subleading {
        let fa = limit_fit(&tw, &idx.iter().map(|&i| eu.sub[i]).collect::<Vec<_>>());
        let fb = limit_fit(&tw, &idx.iter().map(|&i| ev.sub[i]).collect::<Vec<_>>());
        if let Some(r) = fa.rate {
            if r <= 0.0 {
                return Err(Error::Fit(format!("subleading estimates do not converge (rate {r})")));
            }
        }
        (fa.limit, fb.limit, fa.stderr, fb.stderr, fa.floor, fa.rate, fa.rate_window)
    } else {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, None, None)
    };

    let last = g.n_cols() - 1;
    let t = &g.t_nodes;
    let v0: Vec<f64> = (0..g.n_t()).map(|i| pair.v.values[(i, 0)]).collect();
    let u0: Vec<f64> = (0..g.n_t()).map(|i| pair.u.values[(i, 0)]).collect();
    let dv: Vec<f64> = (0..g.n_t())
        .map(|i| {
            let d = if i == 0 {
                v0[1] - v0[0]
            } else if i == g.n_t() - 1 {
                (v0[i] - v0[i - 1]) / g.h
            } else {
                (v0[i + 1] - v0[i - 1]) / (2.0 * g.h)
            };
            (if i == 0 { d / g.h } else { d }).abs() * (-t[i]).exp()
        })
        .collect();
    let minority_trace = fit_decay(t, &v0, -3.0 * s, window).ok();
    let minority_derivative = fit_decay(t, &dv, -(3.0 * s + 1.0), window).ok();
    let majority_trace = fit_decay(t, &u0, s, window)?;
    // Envelope of ū minus its leading discrete mode.
    let env: Vec<f64> = (0..g.n_t())
        .map(|i| {
            let ti = t[i];
            let lead_amp = b_scale * eu.norm * (eu.mu_plus * (ti - g.t_max) + s * g.t_max).exp();
            let mut sup = 0.0f64;
            for j in 1..last {
                let d = pair.u.values[(i, j)] - lead_amp * eu.psi[j - 1];
                sup = sup.max(d.abs());
            }
            sup * (-s * ti).exp()
        })
        .collect();
    let envelope = fit_decay(t, &env, -(4.0 * s).min(1.0), window)?;
    let a = params.a();
    let expected_rate = ((4.0 + a) * s - 1.0).min(4.0 * s - 1.0);
    Ok(ExpansionReport {
        b_scale,
        a_coeff,
        b_coeff,
        t_center: (b_coeff - a_coeff) / (2.0 * s),
        slopes: ExpansionSlopes {
            minority_trace,
            minority_derivative,
            majority_trace,
            envelope,
            subleading_rate: rate,
            subleading_rate_expected: expected_rate,
        },
        windows: ExpansionWindows { fit: window, rate: rate_window },
        residuals: ExpansionResiduals { b_scale_stderr, a_coeff_stderr: a_se, b_coeff_stderr: b_se, noise_floor: floor },
    })
}

/// Four-point Lagrange stencil around `x` on sorted nodes.
fn cubic_stencil(nodes: &[f64], x: f64) -> (usize, [f64; 4]) {
    let n = nodes.len();
    let k = nodes.partition_point(|v| *v <= x).saturating_sub(1).min(n - 2);
    let start = k.saturating_sub(1).min(n - 4);
    let xs = &nodes[start..start + 4];
    let mut w = [0.0; 4];
    for i in 0..4 {
        let mut l = 1.0;
        for j in 0..4 {
            if i != j {
                l *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        w[i] = l;
    }
    (start, w)
}

/// Bicubic Lagrange interpolation of a field at `(t, θ)`; `None` outside.
pub fn sample_field(f: &LogPolarField, t: f64, theta: f64) -> Option<f64> {
    let g = &f.grid;
    if t < g.t_min - 1e-12 || t > g.t_max + 1e-12 || !(0.0..=PI).contains(&theta) {
        return None;
    }
    let cols = g.theta_cols();
    let (i0, wt) = cubic_stencil(&g.t_nodes, t);
    let (j0, wth) = cubic_stencil(&cols, theta);
    let mut acc = 0.0;
    for (a, wa) in wt.iter().enumerate() {
        for (b, wb) in wth.iter().enumerate() {
            acc += wa * wb * f.values[(i0 + a, j0 + b)];
        }
    }
    Some(acc)
}

/// Resample `pair` at `(x + dx, y)` on its own nodes; points that leave the
/// radial range are clamped to it.
pub fn translated_pair(pair: &FieldPair, dx: f64) -> Result<FieldPair> {
    let p = pair.unscaled();
    let g = p.grid().clone();
    let cols = g.theta_cols();
    let last = cols.len() - 1;
    let map = |f: &LogPolarField| {
        let vals = ndarray::Array2::from_shape_fn((g.n_t(), cols.len()), |(i, j)| {
            let r = g.t_nodes[i].exp();
            let x = r * cols[j].cos() + dx;
            let y = if j == 0 || j == last { 0.0 } else { r * cols[j].sin() };
            let t = x.hypot(y).ln().clamp(g.t_min, g.t_max);
            sample_field(f, t, y.atan2(x)).unwrap_or(0.0)
        });
        LogPolarField::new(g.clone(), vals, FieldKind::Unscaled)
    };
    FieldPair::new(map(&p.u)?, map(&p.v)?)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Alignment {
    /// x-translation with `pair2(x, y) ≈ pair1(x + t0, y)`.
    pub t0: f64,
    /// Sup of `|pair1(x + t0, y) - pair2(x, y)|` over compared nodes, divided
    /// by the field scale of `pair2`.
    pub mismatch: f64,
    pub points: usize,
    pub window: (f64, f64),
}

/// `t0 = (a₂ - a₁)/s` and the mismatch of `pair1` translated by `t0`
/// against `pair2` on the nodes of `pair2` inside `window` (default: the
/// fit window of `report2`).
pub fn align_translation(
    report1: &ExpansionReport,
    report2: &ExpansionReport,
    pair1: &FieldPair,
    pair2: &FieldPair,
    window: Option<(f64, f64)>,
) -> Result<Alignment> {
    let g1 = pair1.grid();
    let g2 = pair2.grid();
    if g1.params != g2.params {
        return Err(Error::Hypothesis("pairs have different s".into()));
    }
    if ((report1.b_scale - report2.b_scale) / report2.b_scale).abs() > 0.01 {
        return Err(Error::Hypothesis(format!(
            "leading coefficients differ by more than 1% ({} vs {})",
            report1.b_scale, report2.b_scale
        )));
    }
    let sum_gap = (report1.coefficient_sum() - report2.coefficient_sum()).abs();
    let sum_tol = 5.0 * report1.sum_stderr().hypot(report2.sum_stderr()) + 1e-3 * (1.0 + report1.coefficient_sum().abs());
    if !(sum_gap <= sum_tol) {
        return Err(Error::Hypothesis(format!("a+b differs between the pairs by {sum_gap:e}")));
    }
    let s = g1.params.s();
    let t0 = (report2.a_coeff - report1.a_coeff) / s;
    let window = window.unwrap_or(report2.windows.fit);
    let p1 = pair1.unscaled();
    let p2 = pair2.unscaled();
    let scale = p2.scale().max(f64::MIN_POSITIVE);
    let cols = g2.theta_cols();
    let mut worst = 0.0f64;
    let mut points = 0;
    for i in 0..g2.n_t() {
        let t = g2.t_nodes[i];
        if t < window.0 || t > window.1 {
            continue;
        }
        let r = t.exp();
        for (j, th) in cols.iter().enumerate() {
            let x = r * th.cos() + t0;
            let y = if j == 0 || j == cols.len() - 1 { 0.0 } else { r * th.sin() };
            let (tp, thp) = (x.hypot(y).ln(), y.atan2(x));
            let (Some(u), Some(v)) = (sample_field(&p1.u, tp, thp), sample_field(&p1.v, tp, thp)) else {
                continue;
            };
            worst = worst.max((u - p2.u.values[(i, j)]).abs()).max((v - p2.v.values[(i, j)]).abs());
            points += 1;
        }
    }
    if points == 0 {
        return Err(Error::Truncation("no overlap between the translated pairs".into()));
    }
    Ok(Alignment { t0, mismatch: worst / scale, points, window })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::make_params;
    use crate::solver::{solve_profile, GridSpec, SolverConfig};
    use crate::spectral::{exact_homogeneous_pair, solve_mixed_eigen, Branch};
    use std::sync::Arc;

    fn exact(s: f64) -> FieldPair {
        let g = Arc::new(LogPolarGrid::new(-3.0, 3.0, 97, 32, make_params(s).unwrap()).unwrap());
        exact_homogeneous_pair(g, Branch::Segregated).unwrap()
    }

    #[test]
    fn blowdown_of_exact_pair() {
        let pair = exact(0.5);
        let b1 = blowdown_scaling(&pair, 1.0, true).unwrap();
        let n = FieldPair { u: LogPolarField { values: pair.u.values.mapv(|x| x / b1.l), ..pair.u.clone() }, v: LogPolarField { values: pair.v.values.mapv(|x| x / b1.l), ..pair.v.clone() } };
        let b = blowdown_scaling(&n, 1.0, true).unwrap();
        assert!((b.l - 1.0).abs() < 1e-14 && (b.kappa - 1.0).abs() < 1e-14);
        let r = pair.grid().t_nodes[80].exp();
        let b = blowdown_scaling(&n, r, true).unwrap();
        assert!((b.l - r.powf(0.5)).abs() < 1e-12 * b.l);
        assert!((b.kappa - r.powf(2.0)).abs() < 1e-11 * b.kappa);
        let view = blowdown_pair(&pair, &b).unwrap();
        assert!((view.grid().t_max - (3.0 - r.ln())).abs() < 1e-12);
        assert!(blowdown_scaling(&pair, 1e3, true).is_err());
    }

    #[test]
    fn fit_decay_on_synthetic_trace() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        let v: Vec<f64> = t.iter().map(|x| 3.0 * (-0.9 * x).exp()).collect();
        let f = fit_decay(&t, &v, -0.9, (1.0, 8.0)).unwrap();
        assert!((f.slope + 0.9).abs() < 1e-12 && f.stderr < 1e-10);
        let mut bad = v.clone();
        bad[20] = 0.0;
        assert!(matches!(fit_decay(&t, &bad, -0.9, (1.0, 8.0)), Err(Error::Fit(_))));
    }

    #[test]
    fn exact_pair_scaled_residual_is_small() {
        let pair = exact(0.6);
        let r = emden_fowler_residual(&pair, pair.grid().params).unwrap();
        assert!(r.interior_l2 < 5e-2, "{r:?}");
        let coarse = {
            let g = Arc::new(LogPolarGrid::new(-3.0, 3.0, 49, 16, make_params(0.6).unwrap()).unwrap());
            exact_homogeneous_pair(g, Branch::Segregated).unwrap()
        };
        let rc = emden_fowler_residual(&coarse, coarse.grid().params).unwrap();
        assert!(r.interior_l2 < rc.interior_l2);
    }

    #[test]
    fn second_mode_is_not_a_solution() {
        let s = 0.4;
        let p = make_params(s).unwrap();
        let g = Arc::new(LogPolarGrid::new(-2.0, 2.0, 65, 32, p).unwrap());
        let e = mixed_eigen_on_grid(&g, 2).unwrap();
        let psi2 = e.eigenvectors[1].clone();
        let n = g.n_theta();
        let vals = ndarray::Array2::from_shape_fn((g.n_t(), n + 2), |(i, j)| {
            if j == 0 || j == n + 1 { 0.0 } else { (s * g.t_nodes[i]).exp() * psi2[j - 1] }
        });
        let w = LogPolarField::new(g.clone(), vals, FieldKind::Unscaled).unwrap();
        let z = LogPolarField::zeros(g.clone(), FieldKind::Unscaled);
        let r = emden_fowler_residual(&FieldPair::new(w, z).unwrap(), p).unwrap();
        let want = (e.eigenvalues[1] - s * (1.0 - s)) / psi2.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(r.interior_sup > 0.5 * want, "{} vs {want}", r.interior_sup);
        assert!(solve_mixed_eigen(p, 1, 32).unwrap().eigenvalues[0] < e.eigenvalues[1]);
    }

    #[test]
    fn recurrence_roots_match_continuum() {
        for s in [0.3f64, 0.5, 0.8] {
            let a = 1.0 - 2.0 * s;
            let h = 1e-3;
            let (rp, rm) = recurrence_roots(a, h, s * (1.0 - s));
            assert!((rp.ln() / h - s).abs() < 1e-6);
            assert!((rm.ln() / h - (s - 1.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn exact_pair_has_no_subleading_term() {
        let pair = exact(0.6);
        let rep = extract_expansion(&pair, pair.grid().params, ExpansionOptions::default()).unwrap();
        assert!((rep.b_scale - 1.0).abs() < 1e-3, "{}", rep.b_scale);
        assert!(rep.a_coeff.abs() < 1e-3 && rep.b_coeff.abs() < 1e-3, "{} {}", rep.a_coeff, rep.b_coeff);
        assert!(matches!(
            extract_expansion(&exact(0.2), make_params(0.2).unwrap(), ExpansionOptions::default()),
            Err(Error::Hypothesis(_))
        ));
        let lead = extract_expansion(&exact(0.2), make_params(0.2).unwrap(), ExpansionOptions { subleading: false, ..Default::default() }).unwrap();
        assert!((lead.b_scale - 1.0).abs() < 1e-3);
    }

    fn profile() -> (FieldPair, FracParam) {
        let p = make_params(0.5).unwrap();
        let c = SolverConfig::new(GridSpec { t_min: -5.0, t_max: 10.0, n_t: 241, n_theta: 32 });
        (solve_profile(p, &c).unwrap().0, p)
    }

    #[test]
    fn swap_symmetry_and_alignment() {
        let (pair, p) = profile();
        let rep = extract_expansion(&pair, p, ExpansionOptions::default()).unwrap();
        let sw = extract_expansion(&pair.swapped_mirror(), p, ExpansionOptions::default()).unwrap();
        assert!((rep.a_coeff - sw.b_coeff).abs() < 1e-10 && (rep.b_coeff - sw.a_coeff).abs() < 1e-10);
        assert!((rep.a_coeff - rep.b_coeff).abs() < 1e-8 && rep.t_center.abs() < 1e-7);
        let al = align_translation(&rep, &rep, &pair, &pair, None).unwrap();
        assert!(al.t0 == 0.0 && al.mismatch < 1e-13 && al.points > 0);
        let shifted = translated_pair(&pair, 0.5).unwrap();
        let rep2 = extract_expansion(&shifted, p, ExpansionOptions::default()).unwrap();
        let al = align_translation(&rep, &rep2, &pair, &shifted, None).unwrap();
        assert!((al.t0 - 0.5).abs() < 0.01, "{}", al.t0);
        assert!((rep2.a_coeff - rep.a_coeff - 0.25).abs() < 5e-3);
        assert!(al.mismatch < 1e-2, "{}", al.mismatch);
    }

    #[test]
    fn rescaling_divides_subleading_by_lambda() {
        let (pair, p) = profile();
        let rep = extract_expansion(&pair, p, ExpansionOptions::default()).unwrap();
        // λ^{-s} u(λz) keeps b and maps a to a/λ.
        let sc = pair.rescaled(0.1).unwrap();
        let f = (-2.0 * 0.5 * 0.1f64).exp();
        let sc = FieldPair { u: LogPolarField { values: sc.u.values.mapv(|x| x * f), ..sc.u.clone() }, v: LogPolarField { values: sc.v.values.mapv(|x| x * f), ..sc.v.clone() } };
        let win = (rep.windows.fit.0 - 0.1, rep.windows.fit.1 - 0.1);
        let r2 = extract_expansion(&sc, p, ExpansionOptions { window: Some(win), subleading: true }).unwrap();
        assert!((r2.b_scale / rep.b_scale - 1.0).abs() < 1e-3);
        assert!((r2.a_coeff / rep.a_coeff - (-0.1f64).exp()).abs() < 2e-2, "{} {}", r2.a_coeff, rep.a_coeff);
    }

    #[test]
    fn interpolation_reproduces_nodes_and_cubics() {
        let g = Arc::new(LogPolarGrid::new(0.0, 1.0, 11, 12, make_params(0.5).unwrap()).unwrap());
        let f = LogPolarField::from_fn(g.clone(), FieldKind::Unscaled, |t, th| t * t * t - 2.0 * th * th + t * th);
        assert_eq!(sample_field(&f, g.t_nodes[3], g.theta_col(4)).unwrap(), f.values[(3, 4)]);
        let v = sample_field(&f, 0.537, 1.234).unwrap();
        let want = 0.537f64.powi(3) - 2.0 * 1.234f64.powi(2) + 0.537 * 1.234;
        assert!((v - want).abs() < 1e-12);
        assert!(sample_field(&f, 1.5, 1.0).is_none());
    }
}
