//! One-dimensional quadrature: Gauss-Legendre, adaptive bisection, exact
//! exponential moments, integrals of `sin^p` with endpoint singularities and
//! the symmetric Gauss-Jacobi rule for the weight `(sin θ)^a` on `(0, π)`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn gl20() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

fn gl_panel<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> f64 {
    let (x, w) = gl20();
    let c = 0.5 * (lo + hi);
    let r = 0.5 * (hi - lo);
    x.iter().zip(w).map(|(xi, wi)| wi * f(c + r * xi)).sum::<f64>() * r
}

/// Adaptive bisection on 20-point Gauss-Legendre panels.
///
/// Stops when a panel and its two halves agree to `tol` relative to the
/// running magnitude of the integral.
pub fn adaptive_integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, whole: f64, tol: f64, scale: f64, depth: u32) -> f64 {
        let mid = 0.5 * (lo + hi);
        let left = gl_panel(f, lo, mid);
        let right = gl_panel(f, mid, hi);
        let both = left + right;
        if (both - whole).abs() <= tol * scale.max(both.abs()) || depth >= 60 {
            return both;
        }
        rec(f, lo, mid, left, tol, scale, depth + 1) + rec(f, mid, hi, right, tol, scale, depth + 1)
    }
    if hi == lo {
        return 0.0;
    }
    let whole = gl_panel(&f, lo, hi);
    rec(&f, lo, hi, whole, tol, whole.abs(), 0)
}

/// `∫_lo^hi e^{c τ} dτ`, stable as `c -> 0`.
pub fn exp_integral(lo: f64, hi: f64, c: f64) -> f64 {
    let d = hi - lo;
    if (c * d).abs() < 1e-300 {
        return d;
    }
    (c * lo).exp() * (c * d).exp_m1() / c
}

/// `∫_0^d σ e^{c σ} dσ`, stable as `c d -> 0`.
pub fn exp_moment_local(d: f64, c: f64) -> f64 {
    let x = c * d;
    if x.abs() < 1e-3 {
        // d² (1/2 + x/3 + x²/8 + x³/30 + x⁴/144)
        return d * d * (0.5 + x * (1.0 / 3.0 + x * (0.125 + x * (1.0 / 30.0 + x / 144.0))));
    }
    (x.exp() * (x - 1.0) + 1.0) / (c * c)
}

/// Taylor coefficients of `(sin θ / θ)^p` in the variable `z = θ²`.
fn sinc_power_series(p: f64, terms: usize) -> Vec<f64> {
    let mut f = vec![0.0; terms];
    let mut fact = 1.0;
    for k in 0..terms {
        if k > 0 {
            fact *= ((2 * k) * (2 * k + 1)) as f64;
        }
        f[k] = if k % 2 == 0 { 1.0 } else { -1.0 } / fact;
    }
    let mut g = vec![0.0; terms];
    g[0] = 1.0;
    for k in 1..terms {
        let mut acc = 0.0;
        for j in 1..=k {
            acc += ((p + 1.0) * j as f64 - k as f64) * f[j] * g[k - j];
        }
        g[k] = acc / k as f64;
    }
    g
}

const SERIES_CUT: f64 = 0.5;

/// `∫_0^h (sin θ)^p dθ` for `0 < h <= SERIES_CUT` via `θ^p (sinθ/θ)^p`.
fn sin_power_from_zero(h: f64, p: f64) -> f64 {
    let c = sinc_power_series(p, 30);
    let h2 = h * h;
    let mut hk = h.powf(p + 1.0);
    let mut acc = 0.0;
    for (k, ck) in c.iter().enumerate() {
        acc += ck * hk / (p + 2.0 * k as f64 + 1.0);
        hk *= h2;
    }
    acc
}

fn sin_power_left(lo: f64, hi: f64, p: f64, tol: f64) -> f64 {
    // Both endpoints in [0, π/2].
    let f = |t: f64| t.sin().powf(p);
    if lo == 0.0 {
        let cut = hi.min(SERIES_CUT);
        let head = sin_power_from_zero(cut, p);
        if hi > cut {
            head + adaptive_integrate(f, cut, hi, tol)
        } else {
            head
        }
    } else {
        adaptive_integrate(f, lo, hi, tol)
    }
}

/// `∫_lo^hi (sin θ)^p dθ` for `0 <= lo < hi <= π` and `p > -1`.
///
/// Endpoint singularities at `0` and `π` are integrated through the series of
/// `(sin θ/θ)^p`, interior pieces by adaptive Gauss-Legendre.
pub fn sin_power_integral(lo: f64, hi: f64, p: f64) -> Result<f64> {
    if p <= -1.0 || !p.is_finite() {
        return Err(Error::Domain(format!("(sin θ)^{p} is not integrable at the endpoints")));
    }
    if !(0.0 <= lo && lo < hi && hi <= PI) {
        return Err(Error::Domain(format!("interval ({lo}, {hi}) not inside [0, π]")));
    }
    let tol = 1e-15;
    let half = 0.5 * PI;
    let mut total = 0.0;
    if lo < half {
        total += sin_power_left(lo, hi.min(half), p, tol);
    }
    if hi > half {
        // Reflect θ -> π - θ so the right endpoint becomes the left one.
        let a = PI - hi;
        let b = PI - lo.max(half);
        let a = if hi == PI { 0.0 } else { a };
        total += sin_power_left(a, b, p, tol);
    }
    Ok(total)
}

/// `∫_0^π (sin θ)^p dθ = √π Γ((p+1)/2) / Γ(p/2 + 1)`.
pub fn sin_power_total(p: f64) -> f64 {
    PI.sqrt() * (ln_gamma(0.5 * (p + 1.0)) - ln_gamma(0.5 * p + 1.0)).exp()
}

/// Gauss-Jacobi rule on `(0, π)` for the weight `(sin θ)^a`.
///
/// Nodes are the zeros of the Jacobi polynomial `P_n^{(α,α)}(cos θ)` with
/// `α = (a-1)/2`; the rule is exact for polynomials in `cos θ` of degree
/// `2n - 1` against the weight, and the node set is mirror symmetric.
#[derive(Debug, Clone, Serialize)]
pub struct ThetaRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub a: f64,
}

impl ThetaRule {
    pub fn gauss_jacobi(n: usize, a: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("θ-rule needs at least two nodes, got {n}")));
        }
        if !(a > -1.0 && a < 1.0) {
            return Err(Error::Domain(format!("weight exponent a = {a} outside (-1, 1)")));
        }
        let alpha = 0.5 * (a - 1.0);
        let nf = n as f64;
        let mu0 = sin_power_total(a);
        // Orthonormal recurrence x p_j = b_{j+1} p_{j+1} + b_j p_{j-1}.
        let b: Vec<f64> = (0..=n)
            .map(|j| {
                if j == 0 {
                    0.0
                } else if j == 1 {
                    (1.0 / (3.0 + 2.0 * alpha)).sqrt()
                } else {
                    let jf = j as f64;
                    let t = 2.0 * jf + 2.0 * alpha;
                    (jf * (jf + 2.0 * alpha) / ((t + 1.0) * (t - 1.0))).sqrt()
                }
            })
            .collect();
        let p0 = 1.0 / mu0.sqrt();
        // Returns (p_n, dp_n/dx, Σ_{j<n} p_j²).
        let eval = |x: f64| {
            let (mut pm, mut p) = (0.0, p0);
            let (mut dpm, mut dp) = (0.0, 0.0);
            let mut sq = 0.0;
            for j in 0..n {
                sq += p * p;
                let pn = (x * p - b[j] * pm) / b[j + 1];
                let dpn = (x * dp + p - b[j] * dpm) / b[j + 1];
                pm = p;
                p = pn;
                dpm = dp;
                dp = dpn;
            }
            (p, dp, sq)
        };
        let half = n / 2;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for k in 0..half {
            let mut th = (k as f64 + 1.0 + 0.5 * alpha - 0.25) * PI / (nf + alpha + 0.5);
            let mut converged = false;
            for _ in 0..100 {
                let (p, dp, _) = eval(th.cos());
                let step = p / (-th.sin() * dp);
                th -= step;
                // x = cos θ carries an absolute error of ε, i.e. ε / sin θ in θ.
                if step.abs() <= 16.0 * f64::EPSILON / th.sin() {
                    // One further step lands at round-off.
                    let (p, dp, _) = eval(th.cos());
                    th -= p / (-th.sin() * dp);
                    converged = true;
                    break;
                }
            }
            let (_, _, sq) = eval(th.cos());
            if !converged || !th.is_finite() {
                return Err(Error::numerical(format!("Gauss-Jacobi node {k} of {n} did not converge")));
            }
            nodes[k] = th;
            weights[k] = 1.0 / sq;
        }
        for k in 0..half {
            nodes[n - 1 - k] = PI - nodes[k];
            weights[n - 1 - k] = weights[k];
        }
        if n % 2 == 1 {
            nodes[half] = 0.5 * PI;
            weights[half] = 1.0 / eval(0.0).2;
        }
        let ok_order = nodes.windows(2).all(|w| w[0] < w[1]) && nodes[0] > 0.0;
        let total: f64 = weights.iter().sum();
        if !ok_order || ((total - mu0) / mu0).abs() > 1e-10 {
            return Err(Error::numerical(format!(
                "Gauss-Jacobi rule failed validation (ordered: {ok_order}, weight sum {total} vs {mu0})"
            )));
        }
        Ok(Self { nodes, weights, a })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weighted integral `Σ w_j f(θ_j)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(t, w)| w * f(*t)).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}
