//! Eigenproblems of `-L_θ^a` on angular intervals, mode projections and the
//! exact homogeneous solution pairs.
//!
//! Every angular problem is a tridiagonal pencil `K ψ = λ W ψ` assembled from
//! cell weights `W_j` and exact transmissibilities, so the modes coincide with
//! the separation-of-variables modes of the two-dimensional stencil.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use faer::{Mat, Side};
use serde::Serialize;

pub use crate::core::ThetaRule;
use crate::core::quadrature::sin_power_integral;
use crate::core::{FieldKind, FieldPair, FracParam, LogPolarField, LogPolarGrid};
use crate::error::{Error, Result};

/// Boundary conditions of an angular eigenproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Zero weighted flux at `θ = 0`, `ψ(π) = 0`.
    Mixed,
    /// Zero values at both ends of a subinterval.
    DirichletDirichlet,
    /// Even problem on `(-ε, ε)` reduced to its half interval.
    SymmetricCone,
}

/// Finite-volume pencil on an interval: node weights, interior face
/// transmissibilities and optional Dirichlet transmissibilities at the ends
/// (`None` means zero flux).
#[derive(Debug, Clone)]
pub struct IntervalPencil {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub trans: Vec<f64>,
    pub left: Option<f64>,
    pub right: Option<f64>,
}

impl IntervalPencil {
    /// The θ-direction of a log-polar grid with the given end conditions.
    pub fn from_grid(grid: &LogPolarGrid, left_dirichlet: bool, right_dirichlet: bool) -> Self {
        Self {
            nodes: grid.rule.nodes.clone(),
            weights: grid.rule.weights.clone(),
            trans: grid.theta_trans.clone(),
            left: left_dirichlet.then_some(grid.trans_0),
            right: right_dirichlet.then_some(grid.trans_pi),
        }
    }

    /// Cell-centred pencil on `(lo, hi) ⊂ [0, π]` with `n` equal cells and the
    /// weight `(sin θ)^a`; cell weights and transmissibilities are exact
    /// integrals.
    pub fn uniform(lo: f64, hi: f64, n: usize, a: f64, left_dirichlet: bool, right_dirichlet: bool) -> Result<Self> {
        if n < 4 {
            return Err(Error::Config("interval pencil needs at least four cells".into()));
        }
        let h = (hi - lo) / n as f64;
        let face = |k: usize| if k == n { hi } else { lo + h * k as f64 };
        let nodes: Vec<f64> = (0..n).map(|k| lo + h * (k as f64 + 0.5)).collect();
        let weights = (0..n).map(|k| sin_power_integral(face(k), face(k + 1), a)).collect::<Result<Vec<_>>>()?;
        let trans = (0..n - 1)
            .map(|k| sin_power_integral(nodes[k], nodes[k + 1], -a).map(|v| 1.0 / v))
            .collect::<Result<Vec<_>>>()?;
        let left = if left_dirichlet { Some(1.0 / sin_power_integral(lo, nodes[0], -a)?) } else { None };
        let right = if right_dirichlet { Some(1.0 / sin_power_integral(nodes[n - 1], hi, -a)?) } else { None };
        Ok(Self { nodes, weights, trans, left, right })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Diagonal and off-diagonal of the stiffness matrix `K`.
    fn stiffness(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut d = vec![0.0; n];
        for (j, t) in self.trans.iter().enumerate() {
            d[j] += t;
            d[j + 1] += t;
        }
        if let Some(t) = self.left {
            d[0] += t;
        }
        if let Some(t) = self.right {
            d[n - 1] += t;
        }
        let e = self.trans.iter().map(|t| -t).collect();
        (d, e)
    }

    /// Number of eigenvalues strictly below `x` (Sylvester inertia of `K - xW`).
    fn count_below(&self, d: &[f64], e: &[f64], x: f64) -> usize {
        let mut count = 0;
        let mut q = d[0] - x * self.weights[0];
        for j in 0..self.len() {
            if j > 0 {
                let qp = if q == 0.0 { f64::MIN_POSITIVE } else { q };
                q = d[j] - x * self.weights[j] - e[j - 1] * e[j - 1] / qp;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th eigenvalue (0-based) by bisection.
    fn eigenvalue(&self, d: &[f64], e: &[f64], k: usize) -> f64 {
        let upper = (0..self.len())
            .map(|j| {
                let off = if j > 0 { e[j - 1].abs() } else { 0.0 } + if j + 1 < self.len() { e[j].abs() } else { 0.0 };
                (d[j] + off) / self.weights[j]
            })
            .fold(0.0, f64::max);
        let (mut lo, mut hi) = (0.0, 2.0 * upper);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if self.count_below(d, e, mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 2.0 * f64::EPSILON * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Solves `(K - λW) x = rhs` by tridiagonal elimination with partial pivoting.
    fn shifted_solve(&self, d: &[f64], e: &[f64], lam: f64, rhs: &[f64]) -> Vec<f64> {
        let n = self.len();
        // Rows stored as (sub, diag, sup, sup2) after pivoting.
        let mut dd: Vec<f64> = (0..n).map(|j| d[j] - lam * self.weights[j]).collect();
        let mut du: Vec<f64> = e.to_vec();
        let mut dl: Vec<f64> = e.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut b = rhs.to_vec();
        for i in 0..n - 1 {
            if dd[i].abs() >= dl[i].abs() {
                if dd[i] == 0.0 {
                    dd[i] = f64::EPSILON * d[i].abs().max(1.0);
                }
                let f = dl[i] / dd[i];
                dd[i + 1] -= f * du[i];
                b[i + 1] -= f * b[i];
            } else {
                let f = dd[i] / dl[i];
                dd[i] = dl[i];
                let tmp = dd[i + 1];
                dd[i + 1] = du[i] - f * tmp;
                du[i] = tmp;
                if i < n - 2 {
                    du2[i] = du[i + 1];
                    du[i + 1] = -f * du[i + 1];
                }
                b.swap(i, i + 1);
                b[i + 1] -= f * b[i];
            }
            dl[i] = 0.0;
        }
        if dd[n - 1] == 0.0 {
            dd[n - 1] = f64::EPSILON * d[n - 1].abs().max(1.0);
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut v = b[i];
            if i + 1 < n {
                v -= du[i] * x[i + 1];
            }
            if i + 2 < n {
                v -= du2[i] * x[i + 2];
            }
            x[i] = v / dd[i];
        }
        x
    }

    /// First `n_modes` eigenpairs, eigenvectors `W`-orthonormal.
    pub fn eigenpairs(&self, n_modes: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let n = self.len();
        if n_modes == 0 || n_modes > n {
            return Err(Error::Config(format!("n_modes = {n_modes} must lie in 1..={n}")));
        }
        let (d, e) = self.stiffness();
        let mut vals = Vec::with_capacity(n_modes);
        let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
        for k in 0..n_modes {
            let lam = self.eigenvalue(&d, &e, k);
            let mut x: Vec<f64> = (0..n).map(|j| 1.0 + 0.1 * ((j * 7 + k * 3) % 11) as f64).collect();
            let mut history = Vec::new();
            for _ in 0..6 {
                let rhs: Vec<f64> = x.iter().zip(&self.weights).map(|(x, w)| x * w).collect();
                x = self.shifted_solve(&d, &e, lam, &rhs);
                for prev in &vecs {
                    let c: f64 = (0..n).map(|j| self.weights[j] * x[j] * prev[j]).sum();
                    for j in 0..n {
                        x[j] -= c * prev[j];
                    }
                }
                let nrm = (0..n).map(|j| self.weights[j] * x[j] * x[j]).sum::<f64>().sqrt();
                if !(nrm.is_finite() && nrm > 0.0) {
                    return Err(Error::Numerical { message: format!("inverse iteration broke down for mode {k}"), history });
                }
                x.iter_mut().for_each(|v| *v /= nrm);
                history.push(self.rayleigh(&d, &e, &x));
            }
            if x[0] < 0.0 || (x[0] == 0.0 && x.iter().sum::<f64>() < 0.0) {
                x.iter_mut().for_each(|v| *v = -*v);
            }
            vals.push(lam);
            vecs.push(x);
        }
        Ok((vals, vecs))
    }

    /// Rayleigh quotient `xᵀKx / xᵀWx`.
    pub fn rayleigh_quotient(&self, x: &[f64]) -> f64 {
        let (d, e) = self.stiffness();
        self.rayleigh(&d, &e, x)
    }

    fn rayleigh(&self, d: &[f64], e: &[f64], x: &[f64]) -> f64 {
        let n = self.len();
        let mut num = 0.0;
        for j in 0..n {
            num += d[j] * x[j] * x[j];
            if j + 1 < n {
                num += 2.0 * e[j] * x[j] * x[j + 1];
            }
        }
        let den: f64 = (0..n).map(|j| self.weights[j] * x[j] * x[j]).sum();
        num / den
    }
}

/// Eigenpairs of an angular problem sampled on its nodes.
#[derive(Debug, Clone, Serialize)]
pub struct EigenSet {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub boundary: BoundaryKind,
}

impl EigenSet {
    /// CSV with header `j,lambda,theta,psi`, one row per mode and node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "j,lambda,theta,psi")?;
        for (j, (lam, vec)) in self.eigenvalues.iter().zip(&self.eigenvectors).enumerate() {
            for (t, p) in self.nodes.iter().zip(vec) {
                writeln!(w, "{},{:e},{:e},{:e}", j + 1, lam, t, p)?;
            }
        }
        Ok(())
    }

    pub fn rule(&self, a: f64) -> ThetaRule {
        ThetaRule { nodes: self.nodes.clone(), weights: self.weights.clone(), a }
    }
}

/// Mixed problem on `(0, π)`: zero weighted flux at `0`, `ψ(π) = 0`, on the
/// θ-rule of `grid`.
pub fn mixed_eigen_on_grid(grid: &LogPolarGrid, n_modes: usize) -> Result<EigenSet> {
    let pencil = IntervalPencil::from_grid(grid, false, true);
    let (eigenvalues, eigenvectors) = pencil.eigenpairs(n_modes)?;
    Ok(EigenSet { eigenvalues, eigenvectors, nodes: pencil.nodes, weights: pencil.weights, boundary: BoundaryKind::Mixed })
}

/// Mixed eigenproblem at the given angular resolution.
pub fn solve_mixed_eigen(params: FracParam, n_modes: usize, n_theta: usize) -> Result<EigenSet> {
    let grid = LogPolarGrid::new(0.0, 1.0, 8, n_theta, params)?;
    mixed_eigen_on_grid(&grid, n_modes)
}

/// Positive root `d` of `d(d+a) = λ`.
pub fn exponent_from_eigenvalue(lambda: f64, a: f64) -> f64 {
    0.5 * (-a + (a * a + 4.0 * lambda).sqrt())
}

/// Cone exponent on `(-ε, ε)` with the evenly extended weight, at `n` cells
/// on the half interval.
pub fn cone_exponent_with(epsilon: f64, params: FracParam, n: usize) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < PI / 4.0) {
        return Err(Error::Domain(format!("ε = {epsilon} must lie in (0, π/4)")));
    }
    let pencil = IntervalPencil::uniform(0.0, epsilon, n, params.a(), false, true)?;
    let (vals, _) = pencil.eigenpairs(1)?;
    Ok(exponent_from_eigenvalue(vals[0], params.a()))
}

pub fn cone_exponent(epsilon: f64, params: FracParam) -> Result<f64> {
    cone_exponent_with(epsilon, params, 800)
}

/// Minimal Rayleigh quotient on `(π - h, π)` with zero data at both ends.
pub fn poincare_constant_with(h: f64, params: FracParam, n: usize) -> Result<f64> {
    if !(h > 0.0 && h < PI / 2.0) {
        return Err(Error::Domain(format!("h = {h} must lie in (0, π/2)")));
    }
    let pencil = IntervalPencil::uniform(PI - h, PI, n, params.a(), true, true)?;
    Ok(pencil.eigenpairs(1)?.0[0])
}

pub fn poincare_constant(h: f64, params: FracParam) -> Result<f64> {
    poincare_constant_with(h, params, 800)
}

/// All Dirichlet-Dirichlet θ-modes of a grid: `μ_k` ascending and the
/// `W`-orthonormal mode matrix (rows: nodes, columns: modes).
pub fn dirichlet_modes(grid: &LogPolarGrid) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = grid.n_theta();
    let w = &grid.rule.weights;
    let faces = grid.theta_faces();
    let sq: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let a = Mat::<f64>::from_fn(n, n, |i, j| {
        if i == j {
            (faces[i] + faces[i + 1]) / w[i]
        } else if i + 1 == j {
            -faces[j] / (sq[i] * sq[j])
        } else if j + 1 == i {
            -faces[i] / (sq[i] * sq[j])
        } else {
            0.0
        }
    });
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::numerical(format!("angular eigensolver failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mu: Vec<f64> = (0..n).map(|k| s[k]).collect();
    let phi = Mat::<f64>::from_fn(n, n, |i, k| u[(i, k)] / sq[i]);
    Ok((mu, phi))
}

/// Branch of the exact homogeneous pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `(r^s cos^{2s}(θ/2), r^s sin^{2s}(θ/2))`.
    Segregated,
    /// `(r^{2s-1}, 0)`, admissible for `s > 1/2`.
    Degenerate,
}

/// `cos(θ/2)^{2s}` with an exact zero at `θ = π`.
pub fn half_angle_profile(theta: f64, s: f64) -> f64 {
    (0.5 * (PI - theta)).sin().max(0.0).powf(2.0 * s)
}

/// Samples the exact homogeneous pair on `grid` (unscaled fields).
pub fn exact_homogeneous_pair(grid: Arc<LogPolarGrid>, branch: Branch) -> Result<FieldPair> {
    let s = grid.params.s();
    match branch {
        Branch::Segregated => {
            let u = LogPolarField::from_fn(grid.clone(), FieldKind::Unscaled, |t, th| (s * t).exp() * half_angle_profile(th, s));
            let v = LogPolarField::from_fn(grid, FieldKind::Unscaled, |t, th| (s * t).exp() * half_angle_profile(PI - th, s));
            FieldPair::new(u, v)
        }
        Branch::Degenerate => {
            if s <= 0.5 {
                return Err(Error::Domain(format!("degenerate branch needs s > 1/2, got {s}")));
            }
            let u = LogPolarField::from_fn(grid.clone(), FieldKind::Unscaled, |t, _| ((2.0 * s - 1.0) * t).exp());
            let v = LogPolarField::zeros(grid, FieldKind::Unscaled);
            FieldPair::new(u, v)
        }
    }
}

/// Weighted inner product `Σ W_j f_j ψ_j`.
pub fn project_mode(f: &[f64], mode: &[f64], rule: &ThetaRule) -> Result<f64> {
    if f.len() != rule.len() || mode.len() != rule.len() {
        return Err(Error::Structural(format!(
            "projection lengths {} and {} do not match the rule ({})",
            f.len(),
            mode.len(),
            rule.len()
        )));
    }
    Ok(f.iter().zip(mode).zip(&rule.weights).map(|((f, m), w)| f * m * w).sum())
}
