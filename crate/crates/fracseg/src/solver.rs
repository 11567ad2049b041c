//! Nonlinear solve of the coupled extension system on a truncated log-polar
//! domain.
//!
//! The interior equation is linear, so every interior unknown is eliminated
//! through the Dirichlet θ-modes of the grid: per mode the t-problem is a
//! tridiagonal solve, and the traces at `θ = 0` and `θ = π` (rows
//! `0 .. n_t - 1`) remain as the only unknowns. Newton's method with damping
//! then runs on the dense trace system
//! `K g + f = κ g_self g_other²`, `κ = e^{(1-a)t}`.

use std::sync::Arc;

use faer::prelude::*;
use faer::Mat;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::core::{FieldKind, FieldPair, FracParam, LogPolarField, LogPolarGrid};
use crate::error::{Error, Result};
use crate::operator::{boundary_trace, DiscreteOperator};
use crate::spectral::dirichlet_modes;

/// Grid extent and resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: usize,
    pub n_theta: usize,
}

impl GridSpec {
    pub fn build(&self, params: FracParam) -> Result<LogPolarGrid> {
        LogPolarGrid::new(self.t_min, self.t_max, self.n_t, self.n_theta, params)
    }
}

/// Initial guess for the first continuation stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialGuess {
    /// Homogeneous segregated pair sampled on the whole grid.
    FarfieldExtension,
    /// The far-field extension times `1 + amplitude·ξ`, `ξ ~ U(-1, 1)`.
    Perturbed,
    /// A caller-supplied pair (see [`solve_profile_from`]).
    Custom,
}

impl InitialGuess {
    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "farfield-extension" | "farfield" => Ok(Self::FarfieldExtension),
            "perturbed" => Ok(Self::Perturbed),
            "custom" => Ok(Self::Custom),
            other => Err(Error::Config(format!("unknown initial guess '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub grid: GridSpec,
    /// Initial Newton step length in `(0, 1]`.
    pub damping: f64,
    /// Tolerance on the sup norm of the trace residual divided by `e^{s t_max}`.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Increasing `t_max` values; the last one must equal `grid.t_max`.
    /// Empty means a single stage.
    pub schedule: Vec<f64>,
    pub initial_guess: InitialGuess,
    /// Relative amplitude of the multiplicative noise for `Perturbed`.
    pub perturbation: f64,
    pub seed: u64,
    /// Translation `x ↦ x + shift` applied to the far-field data.
    pub shift: f64,
}

impl SolverConfig {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            grid,
            damping: 1.0,
            tolerance: 1e-10,
            max_iter: 60,
            schedule: Vec::new(),
            initial_guess: InitialGuess::FarfieldExtension,
            perturbation: 0.1,
            seed: 0,
            shift: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        if !(self.perturbation >= 0.0 && self.perturbation < 1.0) {
            return Err(Error::Config(format!("perturbation must lie in [0, 1), got {}", self.perturbation)));
        }
        if !self.shift.is_finite() {
            return Err(Error::Config("shift must be finite".into()));
        }
        if !self.schedule.is_empty() {
            if self.schedule.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("continuation schedule must be strictly increasing".into()));
            }
            let last = *self.schedule.last().unwrap();
            if (last - self.grid.t_max).abs() > 1e-12 * (1.0 + last.abs()) {
                return Err(Error::Config(format!("schedule must end at t_max = {}, ends at {last}", self.grid.t_max)));
            }
            if self.schedule[0] <= self.grid.t_min {
                return Err(Error::Config("schedule values must exceed t_min".into()));
            }
        }
        Ok(())
    }

    fn stages(&self) -> Vec<f64> {
        if self.schedule.is_empty() { vec![self.grid.t_max] } else { self.schedule.clone() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub t_max: f64,
    pub n_t: usize,
    pub iterations: usize,
    pub final_residual: f64,
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    /// Newton iterations summed over all stages.
    pub iterations: usize,
    /// Residual history of the final stage.
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
    pub positivity_violations: usize,
    pub gauss_seidel_sweeps: usize,
    pub stages: Vec<StageReport>,
    /// Relative sup change on the first-stage domain between consecutive stages.
    pub stage_changes: Vec<f64>,
    /// Fitted `c` in `change ~ e^{-c t_max}` (three or more stages).
    pub continuation_rate: Option<f64>,
}

/// `((r' ± x')/2)^s` at the translated point `(x + shift, y)`, i.e. the
/// homogeneous pair `r^s cos^{2s}(θ/2)`, `r^s sin^{2s}(θ/2)` moved by `-shift`.
pub fn homogeneous_values(s: f64, t: f64, theta: f64, shift: f64) -> (f64, f64) {
    let r = t.exp();
    let x = r * theta.cos() + shift;
    let y = if theta == 0.0 || theta == std::f64::consts::PI { 0.0 } else { r * theta.sin() };
    let rp = x.hypot(y);
    // r' + x' and r' - x' without cancellation.
    let (plus, minus) = if x >= 0.0 {
        let p = rp + x;
        (p, if p > 0.0 { y * y / p } else { 0.0 })
    } else {
        let m = rp - x;
        (if m > 0.0 { y * y / m } else { 0.0 }, m)
    };
    ((0.5 * plus).powf(s), (0.5 * minus).powf(s))
}

/// Far-field Dirichlet data on the columns `theta` at `t = t_max`.
pub fn farfield_data(params: FracParam, t_max: f64, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    farfield_data_shifted(params, t_max, theta, 0.0)
}

pub fn farfield_data_shifted(params: FracParam, t_max: f64, theta: &[f64], shift: f64) -> (Vec<f64>, Vec<f64>) {
    theta.iter().map(|th| homogeneous_values(params.s(), t_max, *th, shift)).unzip()
}

/// Thomas factorization of a symmetric tridiagonal matrix.
struct TriFactor {
    off: Vec<f64>,
    mult: Vec<f64>,
    piv: Vec<f64>,
}

impl TriFactor {
    fn new(diag: &[f64], off: &[f64]) -> Self {
        let m = diag.len();
        let mut piv = vec![0.0; m];
        let mut mult = vec![0.0; m];
        piv[0] = diag[0];
        for i in 1..m {
            mult[i] = off[i - 1] / piv[i - 1];
            piv[i] = diag[i] - mult[i] * off[i - 1];
        }
        Self { off: off.to_vec(), mult, piv }
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let m = x.len();
        for i in 1..m {
            x[i] -= self.mult[i] * x[i - 1];
        }
        x[m - 1] /= self.piv[m - 1];
        for i in (0..m - 1).rev() {
            x[i] = (x[i] - self.off[i] * x[i + 1]) / self.piv[i];
        }
    }
}

/// Trace-only form of the linear interior problem on one grid.
pub struct DtnSystem {
    pub grid: Arc<LogPolarGrid>,
    m: usize,
    phi: Mat<f64>,
    factors: Vec<TriFactor>,
    /// Column `m - 1` of every modal Green's matrix.
    g_last: Vec<Vec<f64>>,
    /// `K` of size `2m × 2m`; rows `0..m` are `θ = 0`, rows `m..2m` are `θ = π`.
    pub matrix: Mat<f64>,
}

impl DtnSystem {
    pub fn build(grid: Arc<LogPolarGrid>) -> Result<Self> {
        let m = grid.n_t() - 1;
        let n = grid.n_theta();
        let (mu, phi) = dirichlet_modes(&grid)?;
        let e = &grid.t_weight[..m];
        let tau = &grid.t_trans;
        let (t0, tp) = (grid.trans_0, grid.trans_pi);
        let off: Vec<f64> = tau[..m - 1].to_vec();
        let mut matrix = Mat::<f64>::zeros(2 * m, 2 * m);
        let mut factors = Vec::with_capacity(n);
        let mut g_last = Vec::with_capacity(n);
        let mut col = vec![0.0; m];
        for k in 0..n {
            let diag: Vec<f64> = (0..m)
                .map(|i| -(if i > 0 { tau[i - 1] } else { 0.0 }) - tau[i] - mu[k] * e[i])
                .collect();
            let f = TriFactor::new(&diag, &off);
            let (p0, pp) = (phi[(0, k)], phi[(n - 1, k)]);
            let c = [t0 * t0 * p0 * p0, t0 * tp * p0 * pp, tp * tp * pp * pp];
            for cc in 0..m {
                col.iter_mut().for_each(|v| *v = 0.0);
                col[cc] = 1.0;
                f.solve_in_place(&mut col);
                for r in 0..m {
                    let ge = col[r] * e[cc];
                    matrix[(r, cc)] -= c[0] * ge;
                    matrix[(r, cc + m)] -= c[1] * ge;
                    matrix[(r + m, cc)] -= c[1] * ge;
                    matrix[(r + m, cc + m)] -= c[2] * ge;
                }
                if cc == m - 1 {
                    g_last.push(col.clone());
                }
            }
            factors.push(f);
        }
        for i in 0..m {
            matrix[(i, i)] -= t0;
            matrix[(i + m, i + m)] -= tp;
        }
        Ok(Self { grid, m, phi, factors, g_last, matrix })
    }

    /// Number of trace rows per side.
    pub fn rows(&self) -> usize {
        self.m
    }

    fn modal_data(&self, wdir: &[f64]) -> Vec<f64> {
        let w = &self.grid.rule.weights;
        (0..self.grid.n_theta())
            .map(|k| (0..w.len()).map(|j| self.phi[(j, k)] * w[j] * wdir[j + 1]).sum())
            .collect()
    }

    /// Contribution of the Dirichlet row (all columns) to the trace equations.
    pub fn forcing(&self, wdir: &[f64]) -> Vec<f64> {
        let m = self.m;
        let n = self.grid.n_theta();
        let d = self.modal_data(wdir);
        let tau = self.grid.t_trans[m - 1];
        let (t0, tp) = (self.grid.trans_0, self.grid.trans_pi);
        let mut f = vec![0.0; 2 * m];
        for k in 0..n {
            let (p0, pp) = (self.phi[(0, k)], self.phi[(n - 1, k)]);
            for i in 0..m {
                let c = -self.g_last[k][i] * tau * d[k];
                f[i] += t0 * p0 * c;
                f[i + m] += tp * pp * c;
            }
        }
        f
    }

    /// `K g + f`, the discrete normal traces `T (w_adj - g)` at both sides.
    pub fn traces(&self, g: &[f64], f: &[f64]) -> Vec<f64> {
        let x = Mat::<f64>::from_fn(g.len(), 1, |i, _| g[i]);
        let y = &self.matrix * &x;
        (0..g.len()).map(|i| y[(i, 0)] + f[i]).collect()
    }

    /// Full field from traces `g` (rows `0..m`) and Dirichlet data `wdir`
    /// on all columns of the last row.
    pub fn reconstruct(&self, g: &[f64], wdir: &[f64]) -> Result<LogPolarField> {
        let m = self.m;
        let grid = &self.grid;
        let n = grid.n_theta();
        let e = &grid.t_weight;
        let tau = grid.t_trans[m - 1];
        let (t0, tp) = (grid.trans_0, grid.trans_pi);
        let d = self.modal_data(wdir);
        let mut vals = Array2::<f64>::zeros((m + 1, n + 2));
        let mut c = vec![0.0; m];
        for k in 0..n {
            let (p0, pp) = (self.phi[(0, k)], self.phi[(n - 1, k)]);
            for i in 0..m {
                c[i] = -e[i] * (t0 * p0 * g[i] + tp * pp * g[i + m]);
            }
            c[m - 1] -= tau * d[k];
            self.factors[k].solve_in_place(&mut c);
            for i in 0..m {
                for j in 0..n {
                    vals[(i, j + 1)] += c[i] * self.phi[(j, k)];
                }
            }
        }
        for i in 0..m {
            vals[(i, 0)] = g[i];
            vals[(i, n + 1)] = g[i + m];
        }
        for j in 0..n + 2 {
            vals[(m, j)] = wdir[j];
        }
        LogPolarField::new(grid.clone(), vals, FieldKind::Unscaled)
    }
}

/// Converged traces of one continuation stage.
struct StageOutcome {
    gu: Vec<f64>,
    gv: Vec<f64>,
    iterations: usize,
    sweeps: usize,
    residual: f64,
}

struct TraceProblem<'a> {
    dtn: &'a DtnSystem,
    fu: Vec<f64>,
    fv: Vec<f64>,
    kappa: Vec<f64>,
    scale: f64,
}

impl TraceProblem<'_> {
    fn residuals(&self, gu: &[f64], gv: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut ru = self.dtn.traces(gu, &self.fu);
        let mut rv = self.dtn.traces(gv, &self.fv);
        for i in 0..ru.len() {
            ru[i] -= self.kappa[i] * gu[i] * gv[i] * gv[i];
            rv[i] -= self.kappa[i] * gv[i] * gu[i] * gu[i];
        }
        (ru, rv)
    }

    fn norm(&self, gu: &[f64], gv: &[f64]) -> f64 {
        let (ru, rv) = self.residuals(gu, gv);
        ru.iter().chain(&rv).fold(0.0f64, |acc, r| acc.max(r.abs())) / self.scale
    }

    fn newton_step(&self, gu: &[f64], gv: &[f64]) -> Result<Vec<f64>> {
        let n2 = gu.len();
        let (ru, rv) = self.residuals(gu, gv);
        let k = &self.dtn.matrix;
        let kap = &self.kappa;
        let jac = Mat::<f64>::from_fn(2 * n2, 2 * n2, |r, c| {
            let (br, bc) = (r / n2, c / n2);
            let (i, j) = (r % n2, c % n2);
            let mut v = if br == bc { k[(i, j)] } else { 0.0 };
            if i == j {
                v -= match (br, bc) {
                    (0, 0) => kap[i] * gv[i] * gv[i],
                    (1, 1) => kap[i] * gu[i] * gu[i],
                    _ => 2.0 * kap[i] * gu[i] * gv[i],
                };
            }
            v
        });
        let rhs = Mat::<f64>::from_fn(2 * n2, 1, |r, _| if r < n2 { -ru[r] } else { -rv[r - n2] });
        let dx = jac.partial_piv_lu().solve(&rhs);
        let out: Vec<f64> = (0..2 * n2).map(|r| dx[(r, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("Newton step is not finite"));
        }
        Ok(out)
    }

    /// One nonlinear Gauss-Seidel sweep; preserves nonnegativity because the
    /// off-diagonal entries of `K` and the forcing are nonnegative.
    fn gauss_seidel(&self, gu: &mut [f64], gv: &mut [f64]) {
        let k = &self.dtn.matrix;
        let n2 = gu.len();
        for field in 0..2 {
            for i in 0..n2 {
                let (g, o, f) = if field == 0 { (&*gu, &*gv, &self.fu) } else { (&*gv, &*gu, &self.fv) };
                let mut num = f[i];
                for j in 0..n2 {
                    if j != i {
                        num += k[(i, j)] * g[j];
                    }
                }
                let den = self.kappa[i] * o[i] * o[i] - k[(i, i)];
                let val = (num / den).max(0.0);
                if field == 0 { gu[i] = val } else { gv[i] = val }
            }
        }
    }

    fn run(&self, mut gu: Vec<f64>, mut gv: Vec<f64>, cfg: &SolverConfig, history: &mut Vec<f64>) -> Result<StageOutcome> {
        let n2 = gu.len();
        let mut r = self.norm(&gu, &gv);
        history.push(r);
        let mut sweeps = 0;
        for it in 0..cfg.max_iter {
            if r < cfg.tolerance {
                return Ok(StageOutcome { gu, gv, iterations: it, sweeps, residual: r });
            }
            let dx = self.newton_step(&gu, &gv)?;
            let mut lam = cfg.damping;
            let mut accepted = None;
            while lam >= 1e-4 {
                let nu: Vec<f64> = (0..n2).map(|i| gu[i] + lam * dx[i]).collect();
                let nv: Vec<f64> = (0..n2).map(|i| gv[i] + lam * dx[i + n2]).collect();
                if nu.iter().chain(&nv).all(|v| *v >= 0.0) {
                    let rn = self.norm(&nu, &nv);
                    if rn <= (1.0 - 1e-4 * lam) * r {
                        accepted = Some((nu, nv, rn));
                        break;
                    }
                }
                lam *= 0.5;
            }
            match accepted {
                Some((nu, nv, rn)) => {
                    gu = nu;
                    gv = nv;
                    r = rn;
                }
                None => {
                    let (mut tu, mut tv) = (gu.clone(), gv.clone());
                    for _ in 0..20 {
                        self.gauss_seidel(&mut tu, &mut tv);
                        sweeps += 1;
                    }
                    let rn = self.norm(&tu, &tv);
                    if !(rn < r) {
                        return Err(Error::Numerical {
                            message: "damped Newton and Gauss-Seidel fallback both stalled".into(),
                            history: history.clone(),
                        });
                    }
                    gu = tu;
                    gv = tv;
                    r = rn;
                }
            }
            history.push(r);
        }
        if r < cfg.tolerance {
            return Ok(StageOutcome { gu, gv, iterations: cfg.max_iter, sweeps, residual: r });
        }
        Err(Error::Numerical {
            message: format!("no convergence in {} iterations (residual {r:e})", cfg.max_iter),
            history: history.clone(),
        })
    }
}

/// Trace columns of `pair` on rows `0..m` of a grid with the same `t_min`
/// and spacing; rows beyond the pair's extent come from the far field.
fn traces_from(pair: Option<&FieldPair>, grid: &LogPolarGrid, shift: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = grid.n_t() - 1;
    let s = grid.params.s();
    let last = grid.n_cols() - 1;
    let mut gu = vec![0.0; 2 * m];
    let mut gv = vec![0.0; 2 * m];
    if let Some(p) = pair {
        let pg = p.grid();
        if (pg.t_min - grid.t_min).abs() > 1e-12 * (1.0 + grid.t_min.abs())
            || (pg.h - grid.h).abs() > 1e-12 * grid.h
            || pg.n_theta() != grid.n_theta()
        {
            return Err(Error::Structural("initial pair does not share t_min, spacing and n_theta".into()));
        }
    }
    let avail = pair.map_or(0, |p| p.grid().n_t() - 1).min(m);
    for i in 0..m {
        let (u0, v0, up, vp) = match pair {
            Some(p) if i < avail => {
                let (u, v) = (p.u.unscaled(), p.v.unscaled());
                let lp = p.grid().n_cols() - 1;
                (u.values[(i, 0)], v.values[(i, 0)], u.values[(i, lp)], v.values[(i, lp)])
            }
            _ => {
                let t = grid.t_nodes[i];
                let (u0, v0) = homogeneous_values(s, t, grid.theta_col(0), shift);
                let (up, vp) = homogeneous_values(s, t, grid.theta_col(last), shift);
                (u0, v0, up, vp)
            }
        };
        gu[i] = u0;
        gu[i + m] = up;
        gv[i] = v0;
        gv[i + m] = vp;
    }
    Ok((gu, gv))
}

/// Solves with the initial guess named in `config`.
pub fn solve_profile(params: FracParam, config: &SolverConfig) -> Result<(FieldPair, SolveReport)> {
    if config.initial_guess == InitialGuess::Custom {
        return Err(Error::Config("custom initial guess requires solve_profile_from".into()));
    }
    solve_profile_from(params, config, None)
}

/// Solves with an optional caller-supplied initial pair for the first stage.
pub fn solve_profile_from(params: FracParam, config: &SolverConfig, initial: Option<&FieldPair>) -> Result<(FieldPair, SolveReport)> {
    config.validate()?;
    if config.initial_guess == InitialGuess::Custom && initial.is_none() {
        return Err(Error::Config("custom initial guess without a pair".into()));
    }
    let full = config.grid.build(params)?;
    let mut stages = Vec::new();
    let mut sweeps = 0;
    let mut iterations = 0;
    let mut prev: Option<FieldPair> = None;
    let mut first_rows = 0;
    let mut changes = Vec::new();
    for (k, &t_max) in config.stages().iter().enumerate() {
        let grid = Arc::new(if k + 1 == config.stages().len() { full.clone() } else { full.same_spacing(t_max)? });
        if grid.n_t() < 8 {
            return Err(Error::Config(format!("stage t_max = {t_max} leaves fewer than eight t-nodes")));
        }
        let dtn = DtnSystem::build(grid.clone())?;
        let m = dtn.rows();
        let cols = grid.theta_cols();
        let (du, dv) = farfield_data_shifted(params, grid.t_max, &cols, config.shift);
        let kappa: Vec<f64> = (0..2 * m).map(|i| ((1.0 - params.a()) * grid.t_nodes[i % m]).exp()).collect();
        let problem = TraceProblem {
            dtn: &dtn,
            fu: dtn.forcing(&du),
            fv: dtn.forcing(&dv),
            kappa,
            scale: (params.s() * grid.t_max).exp(),
        };
        let seed_pair = if k == 0 && config.initial_guess == InitialGuess::Custom { initial } else { prev.as_ref() };
        let (mut gu, mut gv) = traces_from(seed_pair, &grid, config.shift)?;
        if k == 0 && config.initial_guess == InitialGuess::Perturbed {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            for g in gu.iter_mut().chain(gv.iter_mut()) {
                *g *= 1.0 + config.perturbation * rng.random_range(-1.0..1.0);
            }
        }
        let mut history = Vec::new();
        let out = problem.run(gu, gv, config, &mut history)?;
        iterations += out.iterations;
        sweeps += out.sweeps;
        let u = dtn.reconstruct(&out.gu, &du)?;
        let v = dtn.reconstruct(&out.gv, &dv)?;
        let pair = FieldPair::new(u, v)?;
        stages.push(StageReport { t_max: grid.t_max, n_t: grid.n_t(), iterations: out.iterations, final_residual: out.residual, residual_history: history });
        if let Some(p) = &prev {
            if k == 1 {
                first_rows = p.grid().n_t();
            }
            changes.push(relative_change(p, &pair, first_rows));
        } else {
            first_rows = grid.n_t();
        }
        prev = Some(pair);
    }
    let pair = prev.expect("at least one stage");
    let scale = pair.scale();
    let tol = config.tolerance * scale;
    let positivity_violations = pair.u.values.iter().chain(pair.v.values.iter()).filter(|v| **v < -tol).count();
    let continuation_rate = if changes.len() >= 2 {
        let xs: Vec<f64> = stages[1..].iter().map(|s| s.t_max).collect();
        let ys: Vec<f64> = changes.iter().map(|c| c.max(1e-300).ln()).collect();
        Some(-linear_slope(&xs, &ys))
    } else {
        None
    };
    let history = stages.last().map(|s| s.residual_history.clone()).unwrap_or_default();
    let report = SolveReport {
        iterations,
        final_residual: *history.last().unwrap_or(&0.0),
        residual_history: history,
        positivity_violations,
        gauss_seidel_sweeps: sweeps,
        stages,
        stage_changes: changes,
        continuation_rate,
    };
    if positivity_violations > 0 {
        return Err(Error::Numerical {
            message: format!("{positivity_violations} nodes below -tolerance"),
            history: report.residual_history,
        });
    }
    Ok((pair, report))
}

fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Sup relative difference of two pairs over their first `rows` t-rows.
fn relative_change(a: &FieldPair, b: &FieldPair, rows: usize) -> f64 {
    let rows = rows.min(a.grid().n_t()).min(b.grid().n_t());
    let scale = a.scale().max(f64::MIN_POSITIVE);
    let mut d = 0.0f64;
    for (x, y) in [(&a.u, &b.u), (&a.v, &b.v)] {
        for i in 0..rows {
            for j in 0..x.values.ncols() {
                d = d.max((x.values[(i, j)] - y.values[(i, j)]).abs());
            }
        }
    }
    d / scale
}

/// Residual norms of one field.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct FieldResidual {
    /// Sup of the pointwise interior residual on rows `1 ..= n_t - 2`.
    pub interior_sup: f64,
    /// Weighted L² mean of the same residual.
    pub interior_l2: f64,
    /// Sup of the zero-flux defect on row `0`.
    pub inner_sup: f64,
    /// Sup of `trace - e^{(1-a)t} w w_other²` at `θ = 0`.
    pub trace0_sup: f64,
    /// Same at `θ = π`.
    pub trace_pi_sup: f64,
}

impl FieldResidual {
    pub fn max(&self) -> f64 {
        [self.interior_sup, self.inner_sup, self.trace0_sup, self.trace_pi_sup].into_iter().fold(0.0, f64::max)
    }
}

/// Residual norms of a pair, each divided by the pair's field scale.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub scale: f64,
    pub degenerate: bool,
    pub u: FieldResidual,
    pub v: FieldResidual,
}

/// Per-equation residual norms; interior rows use the pointwise form
/// `R / (E W)`, traces the discrete normal flux minus the coupling.
pub fn residual_report(pair: &FieldPair, params: FracParam) -> Result<ResidualReport> {
    let pair = pair.unscaled();
    let grid = pair.grid().clone();
    if grid.params != params {
        return Err(Error::Structural("pair grid has different parameters".into()));
    }
    let scale = pair.scale();
    if scale == 0.0 {
        return Ok(ResidualReport { scale, degenerate: true, u: FieldResidual::default(), v: FieldResidual::default() });
    }
    let op = DiscreteOperator::assemble(grid.clone());
    let nt = grid.n_t();
    let last = grid.n_cols() - 1;
    let one = |w: &LogPolarField, o: &LogPolarField| -> Result<FieldResidual> {
        let weak = op.weak_residual(w)?;
        let mut res = FieldResidual::default();
        let (mut acc, mut vol) = (0.0, 0.0);
        for i in 0..nt - 1 {
            for j in 1..last {
                let ew = grid.t_weight[i] * grid.theta_weight_col(j);
                let p = (weak[(i, j)] / ew).abs() / scale;
                if i == 0 {
                    res.inner_sup = res.inner_sup.max(p);
                } else {
                    res.interior_sup = res.interior_sup.max(p);
                    acc += ew * p * p;
                    vol += ew;
                }
            }
        }
        res.interior_l2 = if vol > 0.0 { (acc / vol).sqrt() } else { 0.0 };
        for (at_pi, col) in [(false, 0), (true, last)] {
            let tr = boundary_trace(w, at_pi);
            let mut sup = 0.0f64;
            for i in 0..nt - 1 {
                let k = ((1.0 - params.a()) * grid.t_nodes[i]).exp();
                let (x, y) = (w.values[(i, col)], o.values[(i, col)]);
                sup = sup.max((tr[i] - k * x * y * y).abs() / scale);
            }
            if at_pi { res.trace_pi_sup = sup } else { res.trace0_sup = sup }
        }
        Ok(res)
    };
    Ok(ResidualReport { scale, degenerate: false, u: one(&pair.u, &pair.v)?, v: one(&pair.v, &pair.u)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::make_params;
    use std::f64::consts::PI;

    #[test]
    fn farfield_values() {
        let p = make_params(0.3).unwrap();
        let (u, v) = farfield_data(p, 2.0, &[0.0, PI / 2.0, PI]);
        let e = (0.3f64 * 2.0).exp();
        assert!((u[0] - e).abs() < 1e-14 && v[0] == 0.0);
        assert!((u[1] - e * 2f64.powf(-0.3)).abs() < 1e-13);
        assert!((v[1] - e * 2f64.powf(-0.3)).abs() < 1e-13);
        assert!(u[2] == 0.0 && (v[2] - e).abs() < 1e-14);
        let th: Vec<f64> = (1..20).map(|k| k as f64 * PI / 20.0).collect();
        let rev: Vec<f64> = th.iter().rev().copied().collect();
        let (u, _) = farfield_data(p, 1.0, &th);
        let (_, v) = farfield_data(p, 1.0, &rev);
        for (a, b) in u.iter().zip(&v) {
            assert!((a - b).abs() < 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn shifted_data_is_translated_profile() {
        // At θ = π/2, r = 1 and shift 0.5 the point is (0.5, 1).
        let (u, v) = homogeneous_values(0.5, 0.0, PI / 2.0, 0.5);
        let rp = 1.25f64.sqrt();
        assert!((u - ((rp + 0.5) / 2.0).sqrt()).abs() < 1e-14);
        assert!((v - ((rp - 0.5) / 2.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn dtn_reproduces_linear_solution() {
        // With the traces of a discrete solution prescribed, the
        // reconstruction solves the interior rows exactly.
        let p = make_params(0.4).unwrap();
        let grid = Arc::new(LogPolarGrid::new(-2.0, 1.0, 24, 12, p).unwrap());
        let dtn = DtnSystem::build(grid.clone()).unwrap();
        let m = dtn.rows();
        let g: Vec<f64> = (0..2 * m).map(|i| 1.0 + 0.1 * (i as f64).sin()).collect();
        let wdir: Vec<f64> = grid.theta_cols().iter().map(|t| 2.0 + t.cos()).collect();
        let w = dtn.reconstruct(&g, &wdir).unwrap();
        let op = DiscreteOperator::assemble(grid.clone());
        let r = op.weak_residual(&w).unwrap();
        let scale = r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(scale < 1e-11, "{scale}");
        let tr = dtn.traces(&g, &dtn.forcing(&wdir));
        let t0 = boundary_trace(&w, false);
        let tp = boundary_trace(&w, true);
        for i in 0..m {
            assert!((tr[i] - t0[i]).abs() < 1e-10);
            assert!((tr[i + m] - tp[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn config_validation() {
        let spec = GridSpec { t_min: -3.0, t_max: 1.0, n_t: 32, n_theta: 16 };
        let mut c = SolverConfig::new(spec);
        assert!(c.validate().is_ok());
        c.tolerance = 0.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.tolerance = 1e-9;
        c.schedule = vec![0.0, -1.0, 1.0];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.schedule = vec![0.0, 0.5];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.schedule = vec![];
        c.damping = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn small_solve_is_symmetric_and_consistent() {
        let p = make_params(0.5).unwrap();
        let spec = GridSpec { t_min: -4.0, t_max: 2.0, n_t: 48, n_theta: 16 };
        let mut c = SolverConfig::new(spec);
        c.schedule = vec![0.0, 1.0, 2.0];
        let (pair, rep) = solve_profile(p, &c).unwrap();
        assert!(rep.final_residual < 1e-10);
        assert_eq!(rep.positivity_violations, 0);
        assert!(rep.residual_history.windows(2).all(|w| w[1] <= w[0]));
        let mirror = pair.swapped_mirror();
        let d = (&pair.u.values - &mirror.u.values).iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(d < 1e-9 * pair.scale());
        assert!(pair.u.min_value() >= 0.0 && pair.v.min_value() >= 0.0);
        let res = residual_report(&pair, p).unwrap();
        assert!(res.u.max() < 1e-8 && res.v.max() < 1e-8, "{res:?}");
        assert_eq!(rep.stage_changes.len(), 2);
        assert!(rep.continuation_rate.is_some());
    }

    #[test]
    fn zero_pair_is_degenerate() {
        let p = make_params(0.5).unwrap();
        let g = Arc::new(LogPolarGrid::new(0.0, 1.0, 8, 8, p).unwrap());
        let z = FieldPair::new(LogPolarField::zeros(g.clone(), FieldKind::Unscaled), LogPolarField::zeros(g, FieldKind::Unscaled)).unwrap();
        let r = residual_report(&z, p).unwrap();
        assert!(r.degenerate && r.u.max() == 0.0);
    }
}
