//! Almgren-type functionals `E`, `H`, `N`, the Pohozaev residual, the
//! doubling inequality and the ACF product functional `J`.
//!
//! Radii are the t-faces `t_{k+1/2}` of the grid. At a face the energy is
//! accumulated from finite-volume pieces (t-fluxes `τ W (Δw)²`, θ-energies
//! `E_i Σ T (δw)²` and trace products), which makes the discrete Green
//! identity `½ τ_k (H_{k+1} - H_k) = Bulk + 2 Flat` exact for discrete
//! solutions. Below `t_min` the energy is closed by the flux of the row-0
//! residual.

use std::io::Write;

use serde::Serialize;

use crate::core::{FieldPair, FracParam, LogPolarField, LogPolarGrid};
use crate::error::{Error, Result};
use crate::operator::DiscreteOperator;

/// Per-row finite-volume pieces of one field.
struct RowPieces {
    /// `Σ_j W_j (w_{i+1,j} - w_{i,j})²`, rows `0..n_t-1`.
    t_diff: Vec<f64>,
    /// `Σ_faces T (δ_θ w)²` including the trace faces, all rows.
    theta_energy: Vec<f64>,
    /// `Σ_j W_j w_{ij}²`.
    height: Vec<f64>,
}

fn row_pieces(w: &LogPolarField) -> RowPieces {
    let g = &w.grid;
    let x = &w.values;
    let (nt, nc) = x.dim();
    let faces = g.theta_faces();
    let t_diff = (0..nt - 1)
        .map(|i| (1..nc - 1).map(|j| g.theta_weight_col(j) * (x[(i + 1, j)] - x[(i, j)]).powi(2)).sum())
        .collect();
    let theta_energy = (0..nt)
        .map(|i| (0..nc - 1).map(|j| faces[j] * (x[(i, j + 1)] - x[(i, j)]).powi(2)).sum())
        .collect();
    let height = (0..nt).map(|i| (1..nc - 1).map(|j| g.theta_weight_col(j) * x[(i, j)].powi(2)).sum()).collect();
    RowPieces { t_diff, theta_energy, height }
}

/// `u² v²` at `θ = 0` plus at `θ = π`, per row.
fn trace_products(pair: &FieldPair) -> Vec<f64> {
    let last = pair.grid().n_cols() - 1;
    let (u, v) = (&pair.u.values, &pair.v.values);
    (0..pair.grid().n_t())
        .map(|i| (u[(i, 0)] * v[(i, 0)]).powi(2) + (u[(i, last)] * v[(i, last)]).powi(2))
        .collect()
}

/// `Σ_j w_{0j} R_{0j}`: energy flux through the inner circle.
fn inner_closure(w: &LogPolarField) -> Result<f64> {
    let op = DiscreteOperator::assemble(w.grid.clone());
    let r = op.weak_residual(w)?;
    Ok((0..w.values.ncols()).map(|j| w.values[(0, j)] * r[(0, j)]).sum())
}

/// Face-indexed functionals of a pair.
#[derive(Debug, Clone, Serialize)]
pub struct FrequencyTrace {
    pub s: f64,
    pub radii: Vec<f64>,
    /// `r^{-a}` times the weighted Dirichlet energy plus the flat coupling term.
    pub energy: Vec<f64>,
    /// `r^{-1-a} ∫ y^a (u² + v²)` on the half circle (geometric face mean).
    pub height: Vec<f64>,
    pub frequency: Vec<f64>,
    /// `d log H / d log r` from the two neighbouring nodes.
    pub log_slope: Vec<f64>,
    /// Relative Pohozaev residual on the annulus `[t_min, t_face]`.
    pub pohozaev: Vec<f64>,
    /// ACF functional, when attached.
    pub acf: Option<Vec<f64>>,
    pub truncation: Option<f64>,
}

struct Accumulated {
    closure: f64,
    bulk: Vec<f64>,
    flat: Vec<f64>,
}

/// Bulk and flat energies up to every face, summed over both fields.
fn accumulate(grid: &LogPolarGrid, pieces: &[RowPieces], closure: f64, prod: &[f64]) -> Accumulated {
    let nt = grid.n_t();
    let kappa: Vec<f64> = grid.t_nodes.iter().map(|t| ((1.0 - grid.params.a()) * t).exp()).collect();
    let mut bulk = Vec::with_capacity(nt - 1);
    let mut flat = Vec::with_capacity(nt - 1);
    let (mut b, mut f) = (closure, 0.0);
    for k in 0..nt - 1 {
        let td: f64 = pieces.iter().map(|p| p.t_diff[k]).sum();
        let te: f64 = pieces.iter().map(|p| p.theta_energy[k]).sum();
        b += grid.t_weight[k] * te;
        f += grid.t_weight[k] * kappa[k] * prod[k];
        bulk.push(b + 0.5 * grid.t_trans[k] * td);
        b += grid.t_trans[k] * td;
        flat.push(f);
    }
    Accumulated { closure, bulk, flat }
}

/// `E`, `H`, `N`, log-slopes and Pohozaev residuals at every face.
pub fn frequency_trace(pair: &FieldPair, params: FracParam) -> Result<FrequencyTrace> {
    let pair = pair.unscaled();
    let grid = pair.grid().clone();
    if grid.params != params {
        return Err(Error::Structural("pair grid has different parameters".into()));
    }
    let pieces = [row_pieces(&pair.u), row_pieces(&pair.v)];
    let h_node: Vec<f64> = (0..grid.n_t()).map(|i| pieces[0].height[i] + pieces[1].height[i]).collect();
    if h_node.iter().all(|h| *h == 0.0) {
        return Err(Error::Degenerate("both fields vanish".into()));
    }
    if let Some(i) = h_node.iter().position(|h| !(*h > 0.0)) {
        return Err(Error::Degenerate(format!("H vanishes at t = {}", grid.t_nodes[i])));
    }
    let prod = trace_products(&pair);
    let closure = inner_closure(&pair.u)? + inner_closure(&pair.v)?;
    let acc = accumulate(&grid, &pieces, closure, &prod);
    let pohozaev = pohozaev_profile(&pair, &pieces, &acc, &prod);
    let h = grid.h;
    let nf = grid.n_t() - 1;
    let mut out = FrequencyTrace {
        s: params.s(),
        radii: Vec::with_capacity(nf),
        energy: Vec::with_capacity(nf),
        height: Vec::with_capacity(nf),
        frequency: Vec::with_capacity(nf),
        log_slope: Vec::with_capacity(nf),
        pohozaev,
        acf: None,
        truncation: None,
    };
    for k in 0..nf {
        let hf = (h_node[k] * h_node[k + 1]).sqrt();
        let th = grid.t_trans[k] * h;
        let e = (acc.bulk[k] + acc.flat[k]) / th;
        out.radii.push((grid.t_nodes[k] + 0.5 * h).exp());
        out.energy.push(e);
        out.height.push(hf);
        out.frequency.push(e / hf);
        out.log_slope.push((h_node[k + 1] - h_node[k]) / (h * hf));
    }
    Ok(out)
}

/// `S(t) = e^{at}[θE - Σ W w_t²] + e^t P` and the annulus identity
/// `S(t_f) - S(t_min) = a Bulk + Flat`.
fn pohozaev_profile(pair: &FieldPair, pieces: &[RowPieces], acc: &Accumulated, prod: &[f64]) -> Vec<f64> {
    let grid = pair.grid();
    let a = grid.params.a();
    let h = grid.h;
    let nc = grid.n_cols();
    let te = |i: usize| pieces.iter().map(|p| p.theta_energy[i]).sum::<f64>();
    // One-sided second-order w_t at t_min.
    let mut wt0 = 0.0;
    for w in [&pair.u.values, &pair.v.values] {
        for j in 1..nc - 1 {
            let d = (-3.0 * w[(0, j)] + 4.0 * w[(1, j)] - w[(2, j)]) / (2.0 * h);
            wt0 += grid.theta_weight_col(j) * d * d;
        }
    }
    let t0 = grid.t_nodes[0];
    let s_min = (a * t0).exp() * (te(0) - wt0) + t0.exp() * prod[0];
    let s_min_abs = (a * t0).exp() * (te(0) + wt0) + t0.exp() * prod[0];
    (0..grid.n_t() - 1)
        .map(|k| {
            let tf = grid.t_nodes[k] + 0.5 * h;
            let wt: f64 = pieces.iter().map(|p| p.t_diff[k]).sum::<f64>() / (h * h);
            let tef = 0.5 * (te(k) + te(k + 1));
            let pf = 0.5 * (prod[k] + prod[k + 1]);
            // The identity is posed on the annulus, without the inner closure.
            let bulk = acc.bulk[k] - acc.closure;
            let s_f = (a * tf).exp() * (tef - wt) + tf.exp() * pf;
            let res = a * bulk - (s_f - s_min - acc.flat[k]);
            let scale = (a * tf).exp() * (tef + wt) + a.abs() * bulk + tf.exp() * pf + acc.flat[k] + s_min_abs;
            if scale > 0.0 { res / scale } else { 0.0 }
        })
        .collect()
}

/// Relative Pohozaev residual on the annulus from `t_min` to the face
/// nearest to `log r`; zero for vanishing fields.
pub fn pohozaev_residual(pair: &FieldPair, params: FracParam, r: f64) -> Result<f64> {
    let pair = pair.unscaled();
    let grid = pair.grid().clone();
    if grid.params != params {
        return Err(Error::Structural("pair grid has different parameters".into()));
    }
    if !(r > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {r}")));
    }
    let k = ((r.ln() - grid.t_min) / grid.h - 0.5).round();
    if k < 0.0 || k > (grid.n_t() - 2) as f64 {
        return Err(Error::Domain(format!("radius {r} outside the grid faces")));
    }
    if pair.scale() == 0.0 {
        return Ok(0.0);
    }
    let pieces = [row_pieces(&pair.u), row_pieces(&pair.v)];
    let prod = trace_products(&pair);
    let closure = inner_closure(&pair.u)? + inner_closure(&pair.v)?;
    let acc = accumulate(&grid, &pieces, closure, &prod);
    Ok(pohozaev_profile(&pair, &pieces, &acc, &prod)[k as usize])
}

/// Largest `H(r₂)/H(r₁) - e^{d/(1-a)} (r₂/r₁)^{2d}` over face pairs `r₁ ≤ r₂`.
pub fn doubling_check(trace: &FrequencyTrace, d: f64) -> f64 {
    let a = 1.0 - 2.0 * trace.s;
    let c = (d / (1.0 - a)).exp();
    let n = trace.radii.len();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        for j in i..n {
            let ratio = trace.height[j] / trace.height[i];
            let bound = c * (trace.radii[j] / trace.radii[i]).powf(2.0 * d);
            worst = worst.max(ratio - bound);
        }
    }
    worst
}

/// Largest decrease `N(r_k) - N(r_{k+1})` (non-positive when monotone).
pub fn monotonicity_defect(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max)
}

/// ACF functional at every face and the derived leading coefficient.
#[derive(Debug, Clone, Serialize)]
pub struct AcfTrace {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub truncation: f64,
    /// `(t_lo, t_hi)` of the averaging window.
    pub window: (f64, f64),
    pub limit: f64,
    /// Same limit for the exact pair with unit coefficient (`C(s)²`).
    pub calibration: f64,
    pub b_estimate: f64,
    /// Largest relative decrease between consecutive faces.
    pub monotonicity_defect: f64,
}

/// `∫ (sin θ)^a (w_t² + w_θ²) dt dθ` up to every face for `w = (u - M*)_+`.
fn acf_integrals(w: &LogPolarField, m_star: f64) -> Vec<f64> {
    let trunc = LogPolarField {
        grid: w.grid.clone(),
        values: w.values.mapv(|x| (x - m_star).max(0.0)),
        kind: w.kind,
    };
    let g = &w.grid;
    let p = row_pieces(&trunc);
    let h = g.h;
    let mut acc = 0.0;
    (0..g.n_t() - 1)
        .map(|k| {
            let len = if k == 0 { 0.5 * h } else { h };
            acc += len * p.theta_energy[k];
            let v = acc + 0.5 * p.t_diff[k] / h;
            acc += p.t_diff[k] / h;
            v
        })
        .collect()
}

/// Growth exponent of the leading discrete mode, the O(h²) counterpart of `s`.
fn discrete_exponent(grid: &LogPolarGrid) -> Result<f64> {
    let lam = crate::spectral::mixed_eigen_on_grid(grid, 1)?.eigenvalues[0];
    let (rp, _) = crate::asymptotics::recurrence_roots(grid.params.a(), grid.h, lam);
    Ok(rp.ln() / grid.h)
}

fn acf_values(pair: &FieldPair, m_star: f64, mu: f64) -> Result<Vec<f64>> {
    let g = pair.grid();
    let i1 = acf_integrals(&pair.u, m_star);
    let i2 = acf_integrals(&pair.v, m_star);
    if i1.last().copied().unwrap_or(0.0) == 0.0 || i2.last().copied().unwrap_or(0.0) == 0.0 {
        return Err(Error::Domain(format!("truncation level {m_star} removes a whole field")));
    }
    Ok((0..g.n_t() - 1)
        .map(|k| {
            let tf = g.t_nodes[k] + 0.5 * g.h;
            (-4.0 * mu * tf).exp() * i1[k] * i2[k]
        })
        .collect())
}

/// Default truncation: twice the largest value of both fields at `t_min + 1`.
pub fn default_truncation(pair: &FieldPair) -> f64 {
    let g = pair.grid();
    let i = g.nearest_t(g.t_min + 1.0);
    let pu = pair.u.unscaled();
    let pv = pair.v.unscaled();
    let m = pu.values.row(i).iter().chain(pv.values.row(i).iter()).fold(0.0f64, |a, b| a.max(b.abs()));
    2.0 * m
}

/// Averaging window: the last decade in `r` before 80% of the t-range.
pub fn acf_window(grid: &LogPolarGrid) -> (f64, f64) {
    let hi = grid.t_min + 0.8 * (grid.t_max - grid.t_min);
    (hi - std::f64::consts::LN_10, hi)
}

/// `J(r) = r^{-4μ} I(w₁) I(w₂)`, with `μ` the discrete growth exponent of
/// the leading mode (equal to `s` up to O(h²)), and `b = (lim J / C(s)²)^{1/4}`, with `C(s)²`
/// measured on the exact segregated pair sampled on the same grid.
pub fn acf_trace(pair: &FieldPair, params: FracParam, m_star: f64) -> Result<AcfTrace> {
    let pair = pair.unscaled();
    let grid = pair.grid().clone();
    if grid.params != params {
        return Err(Error::Structural("pair grid has different parameters".into()));
    }
    if !(m_star >= 0.0) {
        return Err(Error::Domain(format!("truncation level must be nonnegative, got {m_star}")));
    }
    let mu = discrete_exponent(&grid)?;
    let values = acf_values(&pair, m_star, mu)?;
    let exact = crate::spectral::exact_homogeneous_pair(grid.clone(), crate::spectral::Branch::Segregated)?;
    let reference = acf_values(&exact, 0.0, mu)?;
    let window = acf_window(&grid);
    let radii: Vec<f64> = (0..grid.n_t() - 1).map(|k| (grid.t_nodes[k] + 0.5 * grid.h).exp()).collect();
    let idx: Vec<usize> = (0..radii.len())
        .filter(|&k| {
            let t = radii[k].ln();
            t >= window.0 && t <= window.1
        })
        .collect();
    if idx.len() < 2 {
        return Err(Error::Truncation("averaging window holds fewer than two faces".into()));
    }
    let mean = |v: &[f64]| idx.iter().map(|&k| v[k]).sum::<f64>() / idx.len() as f64;
    let limit = mean(&values);
    let calibration = mean(&reference);
    let defect = values
        .windows(2)
        .map(|w| (w[0] - w[1]) / w[0].abs().max(f64::MIN_POSITIVE))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(AcfTrace {
        radii,
        values,
        truncation: m_star,
        window,
        limit,
        calibration,
        b_estimate: (limit / calibration).powf(0.25),
        monotonicity_defect: defect,
    })
}

impl FrequencyTrace {
    pub fn attach_acf(&mut self, acf: &AcfTrace) {
        self.acf = Some(acf.values.clone());
        self.truncation = Some(acf.truncation);
    }

    /// CSV with header `r,E,H,N,pohozaev,J` (`J` empty when absent).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,E,H,N,pohozaev,J")?;
        for k in 0..self.radii.len() {
            let j = self.acf.as_ref().map(|v| format!("{:e}", v[k])).unwrap_or_default();
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{}",
                self.radii[k], self.energy[k], self.height[k], self.frequency[k], self.pohozaev[k], j
            )?;
        }
        Ok(())
    }

    /// Mean of `N` over faces with `t ∈ [t_lo, t_hi]`.
    pub fn mean_frequency(&self, t_lo: f64, t_hi: f64) -> Option<f64> {
        let sel: Vec<f64> = self
            .radii
            .iter()
            .zip(&self.frequency)
            .filter(|(r, _)| (t_lo..=t_hi).contains(&r.ln()))
            .map(|(_, n)| *n)
            .collect();
        (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{make_params, FieldKind};
    use crate::solver::{solve_profile, GridSpec, SolverConfig};
    use crate::spectral::{exact_homogeneous_pair, Branch};
    use std::sync::Arc;

    fn exact(s: f64, nt: usize, nth: usize) -> FieldPair {
        let g = Arc::new(LogPolarGrid::new(-4.0, 2.0, nt, nth, make_params(s).unwrap()).unwrap());
        exact_homogeneous_pair(g, Branch::Segregated).unwrap()
    }

    fn profile() -> (FieldPair, FracParam) {
        let p = make_params(0.5).unwrap();
        let c = SolverConfig::new(GridSpec { t_min: -5.0, t_max: 2.0, n_t: 96, n_theta: 24 });
        (solve_profile(p, &c).unwrap().0, p)
    }

    #[test]
    fn exact_pair_frequency_is_s() {
        for s in [0.3, 0.5, 0.7] {
            let pair = exact(s, 241, 64);
            let tr = frequency_trace(&pair, pair.grid().params).unwrap();
            let worst = tr.frequency.iter().fold(0.0f64, |m, n| m.max((n - s).abs()));
            assert!(worst < 2e-3, "s={s}: {worst}");
        }
    }

    #[test]
    fn exact_pair_height_growth() {
        let pair = exact(0.5, 121, 32);
        let tr = frequency_trace(&pair, pair.grid().params).unwrap();
        // Nodes of the exact pair give H(r) = H(1) r^{2s} exactly.
        let g = pair.grid();
        let i0 = g.nearest_t(0.0);
        let i1 = g.nearest_t(2f64.ln());
        let hn = |i: usize| -> f64 {
            (1..g.n_cols() - 1).map(|j| g.theta_weight_col(j) * (pair.u.values[(i, j)].powi(2) + pair.v.values[(i, j)].powi(2))).sum()
        };
        let ratio = hn(i1) / hn(i0);
        let want = (g.t_nodes[i1] - g.t_nodes[i0]).exp();
        assert!((ratio - want).abs() < 1e-12);
        assert!(tr.log_slope.iter().all(|l| (l - 1.0).abs() < 1e-3));
    }

    #[test]
    fn green_identity_on_profile() {
        let (pair, p) = profile();
        let tr = frequency_trace(&pair, p).unwrap();
        assert!(monotonicity_defect(&tr.frequency) < 1e-9);
        for (l, n) in tr.log_slope.iter().zip(&tr.frequency) {
            assert!(l - 2.0 * n > -1e-9);
        }
        // Pohozaev is a continuum identity; on this coarse grid it holds to O(h²).
        assert!(tr.pohozaev.iter().all(|r| r.abs() < 1e-2));
    }

    #[test]
    fn frequency_is_scale_invariant() {
        let (pair, p) = profile();
        let tr = frequency_trace(&pair, p).unwrap();
        let sc = pair.rescaled(0.7).unwrap();
        let ts = frequency_trace(&sc, p).unwrap();
        for k in 0..tr.radii.len() {
            assert!((ts.radii[k] * 0.7f64.exp() / tr.radii[k] - 1.0).abs() < 1e-12);
            assert!((ts.frequency[k] - tr.frequency[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn doubling_on_exact_pair() {
        let pair = exact(0.4, 121, 32);
        let tr = frequency_trace(&pair, pair.grid().params).unwrap();
        assert!(doubling_check(&tr, 0.4 + 1e-3) <= 0.0);
        let single = FrequencyTrace { radii: vec![1.0], height: vec![2.0], ..tr.clone() };
        assert!(doubling_check(&single, 0.4) <= 0.0);
    }

    #[test]
    fn acf_calibrates_on_exact_pair() {
        let pair = exact(0.5, 121, 32);
        let acf = acf_trace(&pair, pair.grid().params, 0.0).unwrap();
        assert!((acf.b_estimate - 1.0).abs() < 1e-12);
        assert!(matches!(acf_trace(&pair, pair.grid().params, 1e6), Err(Error::Domain(_))));
    }

    #[test]
    fn acf_monotone_on_profile() {
        let (pair, p) = profile();
        let m = default_truncation(&pair);
        let acf = acf_trace(&pair, p, m).unwrap();
        assert!(acf.monotonicity_defect < 1e-8, "{}", acf.monotonicity_defect);
    }

    #[test]
    fn zero_and_degenerate_fields() {
        let p = make_params(0.5).unwrap();
        let g = Arc::new(LogPolarGrid::new(0.0, 1.0, 8, 8, p).unwrap());
        let z = FieldPair::new(LogPolarField::zeros(g.clone(), FieldKind::Unscaled), LogPolarField::zeros(g, FieldKind::Unscaled)).unwrap();
        assert!(matches!(frequency_trace(&z, p), Err(Error::Degenerate(_))));
        assert_eq!(pohozaev_residual(&z, p, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn csv_header() {
        let pair = exact(0.5, 16, 8);
        let tr = frequency_trace(&pair, pair.grid().params).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("r,E,H,N,pohozaev,J\n"));
        assert_eq!(text.lines().count(), 16);
    }
}
