//! Field storage on a log-polar grid, field pairs and weighted volume
//! integrals.

use std::io::{BufRead, Write};
use std::sync::Arc;

use ndarray::Array2;
use serde::Serialize;

use super::grid::LogPolarGrid;
use super::params::FracParam;
use super::quadrature::{exp_integral, exp_moment_local};
use crate::error::{Error, Result};

/// Whether values hold the unscaled field `w` or `ū = e^{-st} w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Unscaled,
    Scaled,
}

/// Samples on a [`LogPolarGrid`], rows indexed by t-node and columns by
/// θ-column (traces included).
#[derive(Debug, Clone)]
pub struct LogPolarField {
    pub grid: Arc<LogPolarGrid>,
    pub values: Array2<f64>,
    pub kind: FieldKind,
}

impl LogPolarField {
    pub fn new(grid: Arc<LogPolarGrid>, values: Array2<f64>, kind: FieldKind) -> Result<Self> {
        if values.dim() != (grid.n_t(), grid.n_cols()) {
            return Err(Error::Structural(format!(
                "field shape {:?} does not match grid ({}, {})",
                values.dim(),
                grid.n_t(),
                grid.n_cols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("field has non-finite values".into()));
        }
        Ok(Self { grid, values, kind })
    }

    pub fn zeros(grid: Arc<LogPolarGrid>, kind: FieldKind) -> Self {
        let values = Array2::zeros((grid.n_t(), grid.n_cols()));
        Self { grid, values, kind }
    }

    /// Samples `f(t, θ)` at every node including the traces.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: Arc<LogPolarGrid>, kind: FieldKind, f: F) -> Self {
        let th = grid.theta_cols();
        let values = Array2::from_shape_fn((grid.n_t(), grid.n_cols()), |(i, j)| f(grid.t_nodes[i], th[j]));
        Self { grid, values, kind }
    }

    /// Converts to the unscaled representation `w`.
    pub fn unscaled(&self) -> Self {
        self.rescaled_to(FieldKind::Unscaled)
    }

    /// Converts to the scaled representation `ū = e^{-st} w`.
    pub fn scaled(&self) -> Self {
        self.rescaled_to(FieldKind::Scaled)
    }

    fn rescaled_to(&self, kind: FieldKind) -> Self {
        if kind == self.kind {
            return self.clone();
        }
        let s = self.grid.params.s();
        let sign = if kind == FieldKind::Scaled { -1.0 } else { 1.0 };
        let mut values = self.values.clone();
        for (i, mut row) in values.rows_mut().into_iter().enumerate() {
            let f = (sign * s * self.grid.t_nodes[i]).exp();
            row.mapv_inplace(|v| v * f);
        }
        Self { grid: self.grid.clone(), values, kind }
    }

    /// Reflection `θ ↦ π - θ`.
    pub fn mirrored(&self) -> Self {
        let mut values = self.values.clone();
        let m = values.ncols();
        for mut row in values.rows_mut() {
            for j in 0..m / 2 {
                row.swap(j, m - 1 - j);
            }
        }
        Self { grid: self.grid.clone(), values, kind: self.kind }
    }

    /// Trace column at `θ = 0` (`side = false`) or `θ = π` (`side = true`).
    pub fn trace_values(&self, at_pi: bool) -> Vec<f64> {
        let j = if at_pi { self.grid.n_cols() - 1 } else { 0 };
        self.values.column(j).to_vec()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Flat text snapshot: header `s a t_min t_max n_t n_theta`, then rows
    /// `t theta value` with t outermost.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        writeln!(w, "{} {} {} {} {} {}", g.params.s(), g.params.a(), g.t_min, g.t_max, g.n_t(), g.n_theta())?;
        let th = g.theta_cols();
        for (i, t) in g.t_nodes.iter().enumerate() {
            for (j, tj) in th.iter().enumerate() {
                writeln!(w, "{:e} {:e} {:e}", t, tj, self.values[(i, j)])?;
            }
        }
        Ok(())
    }

    /// Reads a snapshot written by [`Self::write_text`], rebuilding its grid.
    pub fn read_text<R: BufRead>(r: R, kind: FieldKind) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Structural("empty snapshot".into()))??;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 {
            return Err(Error::Structural(format!("bad snapshot header: {header}")));
        }
        let num = |k: usize| -> Result<f64> {
            h[k].parse::<f64>().map_err(|e| Error::Structural(format!("header field {k}: {e}")))
        };
        let cnt = |k: usize| -> Result<usize> {
            h[k].parse::<usize>().map_err(|e| Error::Structural(format!("header field {k}: {e}")))
        };
        let params = FracParam::new(num(0)?)?;
        let grid = Arc::new(LogPolarGrid::new(num(2)?, num(3)?, cnt(4)?, cnt(5)?, params)?);
        let mut values = Array2::zeros((grid.n_t(), grid.n_cols()));
        let mut count = 0usize;
        let total = grid.n_t() * grid.n_cols();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if count >= total {
                return Err(Error::Structural("snapshot has extra rows".into()));
            }
            let v = line
                .split_whitespace()
                .nth(2)
                .ok_or_else(|| Error::Structural(format!("bad row: {line}")))?
                .parse::<f64>()
                .map_err(|e| Error::Structural(format!("bad value: {e}")))?;
            values[(count / grid.n_cols(), count % grid.n_cols())] = v;
            count += 1;
        }
        if count != total {
            return Err(Error::Structural(format!("snapshot has {count} rows, expected {total}")));
        }
        Self::new(grid, values, kind)
    }

    /// CSV export with header `t,theta,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,theta,value")?;
        let th = self.grid.theta_cols();
        for (i, t) in self.grid.t_nodes.iter().enumerate() {
            for (j, tj) in th.iter().enumerate() {
                writeln!(w, "{:e},{:e},{:e}", t, tj, self.values[(i, j)])?;
            }
        }
        Ok(())
    }
}

/// Two fields on one grid.
#[derive(Debug, Clone)]
pub struct FieldPair {
    pub u: LogPolarField,
    pub v: LogPolarField,
}

impl FieldPair {
    pub fn new(u: LogPolarField, v: LogPolarField) -> Result<Self> {
        if !Arc::ptr_eq(&u.grid, &v.grid) && !u.grid.conforms(&v.grid) {
            return Err(Error::Structural("fields of a pair must share a grid".into()));
        }
        if u.kind != v.kind {
            return Err(Error::Structural("fields of a pair must share a kind".into()));
        }
        Ok(Self { u, v })
    }

    pub fn grid(&self) -> &Arc<LogPolarGrid> {
        &self.u.grid
    }

    pub fn unscaled(&self) -> Self {
        Self { u: self.u.unscaled(), v: self.v.unscaled() }
    }

    /// The pair `(v(π-θ), u(π-θ))`.
    pub fn swapped_mirror(&self) -> Self {
        Self { u: self.v.mirrored(), v: self.u.mirrored() }
    }

    /// Field scale `max(|u|, |v|)`.
    pub fn scale(&self) -> f64 {
        self.u.max_abs().max(self.v.max_abs())
    }

    /// `λ^s w(λ z)` with `log λ = log_lambda`, stored on the grid translated
    /// by `-log λ` so that every node is kept.
    pub fn rescaled(&self, log_lambda: f64) -> Result<Self> {
        let g = self.grid();
        let grid = Arc::new(LogPolarGrid::new(g.t_min - log_lambda, g.t_max - log_lambda, g.n_t(), g.n_theta(), g.params)?);
        let f = (g.params.s() * log_lambda).exp();
        let take = |w: &LogPolarField| LogPolarField::new(grid.clone(), w.unscaled().values.mapv(|x| x * f), FieldKind::Unscaled);
        Self::new(take(&self.u)?, take(&self.v)?)
    }

    /// `λ^s w(t + log λ)` for a shift by `k` grid nodes (`λ = e^{k h}`),
    /// relabelled onto a grid translated by `-k h`.
    pub fn scaled_by_nodes(&self, k: usize) -> Result<Self> {
        let g = self.grid();
        if k >= g.n_t() - 8 {
            return Err(Error::Domain("shift leaves fewer than eight t-nodes".into()));
        }
        let lam_s = (g.params.s() * g.h * k as f64).exp();
        let n_t = g.n_t() - k;
        let t_min = g.t_min;
        let t_max = g.t_min + g.h * (n_t - 1) as f64;
        let grid = Arc::new(LogPolarGrid::new(t_min, t_max, n_t, g.n_theta(), g.params)?);
        let take = |f: &LogPolarField| {
            let vals = f.unscaled().values.slice(ndarray::s![k.., ..]).mapv(|x| x * lam_s);
            LogPolarField::new(grid.clone(), vals, FieldKind::Unscaled)
        };
        Self::new(take(&self.u)?, take(&self.v)?)
    }
}

/// `∫∫ f e^{(2+a)t} (sin θ)^a dt dθ` over `log r ∈ [log r_lo, log r_hi]`,
/// equal to `∫ y^a f dx dy` over the half annulus.
///
/// The field is interpolated linearly in t between nodes and the exponential
/// moments are integrated exactly; the θ-direction uses the grid rule.
pub fn weighted_volume_integral(f: &LogPolarField, r_lo: f64, r_hi: f64) -> Result<f64> {
    let g = &f.grid;
    if !(r_lo > 0.0 && r_lo < r_hi) {
        return Err(Error::Domain(format!("bad radius interval ({r_lo}, {r_hi})")));
    }
    let (lo, hi) = (r_lo.ln(), r_hi.ln());
    let eps = 1e-12 * (1.0 + g.t_max.abs().max(g.t_min.abs()));
    if lo < g.t_min - eps || hi > g.t_max + eps {
        return Err(Error::Domain(format!("radii ({r_lo}, {r_hi}) outside the grid")));
    }
    let w = f.unscaled();
    let c = 2.0 + g.params.a();
    let ang: Vec<f64> = (0..g.n_t())
        .map(|i| (1..=g.n_theta()).map(|j| g.theta_weight_col(j) * w.values[(i, j)]).sum())
        .collect();
    let mut total = 0.0;
    for i in 0..g.n_t() - 1 {
        let (t0, t1) = (g.t_nodes[i], g.t_nodes[i + 1]);
        let a = lo.max(t0);
        let b = hi.min(t1);
        if b <= a {
            continue;
        }
        let slope = (ang[i + 1] - ang[i]) / g.h;
        // ∫_a^b e^{cτ} (ang_i + slope (τ - t0)) dτ.
        let i0 = exp_integral(a, b, c);
        let i1 = (c * a).exp() * exp_moment_local(b - a, c) + (a - t0) * i0;
        total += ang[i] * i0 + slope * i1;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::grid::build_grid;
    use crate::core::params::make_params;
    use crate::core::quadrature::sin_power_integral;
    use std::f64::consts::PI;

    fn grid(s: f64, t0: f64, t1: f64) -> Arc<LogPolarGrid> {
        Arc::new(build_grid(t0, t1, 64, 16, make_params(s).unwrap()).unwrap())
    }

    #[test]
    fn half_annulus_area() {
        let g = grid(0.5, -1.0, 2.0);
        let one = LogPolarField::from_fn(g.clone(), FieldKind::Unscaled, |_, _| 1.0);
        let v = weighted_volume_integral(&one, 1.0, 2.0).unwrap();
        assert!((v - 1.5 * PI).abs() < 1e-12);
        let zero = LogPolarField::zeros(g, FieldKind::Unscaled);
        assert_eq!(weighted_volume_integral(&zero, 1.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn weighted_half_annulus() {
        let g = grid(0.25, -1.0, 2.0);
        let one = LogPolarField::from_fn(g, FieldKind::Unscaled, |_, _| 1.0);
        let v = weighted_volume_integral(&one, 1.0, 2.0).unwrap();
        // y^a dx dy = r^{1+a} dr (sin θ)^a dθ.
        let theta = sin_power_integral(0.0, PI, 0.5).unwrap();
        let exact = (2f64.powf(2.5) - 1.0) / 2.5 * theta;
        assert!((v - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn linear_in_t_is_exact() {
        let g = grid(0.3, -2.0, 1.0);
        let f = LogPolarField::from_fn(g.clone(), FieldKind::Unscaled, |t, _| 2.0 - 0.5 * t);
        let (lo, hi) = (-1.3f64, 0.7f64);
        let v = weighted_volume_integral(&f, lo.exp(), hi.exp()).unwrap();
        let c = 2.0 + g.params.a();
        let anti = |t: f64| (c * t).exp() * ((2.0 - 0.5 * t) / c + 0.5 / (c * c));
        let exact = (anti(hi) - anti(lo)) * g.rule.total_weight();
        assert!((v - exact).abs() < 1e-10 * exact.abs());
    }

    #[test]
    fn outside_region_rejected() {
        let g = grid(0.5, 0.0, 1.0);
        let one = LogPolarField::from_fn(g, FieldKind::Unscaled, |_, _| 1.0);
        assert!(matches!(weighted_volume_integral(&one, 0.5, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn text_round_trip() {
        let g = grid(0.6, -1.0, 1.0);
        let f = LogPolarField::from_fn(g, FieldKind::Unscaled, |t, th| t.exp() * th.cos());
        let mut buf = Vec::new();
        f.write_text(&mut buf).unwrap();
        let back = LogPolarField::read_text(std::io::Cursor::new(buf), FieldKind::Unscaled).unwrap();
        let diff = (&back.values - &f.values).mapv(f64::abs).fold(0.0f64, |m, v| m.max(*v));
        assert!(diff < 1e-14);
    }

    #[test]
    fn scale_conversions_invert() {
        let g = grid(0.7, -1.0, 1.0);
        let f = LogPolarField::from_fn(g, FieldKind::Unscaled, |t, th| (t + th).sin());
        let back = f.scaled().unscaled();
        let diff = (&back.values - &f.values).mapv(f64::abs).fold(0.0f64, |m, v| m.max(*v));
        assert!(diff < 1e-14);
    }
}
