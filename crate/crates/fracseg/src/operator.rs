//! Finite-volume form of `w_tt + a w_t + (sin θ)^{-a} ((sin θ)^a w_θ)_θ`
//! with exact-integral transmissibilities, and the weighted normal traces at
//! `θ ∈ {0, π}`.
//!
//! The weak residual of node `(i, j)` is
//! `W_j [τ_i (w_{i+1,j} - w_{i,j}) - τ_{i-1} (w_{i,j} - w_{i-1,j})]
//!  + E_i [T_j (w_{i,j+1} - w_{i,j}) - T_{j-1} (w_{i,j} - w_{i,j-1})]`,
//! where the θ-faces include the two traces. Row `0` carries a zero-flux
//! condition at `t_min`; row `n_t - 1` is Dirichlet.

use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;

use crate::core::quadrature::sin_power_integral;
use crate::core::{FieldKind, LogPolarField, LogPolarGrid};
use crate::error::{Error, Result};

/// `1 / ∫_lo^hi (sin θ)^{-a} dθ`.
pub fn theta_transmissibility(theta_lo: f64, theta_hi: f64, a: f64) -> Result<f64> {
    if !(a.abs() < 1.0) {
        return Err(Error::Domain(format!("(sin θ)^{{-a}} is not integrable for a = {a}")));
    }
    Ok(1.0 / sin_power_integral(theta_lo, theta_hi, -a)?)
}

/// Immutable five-point stencil bound to a grid.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub grid: Arc<LogPolarGrid>,
    /// θ-face transmissibilities between columns `j` and `j+1`.
    pub theta_faces: Vec<f64>,
}

impl DiscreteOperator {
    pub fn assemble(grid: Arc<LogPolarGrid>) -> Self {
        let theta_faces = grid.theta_faces();
        Self { grid, theta_faces }
    }

    fn check(&self, w: &LogPolarField) -> Result<()> {
        if !Arc::ptr_eq(&self.grid, &w.grid) && !self.grid.conforms(&w.grid) {
            return Err(Error::Structural("field is not on the operator's grid".into()));
        }
        Ok(())
    }

    /// Weak residual (flux balance) of every row except the Dirichlet row;
    /// trace columns and the last row are zero.
    pub fn weak_residual(&self, w: &LogPolarField) -> Result<Array2<f64>> {
        self.check(w)?;
        let g = &self.grid;
        let w = w.unscaled();
        let x = &w.values;
        let (nt, nc) = x.dim();
        let tf = &self.theta_faces;
        let mut r = Array2::zeros((nt, nc));
        for i in 0..nt - 1 {
            for j in 1..nc - 1 {
                let wj = g.theta_weight_col(j);
                let mut t_flux = g.t_trans[i] * (x[(i + 1, j)] - x[(i, j)]);
                if i > 0 {
                    t_flux -= g.t_trans[i - 1] * (x[(i, j)] - x[(i - 1, j)]);
                }
                let th_flux = tf[j] * (x[(i, j + 1)] - x[(i, j)]) - tf[j - 1] * (x[(i, j)] - x[(i, j - 1)]);
                r[(i, j)] = wj * t_flux + g.t_weight[i] * th_flux;
            }
        }
        Ok(r)
    }

    /// Pointwise residual `R_ij / (E_i W_j)` on rows `1 ..= n_t - 2`.
    pub fn apply(&self, w: &LogPolarField) -> Result<LogPolarField> {
        let mut r = self.weak_residual(w)?;
        let g = &self.grid;
        let (nt, nc) = r.dim();
        for i in 0..nt {
            for j in 0..nc {
                if i == 0 || i == nt - 1 || j == 0 || j == nc - 1 {
                    r[(i, j)] = 0.0;
                } else {
                    r[(i, j)] /= g.t_weight[i] * g.theta_weight_col(j);
                }
            }
        }
        LogPolarField::new(g.clone(), r, FieldKind::Unscaled)
    }

    /// Sum of weak residuals over rows `i0..i1` and columns `j0..j1`
    /// (interior indices) together with the net flux through the block
    /// boundary computed face by face.
    pub fn block_balance(&self, w: &LogPolarField, i0: usize, i1: usize, j0: usize, j1: usize) -> Result<(f64, f64)> {
        let r = self.weak_residual(w)?;
        let g = &self.grid;
        let nc = g.n_cols();
        if !(i0 < i1 && i1 < g.n_t() && 1 <= j0 && j0 < j1 && j1 < nc) {
            return Err(Error::Structural("block outside the interior".into()));
        }
        let x = &w.unscaled().values;
        let tf = &self.theta_faces;
        let sum: f64 = (i0..i1).flat_map(|i| (j0..j1).map(move |j| (i, j))).map(|(i, j)| r[(i, j)]).sum();
        let mut flux = 0.0;
        for j in j0..j1 {
            let wj = g.theta_weight_col(j);
            flux += wj * g.t_trans[i1 - 1] * (x[(i1, j)] - x[(i1 - 1, j)]);
            if i0 > 0 {
                flux -= wj * g.t_trans[i0 - 1] * (x[(i0, j)] - x[(i0 - 1, j)]);
            }
        }
        for i in i0..i1 {
            flux += g.t_weight[i] * tf[j1 - 1] * (x[(i, j1)] - x[(i, j1 - 1)]);
            flux -= g.t_weight[i] * tf[j0 - 1] * (x[(i, j0)] - x[(i, j0 - 1)]);
        }
        Ok((sum, flux))
    }

    /// Coordinate-format dump `row col value` of the weak stencil on the
    /// flattened index `i * n_cols + j`, for every non-Dirichlet node.
    pub fn write_stencil<W: Write>(&self, mut out: W) -> Result<()> {
        let g = &self.grid;
        let (nt, nc) = (g.n_t(), g.n_cols());
        let tf = &self.theta_faces;
        for i in 0..nt - 1 {
            for j in 1..nc - 1 {
                let row = i * nc + j;
                let wj = g.theta_weight_col(j);
                let mut diag = 0.0;
                let emit = |col: usize, v: f64, out: &mut W| -> Result<()> {
                    writeln!(out, "{row} {col} {v:e}")?;
                    Ok(())
                };
                if i > 0 {
                    let c = wj * g.t_trans[i - 1];
                    emit(row - nc, c, &mut out)?;
                    diag -= c;
                }
                let cl = g.t_weight[i] * tf[j - 1];
                emit(row - 1, cl, &mut out)?;
                diag -= cl;
                let cr = g.t_weight[i] * tf[j];
                diag -= cr;
                let cu = wj * g.t_trans[i];
                diag -= cu;
                emit(row, diag, &mut out)?;
                emit(row + 1, cr, &mut out)?;
                emit(row + nc, cu, &mut out)?;
            }
        }
        Ok(())
    }
}

/// Discrete weighted normal trace at `θ = 0` (`at_pi = false`) or `θ = π`:
/// transmissibility times (first interior value minus trace value).
///
/// Matches `lim (sin θ)^a w_θ` at `0` and `-lim (sin θ)^a w_θ` at `π`; the
/// Cartesian trace is `∂_y^a u = e^{(a-1)t}` times this value.
pub fn boundary_trace(w: &LogPolarField, at_pi: bool) -> Vec<f64> {
    let g = &w.grid;
    let w = w.unscaled();
    let n = g.n_theta();
    (0..g.n_t())
        .map(|i| {
            if at_pi {
                g.trans_pi * (w.values[(i, n)] - w.values[(i, n + 1)])
            } else {
                g.trans_0 * (w.values[(i, 1)] - w.values[(i, 0)])
            }
        })
        .collect()
}
