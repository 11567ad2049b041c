//! Log-polar tensor grid with Gauss-Jacobi angular nodes and exact
//! transmissibilities in both directions.

use std::f64::consts::PI;

use serde::Serialize;

use super::params::FracParam;
use super::quadrature::{exp_integral, sin_power_integral, ThetaRule};
use crate::error::{Error, Result};

/// Tensor grid in `(t, θ) = (log r, angle)` on the upper half-plane.
///
/// The θ-direction carries `n_theta` Gauss-Jacobi nodes plus two trace
/// locations at `θ = 0` and `θ = π`; columns of a field are indexed
/// `0 ..= n_theta + 1` with the traces at both ends.
#[derive(Debug, Clone, Serialize)]
pub struct LogPolarGrid {
    pub params: FracParam,
    pub t_min: f64,
    pub t_max: f64,
    pub t_nodes: Vec<f64>,
    pub h: f64,
    pub rule: ThetaRule,
    /// `1/∫ (sin θ)^{-a}` between consecutive interior nodes.
    pub theta_trans: Vec<f64>,
    /// Transmissibility between the `θ = 0` trace and the first node.
    pub trans_0: f64,
    /// Transmissibility between the last node and the `θ = π` trace.
    pub trans_pi: f64,
    /// `1/∫ e^{-aτ}` over `[t_i, t_{i+1}]`.
    pub t_trans: Vec<f64>,
    /// `∫ e^{aτ}` over the dual t-cell of node `i` (half cells at the ends).
    pub t_weight: Vec<f64>,
    /// Cartesian area elements `∫ e^{(2+a)τ}` over the dual t-cells.
    pub t_volume: Vec<f64>,
}

impl LogPolarGrid {
    pub fn new(t_min: f64, t_max: f64, n_t: usize, n_theta: usize, params: FracParam) -> Result<Self> {
        if !(t_min.is_finite() && t_max.is_finite() && t_min < t_max) {
            return Err(Error::Config(format!("need t_min < t_max, got ({t_min}, {t_max})")));
        }
        if n_t < 8 || n_theta < 8 {
            return Err(Error::Config(format!("need n_t >= 8 and n_theta >= 8, got ({n_t}, {n_theta})")));
        }
        let a = params.a();
        let rule = ThetaRule::gauss_jacobi(n_theta, a)?;
        let th = &rule.nodes;
        let n = n_theta;
        let mut theta_trans = vec![0.0; n - 1];
        for j in 0..(n - 1).div_ceil(2) {
            let v = 1.0 / sin_power_integral(th[j], th[j + 1], -a)?;
            theta_trans[j] = v;
            theta_trans[n - 2 - j] = v;
        }
        let trans_0 = 1.0 / sin_power_integral(0.0, th[0], -a)?;
        let trans_pi = trans_0;

        let h = (t_max - t_min) / (n_t - 1) as f64;
        let t_nodes: Vec<f64> = (0..n_t).map(|i| t_min + h * i as f64).collect();
        let t_trans: Vec<f64> = (0..n_t - 1)
            .map(|i| 1.0 / exp_integral(t_nodes[i], t_nodes[i] + h, -a))
            .collect();
        let cell = |i: usize| {
            let lo = if i == 0 { t_min } else { t_nodes[i] - 0.5 * h };
            let hi = if i == n_t - 1 { t_max } else { t_nodes[i] + 0.5 * h };
            (lo, hi)
        };
        let t_weight = (0..n_t).map(|i| { let (l, u) = cell(i); exp_integral(l, u, a) }).collect();
        let t_volume = (0..n_t).map(|i| { let (l, u) = cell(i); exp_integral(l, u, 2.0 + a) }).collect();
        Ok(Self { params, t_min, t_max, t_nodes, h, rule, theta_trans, trans_0, trans_pi, t_trans, t_weight, t_volume })
    }

    pub fn n_t(&self) -> usize {
        self.t_nodes.len()
    }

    pub fn n_theta(&self) -> usize {
        self.rule.nodes.len()
    }

    /// Number of field columns, including the two traces.
    pub fn n_cols(&self) -> usize {
        self.n_theta() + 2
    }

    /// Angle of field column `j` (traces at both ends).
    pub fn theta_col(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else if j == self.n_theta() + 1 {
            PI
        } else {
            self.rule.nodes[j - 1]
        }
    }

    pub fn theta_cols(&self) -> Vec<f64> {
        (0..self.n_cols()).map(|j| self.theta_col(j)).collect()
    }

    /// Angular weight of field column `j`; zero at the traces.
    pub fn theta_weight_col(&self, j: usize) -> f64 {
        if j == 0 || j == self.n_theta() + 1 { 0.0 } else { self.rule.weights[j - 1] }
    }

    /// Face transmissibilities across columns `(j, j+1)` for `j = 0 ..= n_theta`.
    pub fn theta_faces(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.n_theta() + 1);
        f.push(self.trans_0);
        f.extend_from_slice(&self.theta_trans);
        f.push(self.trans_pi);
        f
    }

    /// Volume `∫ e^{(2+a)t}(sin θ)^a` of the cell of node `(i, j)` (interior columns).
    pub fn cell_volume(&self, i: usize, j: usize) -> f64 {
        self.t_volume[i] * self.theta_weight_col(j)
    }

    /// Index of the t-node nearest to `t`.
    pub fn nearest_t(&self, t: f64) -> usize {
        let k = ((t - self.t_min) / self.h).round();
        k.clamp(0.0, (self.n_t() - 1) as f64) as usize
    }

    /// Same grid shape on a different t-range with the same spacing.
    pub fn same_spacing(&self, t_max: f64) -> Result<Self> {
        let n_t = ((t_max - self.t_min) / self.h).round() as usize + 1;
        let t_max = self.t_min + self.h * (n_t - 1) as f64;
        Self::new(self.t_min, t_max, n_t, self.n_theta(), self.params)
    }

    /// True when both grids have the same nodes.
    pub fn conforms(&self, other: &Self) -> bool {
        self.n_t() == other.n_t()
            && self.n_theta() == other.n_theta()
            && (self.t_min - other.t_min).abs() <= 1e-12 * (1.0 + self.t_min.abs())
            && (self.h - other.h).abs() <= 1e-12 * self.h
            && self.params == other.params
    }
}

/// Constructor mirroring the operation name.
pub fn build_grid(t_min: f64, t_max: f64, n_t: usize, n_theta: usize, params: FracParam) -> Result<LogPolarGrid> {
    LogPolarGrid::new(t_min, t_max, n_t, n_theta, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::params::make_params;

    #[test]
    fn reference_grid_shape() {
        let g = build_grid(-6.0, 4.0, 512, 128, make_params(0.5).unwrap()).unwrap();
        assert!((g.h - 10.0 / 511.0).abs() < 1e-15);
        for w in g.t_nodes.windows(2) {
            assert!(((w[1] - w[0]) - g.h).abs() <= 1e-12 * g.h);
        }
        let th = g.theta_cols();
        let m = th.len();
        for j in 0..m {
            assert!((th[j] + th[m - 1 - j] - PI).abs() < 1e-14);
        }
        for i in 0..g.n_t() {
            for j in 1..=g.n_theta() {
                let v = g.cell_volume(i, j);
                assert!(v > 0.0 && v.is_finite());
            }
        }
        assert!(g.theta_trans.iter().all(|&t| t > 0.0));
    }

    #[test]
    fn single_cell_volume() {
        // Total volume over t in (0, 1) at a = 0 equals (e² - 1)/2 times π.
        let g = build_grid(0.0, 1.0, 8, 8, make_params(0.5).unwrap()).unwrap();
        let total: f64 = (0..g.n_t()).flat_map(|i| (1..=8).map(move |j| (i, j))).map(|(i, j)| g.cell_volume(i, j)).sum();
        let exact = (2f64.exp() - 1.0) / 2.0 * PI;
        assert!((total - exact).abs() < 1e-13 * exact);
    }

    #[test]
    fn degenerate_counts_rejected() {
        let p = make_params(0.5).unwrap();
        assert!(matches!(build_grid(0.0, 1.0, 4, 16, p), Err(Error::Config(_))));
        assert!(matches!(build_grid(1.0, 0.0, 16, 16, p), Err(Error::Config(_))));
    }
}
