//! Python bindings: profile solves, angular spectra, kernels and the
//! verification suite, with arrays returned as NumPy arrays.

use ::fracseg::core::make_params;
use ::fracseg::kernels::{poisson_kernel as kernel_eval, solve_phi as phi, KernelEval};
use ::fracseg::monotone::frequency_trace;
use ::fracseg::solver::{self, GridSpec, SolverConfig};
use ::fracseg::spectral::solve_mixed_eigen;
use ::fracseg::suite::{run_criterion as criterion, Resolution, SuiteContext, SuiteOptions};
use numpy::{IntoPyArray, PyArray1, PyArray2, PyReadonlyArray1};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: ::fracseg::Error) -> PyErr {
    if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn rows(a: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

/// Leading mixed eigenvalue `s(1-s)`.
#[pyfunction]
fn lambda1(s: f64) -> PyResult<f64> {
    Ok(make_params(s).map_err(err)?.lambda1())
}

/// Solves for the profile; returns a dict with `t`, `theta`, `u`, `v`
/// (unscaled, shape `(n_t, n_cols)`), `radii`, `frequency` and `report` (JSON).
#[pyfunction]
#[pyo3(signature = (s, t_min=-6.0, t_max=12.0, n_t=256, n_theta=32, schedule=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn solve_profile<'py>(
    py: Python<'py>,
    s: f64,
    t_min: f64,
    t_max: f64,
    n_t: usize,
    n_theta: usize,
    schedule: Option<Vec<f64>>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = make_params(s).map_err(err)?;
    let mut cfg = SolverConfig::new(GridSpec { t_min, t_max, n_t, n_theta });
    cfg.schedule = schedule.unwrap_or_default();
    cfg.seed = seed;
    let (pair, rep) = py.detach(|| solver::solve_profile(p, &cfg)).map_err(err)?;
    let tr = frequency_trace(&pair, p).map_err(err)?;
    let w = pair.unscaled();
    let g = pair.grid();
    let d = PyDict::new(py);
    d.set_item("t", g.t_nodes.clone().into_pyarray(py))?;
    d.set_item("theta", g.theta_cols().into_pyarray(py))?;
    d.set_item("u", PyArray2::from_vec2(py, &rows(&w.u.values))?)?;
    d.set_item("v", PyArray2::from_vec2(py, &rows(&w.v.values))?)?;
    d.set_item("radii", tr.radii.into_pyarray(py))?;
    d.set_item("frequency", tr.frequency.into_pyarray(py))?;
    d.set_item("report", serde_json::to_string(&rep).map_err(|e| PyRuntimeError::new_err(e.to_string()))?)?;
    Ok(d)
}

/// Mixed angular eigenpairs: `(eigenvalues, nodes, vectors[mode, node])`.
#[pyfunction]
#[pyo3(signature = (s, n_modes=4, n_theta=512))]
fn mixed_eigen<'py>(
    py: Python<'py>,
    s: f64,
    n_modes: usize,
    n_theta: usize,
) -> PyResult<(Bound<'py, PyArray1<f64>>, Bound<'py, PyArray1<f64>>, Bound<'py, PyArray2<f64>>)> {
    let e = solve_mixed_eigen(make_params(s).map_err(err)?, n_modes, n_theta).map_err(err)?;
    let vecs = PyArray2::from_vec2(py, &e.eigenvectors)?;
    Ok((e.eigenvalues.into_pyarray(py), e.nodes.into_pyarray(py), vecs))
}

/// Half-line kernel values at heights `y` for each abscissa in `x`.
#[pyfunction]
fn poisson_kernel<'py>(py: Python<'py>, s: f64, x: PyReadonlyArray1<'py, f64>, y: f64) -> PyResult<Bound<'py, PyArray1<f64>>> {
    let k = KernelEval::new(1, make_params(s).map_err(err)?).map_err(err)?;
    let vals = x.as_slice()?.iter().map(|&xi| kernel_eval(&[xi], y, &k)).collect::<::fracseg::Result<Vec<_>>>().map_err(err)?;
    Ok(vals.into_pyarray(py))
}

/// Radial profile of the fractional capacity problem: `(t, phi, phi0)`.
#[pyfunction]
#[pyo3(signature = (s, t_max=12.0))]
fn solve_phi<'py>(py: Python<'py>, s: f64, t_max: f64) -> PyResult<(Bound<'py, PyArray1<f64>>, Bound<'py, PyArray1<f64>>, f64)> {
    let sol = phi(make_params(s).map_err(err)?, t_max).map_err(err)?;
    Ok((sol.t.into_pyarray(py), sol.phi.into_pyarray(py), sol.phi0))
}

/// One acceptance criterion as a JSON string.
#[pyfunction]
#[pyo3(signature = (id, s=0.5, resolution="reference", seed=1))]
fn run_criterion(py: Python<'_>, id: u32, s: f64, resolution: &str, seed: u64) -> PyResult<String> {
    let options = SuiteOptions { s, resolution: Resolution::parse(resolution).map_err(err)?, seed };
    let result = py.detach(|| SuiteContext::new(options).and_then(|ctx| criterion(&ctx, id))).map_err(err)?;
    serde_json::to_string(&result).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "fracseg")]
fn fracseg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(lambda1, m)?)?;
    m.add_function(wrap_pyfunction!(solve_profile, m)?)?;
    m.add_function(wrap_pyfunction!(mixed_eigen, m)?)?;
    m.add_function(wrap_pyfunction!(poisson_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(solve_phi, m)?)?;
    m.add_function(wrap_pyfunction!(run_criterion, m)?)?;
    Ok(())
}
