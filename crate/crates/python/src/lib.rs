//! Python module `entangle2d`: thin wrappers over `entangle2d_core`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use entangle2d_core::entangle::{self, EntangleError, MassPartition, DEFAULT_TOL};
use entangle2d_core::purity_oracle::{self, PurityError};
use entangle2d_core::smatrix::{self, PotentialKind, PotentialSpec, SMatrixError};
use entangle2d_core::specfun;

fn entangle_err(e: EntangleError) -> PyErr {
    match e {
        EntangleError::InvalidMassFraction(_)
        | EntangleError::InvalidMasses(..)
        | EntangleError::InvalidTolerance(_)
        | EntangleError::UnknownTerm(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn smatrix_err(e: SMatrixError) -> PyErr {
    match e {
        SMatrixError::Domain { .. } | SMatrixError::InvalidParameter(_) | SMatrixError::Degenerate(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn purity_err(e: PurityError) -> PyErr {
    match e {
        PurityError::InvalidParameter(_) => PyValueError::new_err(e.to_string()),
        PurityError::Entangle(inner) => entangle_err(inner),
        PurityError::SMatrix(inner) => smatrix_err(inner),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn masses(mu1: f64) -> PyResult<MassPartition> {
    MassPartition::new(mu1).map_err(entangle_err)
}

fn row_dict<'py>(py: Python<'py>, row: &entangle::EntanglementRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("mu1", row.mu1)?;
    d.set_item("E", row.e)?;
    d.set_item("err", row.err)?;
    Ok(d)
}

/// Entanglement coefficient E(mu1) as a dict {mu1, E, err}.
#[pyfunction]
#[pyo3(signature = (mu1, tol = DEFAULT_TOL))]
fn coeff_e<'py>(py: Python<'py>, mu1: f64, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let row = py.detach(|| entangle::coeff_e(mu1, tol)).map_err(entangle_err)?;
    row_dict(py, &row)
}

/// J(mu1, 1 - mu1) as (value, error_estimate).
#[pyfunction]
#[pyo3(signature = (mu1, tol = DEFAULT_TOL))]
fn coeff_j(py: Python<'_>, mu1: f64, tol: f64) -> PyResult<(f64, f64)> {
    let m = masses(mu1)?;
    let r = py.detach(|| entangle::coeff_j(m, tol)).map_err(entangle_err)?;
    Ok((r.value, r.error_estimate))
}

/// L(mu1, 1 - mu1) as (quadrature value, closed form).
#[pyfunction]
#[pyo3(signature = (mu1, tol = DEFAULT_TOL))]
fn coeff_l(py: Python<'_>, mu1: f64, tol: f64) -> PyResult<(f64, f64)> {
    let m = masses(mu1)?;
    let r = py.detach(|| entangle::coeff_l(m, tol)).map_err(entangle_err)?;
    Ok((r.integral.value, r.closed_form))
}

/// Rows {mu1, E, err} for each mass fraction, in input order.
#[pyfunction]
#[pyo3(signature = (mu1_values, tol = DEFAULT_TOL))]
fn table<'py>(py: Python<'py>, mu1_values: Vec<f64>, tol: f64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let rows = py.detach(|| entangle::table(&mu1_values, tol)).map_err(entangle_err)?;
    rows.iter().map(|r| row_dict(py, r)).collect()
}

/// 1 - E(mu1) / (ln sigma)^2
#[pyfunction]
fn leading_purity(py: Python<'_>, mu1: f64, sigma: f64) -> PyResult<f64> {
    py.detach(|| purity_oracle::leading_purity(mu1, sigma)).map_err(purity_err)
}

/// Brute-force purity sweep: dict {mu1, inv_a, entries, reference_E, residual_slope}.
#[pyfunction]
#[pyo3(signature = (mu1, sigmas, grid = 24, inv_a = 0.0))]
fn purity_sweep<'py>(py: Python<'py>, mu1: f64, sigmas: Vec<f64>, grid: usize, inv_a: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = py
        .detach(|| purity_oracle::estimate_e_from_sweep(mu1, &sigmas, grid, inv_a))
        .map_err(purity_err)?;
    let d = PyDict::new(py);
    d.set_item("mu1", r.mu1)?;
    d.set_item("inv_a", r.inv_a)?;
    d.set_item("grid_n", r.grid_n)?;
    d.set_item("reference_E", r.reference_e)?;
    d.set_item("residual_slope", r.residual_slope)?;
    let entries: Vec<(f64, f64, f64)> = r.entries.iter().map(|e| (e.sigma, e.purity, e.e_hat)).collect();
    d.set_item("entries", entries)?;
    Ok(d)
}

/// Purity change from a mean relative momentum: list of (ratio, deviation, normalized).
#[pyfunction]
#[pyo3(signature = (mu1, sigma, ratios, grid = 24))]
fn p0_deviation(py: Python<'_>, mu1: f64, sigma: f64, ratios: Vec<f64>, grid: usize) -> PyResult<Vec<(f64, f64, f64)>> {
    let rows = py
        .detach(|| purity_oracle::p0_deviation(mu1, sigma, &ratios, grid))
        .map_err(purity_err)?;
    Ok(rows.iter().map(|r| (r.ratio, r.deviation, r.normalized)).collect())
}

fn potential(kind: &str, strength: f64, width: f64, support_radius: f64) -> PyResult<PotentialSpec> {
    let kind = match kind {
        "gaussian_well" => PotentialKind::GaussianWell,
        "disk_well" => PotentialKind::DiskWell,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown potential kind {other:?}; expected 'gaussian_well' or 'disk_well'"
            )))
        }
    };
    let spec = match kind {
        PotentialKind::GaussianWell => PotentialSpec::gaussian_well(strength, width, support_radius),
        _ => PotentialSpec::disk_well(strength, width, support_radius),
    };
    spec.map_err(smatrix_err)
}

/// Trace-formula 1/a of an analytic potential on a mesh_n x mesh_n Nyström mesh.
#[pyfunction]
#[pyo3(signature = (kind, strength, width, support_radius, mesh_n = 16, mass = 0.5))]
fn inverse_scattering_length(
    py: Python<'_>,
    kind: &str,
    strength: f64,
    width: f64,
    support_radius: f64,
    mesh_n: usize,
    mass: f64,
) -> PyResult<f64> {
    let spec = potential(kind, strength, width, support_radius)?;
    py.detach(|| {
        let k = smatrix::assemble_zero_energy_kernels(&spec, mesh_n, mass)?;
        smatrix::inverse_scattering_length(&k)
    })
    .map_err(smatrix_err)
}

/// ln a_std from the radial zero-energy equation.
#[pyfunction]
#[pyo3(signature = (kind, strength, width, support_radius, mass = 0.5, r_max = None))]
fn radial_log_scattering_length(
    py: Python<'_>,
    kind: &str,
    strength: f64,
    width: f64,
    support_radius: f64,
    mass: f64,
    r_max: Option<f64>,
) -> PyResult<f64> {
    let spec = potential(kind, strength, width, support_radius)?;
    let r_max = r_max.unwrap_or(10.0 * support_radius);
    py.detach(|| smatrix::radial_log_scattering_length(&spec, mass, r_max))
        .map_err(smatrix_err)
}

/// exp(-|x|) I0(x)
#[pyfunction]
fn bessel_i0_scaled(x: f64) -> PyResult<f64> {
    specfun::bessel_i0_scaled(x).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Complete elliptic integral of the first kind, parameter m = k^2.
#[pyfunction]
fn elliptic_k(m: f64) -> PyResult<f64> {
    specfun::elliptic_k(m).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Add the module's functions to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(coeff_e, m)?)?;
    m.add_function(wrap_pyfunction!(coeff_j, m)?)?;
    m.add_function(wrap_pyfunction!(coeff_l, m)?)?;
    m.add_function(wrap_pyfunction!(table, m)?)?;
    m.add_function(wrap_pyfunction!(leading_purity, m)?)?;
    m.add_function(wrap_pyfunction!(purity_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(p0_deviation, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_scattering_length, m)?)?;
    m.add_function(wrap_pyfunction!(radial_log_scattering_length, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_i0_scaled, m)?)?;
    m.add_function(wrap_pyfunction!(elliptic_k, m)?)?;
    m.add("DEFAULT_TOL", DEFAULT_TOL)?;
    Ok(())
}

#[pymodule]
fn entangle2d(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
