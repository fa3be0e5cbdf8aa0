//! Exercise the Python-facing functions through an embedded interpreter.

use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};

fn with_module<F: FnOnce(&Bound<'_, PyModule>)>(f: F) {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "entangle2d").unwrap();
        entangle2d::register(&m).unwrap();
        f(&m);
    });
}

#[test]
fn coeff_e_returns_row_dict() {
    with_module(|m| {
        let row = m.getattr("coeff_e").unwrap().call1((0.8,)).unwrap();
        let row = row.cast::<PyDict>().unwrap();
        let e: f64 = row.get_item("E").unwrap().unwrap().extract().unwrap();
        assert!((e - 0.8203).abs() < 2e-3);
    });
}

#[test]
fn invalid_mass_fraction_raises_value_error() {
    with_module(|m| {
        let err = m.getattr("coeff_e").unwrap().call1((1.5,)).unwrap_err();
        Python::attach(|py| assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py)));
    });
}

#[test]
fn special_functions_and_scattering_length() {
    with_module(|m| {
        let k: f64 = m.getattr("elliptic_k").unwrap().call1((0.25,)).unwrap().extract().unwrap();
        assert!((k - 1.685750354812596).abs() < 1e-14);
        let (j, _err): (f64, f64) = m.getattr("coeff_j").unwrap().call1((0.5,)).unwrap().extract().unwrap();
        assert!((j / std::f64::consts::PI.powi(3) - 1.0).abs() < 1e-8);
        let ia: f64 = m
            .getattr("inverse_scattering_length")
            .unwrap()
            .call1(("gaussian_well", -1.0, 1.0, 4.0))
            .unwrap()
            .extract()
            .unwrap();
        let ln_a: f64 = m
            .getattr("radial_log_scattering_length")
            .unwrap()
            .call1(("gaussian_well", -1.0, 1.0, 4.0))
            .unwrap()
            .extract()
            .unwrap();
        assert!((ia + ln_a).abs() < 0.02);
        assert!(m.getattr("inverse_scattering_length").unwrap().call1(("box", -1.0, 1.0, 4.0)).is_err());
    });
}
