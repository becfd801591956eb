//! Python bindings: the measurement operator, solvers, bound evaluators and
//! the experiment runner. Complex vectors cross as lists of `complex`;
//! structured results cross as JSON strings.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use quadcs::harness::{self, ExperimentConfig};
use quadcs::operator::{build_fd_operator, chipping_sequence, measurement_count, FrequencyDictionary, MeasurementOperator};
use quadcs::recovery::{self, SolverSettings};
use quadcs::rip::{self, RipParams};
use quadcs::waveforms::{NyquistGrid, WaveformSpec};

fn err(e: quadcs::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn spec_for(waveform: &str, bandwidth: f64, tp: f64) -> PyResult<WaveformSpec> {
    match waveform {
        "lfm" => WaveformSpec::lfm(tp, bandwidth).map_err(err),
        "zc" => WaveformSpec::zadoff_chu(tp, bandwidth, 1).map_err(err),
        other => Err(PyValueError::new_err(format!("unknown waveform {other:?}, expected \"lfm\" or \"zc\""))),
    }
}

/// Frequency-domain measurement operator `M̂` for one chipping seed.
#[pyclass(name = "Operator", frozen)]
struct PyOperator {
    inner: MeasurementOperator,
}

#[pymethods]
impl PyOperator {
    #[new]
    #[pyo3(signature = (b_cs, seed, waveform = "lfm", bandwidth = 100e6, t_obs = 20.48e-6, tp = 10.24e-6))]
    fn new(b_cs: f64, seed: u64, waveform: &str, bandwidth: f64, t_obs: f64, tp: f64) -> PyResult<Self> {
        let spec = spec_for(waveform, bandwidth, tp)?;
        let grid = NyquistGrid::new(bandwidth, t_obs, tp).map_err(err)?;
        let m = measurement_count(grid.n_period, b_cs, t_obs).map_err(err)?;
        let chips = chipping_sequence(seed, grid.n_period).map_err(err)?;
        Ok(PyOperator { inner: build_fd_operator(&spec, &grid, &chips, m).map_err(err)? })
    }

    /// `(M, N)`.
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.rows(), self.inner.cols())
    }

    fn apply(&self, x: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        self.inner.apply(&x).map_err(err)
    }

    fn adjoint(&self, y: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        self.inner.adjoint(&y).map_err(err)
    }

    /// Basis pursuit; returns `(x, converged)`.
    fn solve_bp(&self, b: Vec<Complex64>) -> PyResult<(Vec<Complex64>, bool)> {
        let r = recovery::solve_bp(&self.inner, &b, &SolverSettings::default()).map_err(err)?;
        Ok((r.x, r.converged))
    }

    /// Basis pursuit denoise with residual bound `epsilon`.
    fn solve_bpdn(&self, b: Vec<Complex64>, epsilon: f64) -> PyResult<(Vec<Complex64>, bool)> {
        let r = recovery::solve_bpdn(&self.inner, &b, epsilon, &SolverSettings::default()).map_err(err)?;
        Ok((r.x, r.converged))
    }

    fn solve_omp(&self, b: Vec<Complex64>, k: usize) -> PyResult<Vec<Complex64>> {
        Ok(recovery::solve_omp(&self.inner, &b, k, 1e-12).map_err(err)?.x)
    }

    /// `σ_ṽ` of a coefficient vector in this operator's dictionary.
    fn sigma_v(&self, v: Vec<Complex64>) -> PyResult<f64> {
        rip::sigma_v(self.inner.dictionary(), &v).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Operator(M={}, N={})", self.inner.rows(), self.inner.cols())
    }
}

/// Largest off-diagonal magnitude of the dictionary Gram matrix.
#[pyfunction]
#[pyo3(signature = (waveform = "lfm", bandwidth = 100e6, t_obs = 20.48e-6, tp = 10.24e-6))]
fn gram_max_off_diagonal(waveform: &str, bandwidth: f64, t_obs: f64, tp: f64) -> PyResult<f64> {
    let spec = spec_for(waveform, bandwidth, tp)?;
    let grid = NyquistGrid::new(bandwidth, t_obs, tp).map_err(err)?;
    Ok(FrequencyDictionary::from_waveform(&spec, &grid).map_err(err)?.gram().max_off_diagonal)
}

#[pyfunction]
fn rip_sample_bound(k: usize, n: usize, delta: f64, eta: f64) -> PyResult<usize> {
    rip::rip_sample_bound(&RipParams { k, n, m: 0, delta, eta, epsilon: 1.0 }).map_err(err)
}

/// SHA-256 of a JSON experiment config, as recorded in run summaries.
#[pyfunction]
fn config_hash(config_json: &str) -> PyResult<String> {
    Ok(ExperimentConfig::from_json(config_json).map_err(err)?.hash())
}

/// Runs an experiment; returns the point summaries as JSON. The GIL is
/// released while trials run.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(err)?;
    let res = py.detach(|| harness::run_experiment(&cfg)).map_err(err)?;
    serde_json::to_string(&res.points).map_err(json_err)
}

#[pymodule]
fn quadcs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOperator>()?;
    m.add_function(wrap_pyfunction!(gram_max_off_diagonal, m)?)?;
    m.add_function(wrap_pyfunction!(rip_sample_bound, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
