//! Python bindings for `caos_core`.
//!
//! Structured results (plans, reports, scenarios) cross the boundary as JSON
//! and come back as plain `dict`s, so their layout matches the files the CLI
//! writes.

use std::path::PathBuf;

use caos_core::freq_plan::{self, DEFAULT_MAX_HARMONIC};
use caos_core::runner;
use caos_core::scenario::{self, Job};
use caos_core::{metrics, Error};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyComplex;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    if e.is_io() {
        PyOSError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| to_py(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A designed power-of-two carrier ladder.
#[pyclass(name = "FrequencyPlan", frozen)]
struct PyFrequencyPlan(freq_plan::FrequencyPlan);

#[pymethods]
impl PyFrequencyPlan {
    #[getter]
    fn channels(&self) -> Vec<f64> {
        self.0.channels.clone()
    }

    #[getter]
    fn bins(&self) -> Vec<usize> {
        self.0.bins.clone()
    }

    #[getter]
    fn fs(&self) -> f64 {
        self.0.fs
    }

    #[getter]
    fn delta_f(&self) -> f64 {
        self.0.delta_f
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.0.duration
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        freq_plan::FrequencyPlan::from_json(text)
            .map(Self)
            .map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "FrequencyPlan(duration={}, fs={}, channels={:?})",
            self.0.duration, self.0.fs, self.0.channels
        )
    }
}

/// Audit result for a carrier list.
#[pyclass(name = "ValidationReport", frozen)]
struct PyValidationReport(freq_plan::ValidationReport);

#[pymethods]
impl PyValidationReport {
    #[getter]
    fn passed(&self) -> bool {
        self.0.passed()
    }

    /// Sorted input positions with at least one failing flag.
    #[getter]
    fn flagged(&self) -> Vec<usize> {
        self.0.flagged_indices().into_iter().collect()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.0)
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __bool__(&self) -> bool {
        self.0.passed()
    }
}

/// A decoded image with its row-major values.
#[pyclass(name = "Image", frozen)]
struct PyImage {
    #[pyo3(get)]
    label: String,
    #[pyo3(get)]
    rows: usize,
    #[pyo3(get)]
    cols: usize,
    #[pyo3(get)]
    values: Vec<f64>,
    #[pyo3(get)]
    truth: Vec<f64>,
}

#[pymethods]
impl PyImage {
    fn get(&self, row: usize, col: usize) -> PyResult<f64> {
        if row >= self.rows || col >= self.cols {
            return Err(PyValueError::new_err("pixel index out of range"));
        }
        Ok(self.values[row * self.cols + col])
    }

    /// Rows as nested lists.
    fn to_list(&self) -> Vec<Vec<f64>> {
        self.values
            .chunks(self.cols.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }
}

/// Result of an in-memory simulation.
#[pyclass(name = "Simulation", frozen)]
struct PySimulation(runner::Simulation);

#[pymethods]
impl PySimulation {
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.0.report)
    }

    /// The scenario with every default filled in, as JSON.
    fn resolved_json(&self) -> PyResult<String> {
        self.0.resolved.to_json().map_err(to_py)
    }

    fn summary(&self) -> String {
        self.0.report.summary()
    }

    fn images(&self) -> Vec<PyImage> {
        self.0
            .frames
            .iter()
            .map(|f| PyImage {
                label: f.label.clone(),
                rows: f.image.rows,
                cols: f.image.cols,
                values: f.image.values.clone(),
                truth: f.truth.irradiance.clone(),
            })
            .collect()
    }
}

fn load_job(source: &str) -> PyResult<Job> {
    if source.trim_start().starts_with('{') {
        Job::from_json(source).map_err(to_py)
    } else {
        scenario::preset(source).map_err(to_py)
    }
}

#[pyfunction]
#[pyo3(signature = (duration, p, m, channels))]
fn design_plan(duration: f64, p: u32, m: u32, channels: usize) -> PyResult<PyFrequencyPlan> {
    freq_plan::design_plan(duration, p, m, channels)
        .map(PyFrequencyPlan)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (frequencies, delta_f, fs = 65536.0, max_harmonic = DEFAULT_MAX_HARMONIC))]
fn validate_plan(
    frequencies: Vec<f64>,
    delta_f: f64,
    fs: f64,
    max_harmonic: u32,
) -> PyResult<PyValidationReport> {
    if !(delta_f > 0.0 && fs > 0.0) {
        return Err(PyValueError::new_err("delta_f and fs must be > 0"));
    }
    Ok(PyValidationReport(freq_plan::validate_plan(
        &frequencies,
        delta_f,
        fs,
        max_harmonic,
    )))
}

#[pyfunction]
#[pyo3(signature = (f_a, used, horizon = 8))]
fn available_slots(f_a: f64, used: Vec<f64>, horizon: u64) -> PyResult<Vec<f64>> {
    freq_plan::available_slots(f_a, &used, horizon).map_err(to_py)
}

/// Sylvester-ordered Walsh-Hadamard matrix as nested lists of +1/-1.
#[pyfunction]
fn walsh_matrix(order: usize) -> PyResult<Vec<Vec<i8>>> {
    let h = caos_core::walsh_matrix(order).map_err(to_py)?;
    Ok((0..order).map(|r| h.row(r).to_vec()).collect())
}

/// Radix-2 FFT of a real sequence.
#[pyfunction]
fn fft<'py>(py: Python<'py>, samples: Vec<f64>) -> PyResult<Vec<Bound<'py, PyComplex>>> {
    let bins = caos_core::decoder::fft::fft_real(&samples).map_err(to_py)?;
    Ok(bins
        .iter()
        .map(|c| PyComplex::from_doubles(py, c.re, c.im))
        .collect())
}

#[pyfunction]
fn dynamic_range_db(i_max: f64, i_min: f64) -> PyResult<f64> {
    metrics::dynamic_range_db(i_max, i_min).map_err(to_py)
}

#[pyfunction]
fn processing_gain_db(q: usize) -> f64 {
    metrics::processing_gain_db(q)
}

/// Caveat about published processing-gain figures for `q`, if any.
#[pyfunction]
fn processing_gain_note(q: usize) -> Option<String> {
    metrics::processing_gain_note(q)
}

#[pyfunction]
fn encoding_time(pixels: usize, channels: usize, slot_duration: f64) -> f64 {
    metrics::encoding_time(pixels, channels, slot_duration)
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    scenario::PRESET_NAMES.to_vec()
}

/// JSON document of a shipped preset.
#[pyfunction]
fn preset(name: &str) -> PyResult<String> {
    scenario::preset(name)
        .and_then(|j| j.to_json())
        .map_err(to_py)
}

/// Simulates a scenario (JSON text or preset name) without writing files.
/// Releases the GIL while running.
#[pyfunction]
fn simulate(py: Python<'_>, source: &str) -> PyResult<PySimulation> {
    let job = load_job(source)?;
    let Job::Simulation(s) = job else {
        return Err(PyValueError::new_err(
            "dispersion checks have no image; use run()",
        ));
    };
    py.detach(|| runner::simulate(&s))
        .map(PySimulation)
        .map_err(to_py)
}

/// Runs a job (JSON text or preset name) and writes its artifacts.
/// Returns the report as a dict with `output_dir` and `files` added.
#[pyfunction]
#[pyo3(signature = (source, output_dir = None))]
fn run<'py>(
    py: Python<'py>,
    source: &str,
    output_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let job = load_job(source)?;
    let outcome = py
        .detach(|| runner::run(&job, output_dir.as_deref()))
        .map_err(to_py)?;
    let report = to_dict(py, &outcome.report)?;
    report.set_item("output_dir", outcome.output_dir)?;
    report.set_item("files", outcome.files)?;
    Ok(report)
}

#[pymodule]
fn caos(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFrequencyPlan>()?;
    m.add_class::<PyValidationReport>()?;
    m.add_class::<PyImage>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(design_plan, m)?)?;
    m.add_function(wrap_pyfunction!(validate_plan, m)?)?;
    m.add_function(wrap_pyfunction!(available_slots, m)?)?;
    m.add_function(wrap_pyfunction!(walsh_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(fft, m)?)?;
    m.add_function(wrap_pyfunction!(dynamic_range_db, m)?)?;
    m.add_function(wrap_pyfunction!(processing_gain_db, m)?)?;
    m.add_function(wrap_pyfunction!(processing_gain_note, m)?)?;
    m.add_function(wrap_pyfunction!(encoding_time, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
