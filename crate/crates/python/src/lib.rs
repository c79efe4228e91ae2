//! Python bindings. Input problems raise `ValueError`, numerical failures
//! raise `ArithmeticError`.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use phenocurve::clustering::DistanceVariant;
use phenocurve::harmonic::HarmonicModel;
use phenocurve::phenodates::{self, Phase};
use phenocurve::plot::{render_spiral, SpiralStyle};
use phenocurve::series::{ObservationGrid, PixelSeries};
use phenocurve::simulation::StudySpec;
use phenocurve::{fpca, harmonic, Error, RunConfig};

fn to_py(e: Error) -> PyErr {
    if e.exit_code() == 3 {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn distance(name: &str) -> PyResult<DistanceVariant> {
    name.parse().map_err(to_py)
}

/// Six phenological dates of one trend.
#[pyclass(name = "PhenoDates", module = "phenocurve_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPhenoDates {
    inner: phenodates::PhenoDates,
}

#[pymethods]
impl PyPhenoDates {
    /// Positions on `[0, period]` keyed by abbreviation (GU, SoS, Mat, Sen, EoS, Dor).
    fn positions(&self) -> BTreeMap<String, Option<f64>> {
        Phase::ALL
            .iter()
            .map(|p| (p.abbrev().to_string(), self.inner.position(*p)))
            .collect()
    }

    /// Days of year keyed by abbreviation.
    fn doys(&self) -> BTreeMap<String, Option<u32>> {
        Phase::ALL
            .iter()
            .map(|p| (p.abbrev().to_string(), self.inner.doy(*p)))
            .collect()
    }

    fn flags(&self) -> Vec<String> {
        self.inner.flags.iter().map(|f| f.to_string()).collect()
    }

    #[getter]
    fn period(&self) -> f64 {
        self.inner.period()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let doys: Vec<String> = Phase::ALL
            .iter()
            .map(|p| format!("{}={}", p.abbrev(), self.inner.doy(*p).map_or("NA".into(), |d| d.to_string())))
            .collect();
        format!("PhenoDates({})", doys.join(", "))
    }
}

/// Result of fitting one pixel.
#[pyclass(name = "PixelFit", module = "phenocurve_py", frozen)]
struct PyPixelFit {
    #[pyo3(get)]
    dates: PyPhenoDates,
    /// Idealized curve sampled on the resampling grid.
    #[pyo3(get)]
    trend: Vec<f64>,
    /// Season indices (among usable seasons) that entered the FPCA.
    #[pyo3(get)]
    used: Vec<usize>,
    #[pyo3(get)]
    dominating_found: bool,
    #[pyo3(get)]
    lambda_tau: f64,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    scores: Vec<Vec<f64>>,
}

/// A configured pipeline. Keyword arguments mirror the command-line flags.
#[pyclass(name = "Pipeline", module = "phenocurve_py", frozen)]
struct PyPipeline {
    inner: phenocurve::Pipeline,
    config: RunConfig,
}

#[pymethods]
impl PyPipeline {
    #[new]
    #[pyo3(signature = (
        per_season_len=23, seasons=24, num_freq=3, distance="dtw_basic", h=1, samples=50,
        grid_n=365, dense_n=3650, dominating_threshold=None, max_iter=200, tol=1e-6, scale=None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        per_season_len: usize,
        seasons: usize,
        num_freq: usize,
        distance: &str,
        h: usize,
        samples: usize,
        grid_n: usize,
        dense_n: usize,
        dominating_threshold: Option<usize>,
        max_iter: usize,
        tol: f64,
        scale: Option<f64>,
    ) -> PyResult<Self> {
        let config = RunConfig {
            per_season_len,
            seasons,
            num_freq,
            distance: self::distance(distance)?,
            h,
            samples,
            grid_n,
            dense_n,
            dominating_threshold,
            max_iter,
            tol,
            scale,
            ..RunConfig::default()
        };
        let inner = phenocurve::Pipeline::new(config.clone()).map_err(to_py)?;
        Ok(Self { inner, config })
    }

    /// Fits one pixel from a flat list of `seasons * per_season_len` values;
    /// `None` or NaN marks a missing observation.
    fn fit_pixel(&self, py: Python<'_>, values: Vec<Option<f64>>) -> PyResult<PyPixelFit> {
        let values: Vec<Option<f64>> = values.into_iter().map(|v| v.filter(|x| !x.is_nan())).collect();
        let fit = py
            .detach(|| {
                let grid = ObservationGrid::new(self.config.per_season_len, self.config.seasons)?;
                let series = PixelSeries::from_options(grid, &values)?;
                self.inner.fit_pixel(&series)
            })
            .map_err(to_py)?;
        Ok(PyPixelFit {
            dates: PyPhenoDates { inner: fit.dates },
            trend: fit.trend.values,
            used: fit.used,
            dominating_found: fit.dominating_found,
            lambda_tau: fit.fit.lambda_tau,
            iterations: fit.fit.iterations,
            converged: fit.fit.converged,
            scores: fit.fit.scores,
        })
    }
}

/// Least-squares harmonic fit of one season observed at `t = 1..L`.
/// Returns `(intercept, sin_coefs, cos_coefs)`.
#[pyfunction]
fn fit_harmonic(y: Vec<f64>, num_freq: usize) -> PyResult<(f64, Vec<f64>, Vec<f64>)> {
    let (m, _) = harmonic::fit_harmonic(&y, num_freq).map_err(to_py)?;
    Ok((m.intercept(), m.sin_coefs().to_vec(), m.cos_coefs().to_vec()))
}

/// Dates of `c0 + c1 cos(2πt/period - φ)` computed analytically.
#[pyfunction]
#[pyo3(signature = (c1, period, phase_deg, c0=0.0))]
fn closed_form_phenodates(c1: f64, period: f64, phase_deg: f64, c0: f64) -> PyResult<PyPhenoDates> {
    let inner = harmonic::closed_form_phenodates(c0, c1, period, phase_deg).map_err(to_py)?;
    Ok(PyPhenoDates { inner })
}

/// Dates of a harmonic trend given by its coefficients.
#[pyfunction]
#[pyo3(signature = (intercept, sin_coefs, cos_coefs, period, dense_n=3650))]
fn dates_from_harmonics(
    intercept: f64,
    sin_coefs: Vec<f64>,
    cos_coefs: Vec<f64>,
    period: f64,
    dense_n: usize,
) -> PyResult<PyPhenoDates> {
    let model = HarmonicModel::new(intercept, sin_coefs, cos_coefs, period).map_err(to_py)?;
    let inner = phenodates::extract_from_model(&model, dense_n).map_err(to_py)?;
    Ok(PyPhenoDates { inner })
}

/// Dates of a trend sampled on an equally spaced grid over one period.
#[pyfunction]
#[pyo3(signature = (values, period, num_freq=3, dense_n=3650))]
fn extract_phenodates(values: Vec<f64>, period: f64, num_freq: usize, dense_n: usize) -> PyResult<PyPhenoDates> {
    let trend = fpca::TrendCurve { values, period };
    let inner = phenodates::extract_phenodates(&trend, num_freq, dense_n).map_err(to_py)?;
    Ok(PyPhenoDates { inner })
}

/// Dynamic time warping distance ("dtw_basic" or "dtw2").
#[pyfunction]
#[pyo3(signature = (a, b, variant="dtw_basic"))]
fn dtw_distance(a: Vec<f64>, b: Vec<f64>, variant: &str) -> PyResult<f64> {
    phenocurve::clustering::dtw_distance(&a, &b, distance(variant)?).map_err(to_py)
}

/// Checks the seasonal order of six days of year (`None` for absent dates).
/// Returns whether the order holds and the diagnostic flags.
#[pyfunction]
fn check_ordering(doys: [Option<u32>; 6]) -> (bool, Vec<String>) {
    let dates = phenodates::PhenoDates::from_doys(doys);
    let (ok, flags) = phenodates::check_ordering(&dates);
    (ok, flags.iter().map(|f| f.to_string()).collect())
}

/// Spiral SVG from one six-entry day-of-year list per pixel.
#[pyfunction]
fn spiral_svg(pixels: Vec<[Option<u32>; 6]>) -> PyResult<String> {
    let dates: Vec<_> = pixels.into_iter().map(phenodates::PhenoDates::from_doys).collect();
    render_spiral(&dates, &SpiralStyle::default()).map_err(to_py)
}

/// Runs a simulation study described by a JSON document; returns CSV text.
#[pyfunction]
#[pyo3(signature = (study_json, reps=None))]
fn simulate(py: Python<'_>, study_json: &str, reps: Option<usize>) -> PyResult<String> {
    let mut spec = StudySpec::from_json(study_json).map_err(to_py)?;
    if let Some(r) = reps {
        spec.reps = r;
    }
    py.detach(|| spec.run().and_then(|t| t.to_csv_string())).map_err(to_py)
}

#[pymodule]
fn phenocurve_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPipeline>()?;
    m.add_class::<PyPixelFit>()?;
    m.add_class::<PyPhenoDates>()?;
    m.add_function(wrap_pyfunction!(fit_harmonic, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_phenodates, m)?)?;
    m.add_function(wrap_pyfunction!(dates_from_harmonics, m)?)?;
    m.add_function(wrap_pyfunction!(extract_phenodates, m)?)?;
    m.add_function(wrap_pyfunction!(dtw_distance, m)?)?;
    m.add_function(wrap_pyfunction!(check_ordering, m)?)?;
    m.add_function(wrap_pyfunction!(spiral_svg, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
