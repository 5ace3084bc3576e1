//! Python bindings for `etas-core`.

use std::fs::File;
use std::io::BufWriter;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use etas_core::catalog::{parse_catalog, write_catalog, ColumnMap};
use etas_core::decluster::{classify, isdm_fit, FitOptions, OptimizerKind};
use etas_core::diagnostics::{ks_uniform_test, transformed_times, uniform_residuals};
use etas_core::error::EtasError as CoreError;
use etas_core::likelihood::{loglik, SpatialMass};
use etas_core::model::{branching_ratio, EtasParams, MagnitudeModel, ParamName};
use etas_core::output::{to_json_string, FitReport};
use etas_core::simulate::{simulate as core_simulate, simulate_thinning, SimConfig};
use etas_core::timescale::{apply_scale as core_apply_scale, TimeScale};

create_exception!(etas, EtasError, PyException);

fn err(e: CoreError) -> PyErr {
    match e {
        CoreError::Io(e) => PyIOError::new_err(e.to_string()),
        CoreError::Param(_) | CoreError::Domain(_) | CoreError::Supercritical { .. } => PyValueError::new_err(e.to_string()),
        other => EtasError::new_err(other.to_string()),
    }
}

#[pyclass(name = "Region", module = "etas", from_py_object)]
#[derive(Clone, Copy)]
struct PyRegion(etas_core::Region);

#[pymethods]
impl PyRegion {
    #[new]
    fn new(lon_min: f64, lon_max: f64, lat_min: f64, lat_max: f64) -> PyResult<Self> {
        etas_core::Region::new(lon_min, lon_max, lat_min, lat_max).map(PyRegion).map_err(err)
    }

    #[getter]
    fn bounds(&self) -> (f64, f64, f64, f64) {
        (self.0.lon_min, self.0.lon_max, self.0.lat_min, self.0.lat_max)
    }

    #[getter]
    fn area(&self) -> f64 {
        self.0.area()
    }

    fn contains(&self, lon: f64, lat: f64) -> bool {
        self.0.contains(lon, lat)
    }

    fn __repr__(&self) -> String {
        let (a, b, c, d) = self.bounds();
        format!("Region({a}, {b}, {c}, {d})")
    }
}

#[pyclass(name = "Params", module = "etas", from_py_object)]
#[derive(Clone, Copy)]
struct PyParams(EtasParams);

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (mu, a, alpha, c, p, d, gamma, q))]
    #[allow(clippy::too_many_arguments)]
    fn new(mu: f64, a: f64, alpha: f64, c: f64, p: f64, d: f64, gamma: f64, q: f64) -> PyResult<Self> {
        let params = EtasParams { mu, a, alpha, c, p, d, gamma, q };
        params.validate().map_err(err)?;
        Ok(PyParams(params))
    }

    /// Moment-style starting values for a catalog of `n_target` events.
    #[staticmethod]
    fn initial(n_target: usize, duration: f64) -> Self {
        PyParams(EtasParams::initial(n_target, duration))
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for name in ParamName::ALL {
            d.set_item(name.as_str(), self.0.get(name))?;
        }
        Ok(d)
    }

    fn branching_ratio(&self, beta: f64) -> PyResult<f64> {
        branching_ratio(&self.0, &MagnitudeModel::Exponential { beta }).map_err(err)
    }

    fn __getitem__(&self, name: &str) -> PyResult<f64> {
        let name: ParamName = name.parse().map_err(err)?;
        Ok(self.0.get(name))
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!(
            "Params(mu={}, a={}, alpha={}, c={}, p={}, d={}, gamma={}, q={})",
            p.mu, p.a, p.alpha, p.c, p.p, p.d, p.gamma, p.q
        )
    }
}

#[pyclass(name = "Catalog", module = "etas", from_py_object)]
#[derive(Clone)]
struct PyCatalog(etas_core::Catalog);

#[pymethods]
impl PyCatalog {
    /// Builds a catalog from parallel columns.
    #[new]
    #[pyo3(signature = (t, lon, lat, mag, region, duration, m0, depth=None, t_start=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        t: Vec<f64>,
        lon: Vec<f64>,
        lat: Vec<f64>,
        mag: Vec<f64>,
        region: PyRegion,
        duration: f64,
        m0: f64,
        depth: Option<Vec<f64>>,
        t_start: f64,
    ) -> PyResult<Self> {
        let n = t.len();
        if lon.len() != n || lat.len() != n || mag.len() != n || depth.as_ref().is_some_and(|d| d.len() != n) {
            return Err(PyValueError::new_err("columns differ in length"));
        }
        let events = (0..n)
            .map(|i| etas_core::Event::new(t[i], lon[i], lat[i], depth.as_ref().map_or(0.0, |d| d[i]), mag[i]))
            .collect();
        etas_core::Catalog::new(events, region.0, t_start, duration, m0).map(PyCatalog).map_err(err)
    }

    /// Reads a ComCat export or a catalog written by `write_csv`.
    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        let outcome = parse_catalog(file, &ColumnMap::default()).map_err(err)?;
        Ok(PyCatalog(outcome.catalog))
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        let file = File::create(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        write_catalog(&self.0, BufWriter::new(file)).map_err(err)
    }

    /// Restricts to a region, magnitude threshold and time window.
    fn filter(&self, region: PyRegion, m0: f64, t_start: f64, duration: f64) -> PyResult<Self> {
        self.0.filter(region.0, m0, t_start, duration).map(PyCatalog).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn n_target(&self) -> usize {
        self.0.n_target()
    }

    #[getter]
    fn region(&self) -> PyRegion {
        PyRegion(self.0.region())
    }

    #[getter]
    fn t_start(&self) -> f64 {
        self.0.t_start()
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.0.duration()
    }

    #[getter]
    fn m0(&self) -> f64 {
        self.0.m0()
    }

    #[getter]
    fn t(&self) -> Vec<f64> {
        self.0.events().iter().map(|e| e.t).collect()
    }

    #[getter]
    fn lon(&self) -> Vec<f64> {
        self.0.events().iter().map(|e| e.lon).collect()
    }

    #[getter]
    fn lat(&self) -> Vec<f64> {
        self.0.events().iter().map(|e| e.lat).collect()
    }

    #[getter]
    fn depth(&self) -> Vec<f64> {
        self.0.events().iter().map(|e| e.depth).collect()
    }

    #[getter]
    fn mag(&self) -> Vec<f64> {
        self.0.events().iter().map(|e| e.mag).collect()
    }

    fn __repr__(&self) -> String {
        format!("Catalog({} events, {} targets, duration {})", self.0.len(), self.0.n_target(), self.0.duration())
    }
}

#[pyclass(name = "Fit", module = "etas")]
struct PyFit {
    fit: etas_core::FitResult,
    cat: etas_core::Catalog,
}

#[pymethods]
impl PyFit {
    #[getter]
    fn params(&self) -> PyParams {
        PyParams(self.fit.params)
    }

    #[getter]
    fn magnitude<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        match self.fit.magnitude {
            MagnitudeModel::Exponential { beta } => {
                d.set_item("kind", "exponential")?;
                d.set_item("beta", beta)?;
            }
            MagnitudeModel::Gamma { shape, rate } => {
                d.set_item("kind", "gamma")?;
                d.set_item("shape", shape)?;
                d.set_item("rate", rate)?;
            }
        }
        Ok(d)
    }

    #[getter]
    fn loglik(&self) -> (f64, f64, f64) {
        let l = self.fit.loglik;
        (l.l1, l.l2, l.total)
    }

    #[getter]
    fn aic(&self) -> f64 {
        self.fit.aic
    }

    #[getter]
    fn branching_ratio(&self) -> Option<f64> {
        self.fit.branching_ratio
    }

    #[getter]
    fn converged(&self) -> bool {
        self.fit.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.fit.iterations
    }

    /// Background probability of every event.
    #[getter]
    fn bg_probs(&self) -> Vec<f64> {
        self.fit.probs.bg.clone()
    }

    /// Standard errors by parameter name, when they were computed.
    #[getter]
    fn stderr<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyDict>>> {
        let Some(se) = &self.fit.stderr else {
            return Ok(None);
        };
        let d = PyDict::new(py);
        for (name, v) in &se.params {
            d.set_item(name.as_str(), v)?;
        }
        for (name, v) in &se.magnitude {
            d.set_item(name, v)?;
        }
        Ok(Some(d))
    }

    /// `"background"`, `"triggered"` or `"uncertain"` per event.
    #[pyo3(signature = (threshold=0.95))]
    fn labels(&self, threshold: f64) -> PyResult<Vec<&'static str>> {
        Ok(classify(&self.fit.probs, threshold).map_err(err)?.into_iter().map(|l| l.as_str()).collect())
    }

    /// The fit report serialised as it appears in `fit.json`.
    #[pyo3(signature = (scale="ideal"))]
    fn to_json(&self, scale: &str) -> PyResult<String> {
        to_json_string(&FitReport::new(&self.fit, &self.cat, scale)).map_err(err)
    }
}

/// Fits the model by iterative stochastic declustering.
#[pyfunction]
#[pyo3(signature = (catalog, initial=None, variant="spatio_temporal", optimizer="dfp", fixed=Vec::new(), exact_mass=false, stderr=true))]
fn fit(
    py: Python<'_>,
    catalog: &PyCatalog,
    initial: Option<PyParams>,
    variant: &str,
    optimizer: &str,
    fixed: Vec<String>,
    exact_mass: bool,
    stderr: bool,
) -> PyResult<PyFit> {
    let cat = &catalog.0;
    let opts = FitOptions {
        variant: serde_json::from_value(serde_json::Value::String(variant.into()))
            .map_err(|_| PyValueError::new_err(format!("unknown variant '{variant}'")))?,
        optimizer: match optimizer {
            "dfp" => OptimizerKind::Dfp,
            "nm" | "nelder_mead" => OptimizerKind::NelderMead,
            other => return Err(PyValueError::new_err(format!("unknown optimizer '{other}'"))),
        },
        fixed: fixed.iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(err)?,
        spatial_mass: if exact_mass { SpatialMass::Exact } else { SpatialMass::Infinite },
        compute_stderr: stderr,
        ..Default::default()
    };
    let init = initial.map_or_else(|| EtasParams::initial(cat.n_target(), cat.duration()), |p| p.0);
    let result = py.detach(|| isdm_fit(cat, &init, &opts)).map_err(err)?;
    Ok(PyFit {
        fit: result,
        cat: cat.clone(),
    })
}

/// Simulates a catalog; returns it with each event's parent index
/// (-1 background, -2 parent outside the region).
#[pyfunction]
#[pyo3(signature = (params, beta, region, duration, m0, seed, method="branching"))]
fn simulate(
    py: Python<'_>,
    params: PyParams,
    beta: f64,
    region: PyRegion,
    duration: f64,
    m0: f64,
    seed: u64,
    method: &str,
) -> PyResult<(PyCatalog, Vec<i64>)> {
    let cfg = SimConfig::new(params.0, MagnitudeModel::Exponential { beta }, region.0, duration, m0, seed).map_err(err)?;
    let sim = match method {
        "branching" => py.detach(|| core_simulate(&cfg)),
        "thinning" => py.detach(|| simulate_thinning(&cfg)),
        other => return Err(PyValueError::new_err(format!("unknown method '{other}'"))),
    }
    .map_err(err)?;
    Ok((PyCatalog(sim.catalog), sim.parent))
}

/// Rescales catalog times: `ideal`, `calib:W`, `log` or `power:W`.
#[pyfunction]
fn apply_scale(catalog: &PyCatalog, scale: &str) -> PyResult<PyCatalog> {
    let scale: TimeScale = scale.parse().map_err(err)?;
    core_apply_scale(&catalog.0, &scale).map(PyCatalog).map_err(err)
}

/// `(l1, l2, total)` at fixed parameters, ground variant.
#[pyfunction]
fn ground_loglik(catalog: &PyCatalog, params: PyParams, beta: f64) -> PyResult<(f64, f64, f64)> {
    let l = loglik(
        &catalog.0,
        &params.0,
        &MagnitudeModel::Exponential { beta },
        None,
        etas_core::Variant::GroundTemporal,
    )
    .map_err(err)?;
    Ok((l.l1, l.l2, l.total))
}

/// Time-rescaling KS test of the ground model: `(statistic, p_value)`.
#[pyfunction]
fn ks_test(catalog: &PyCatalog, params: PyParams) -> PyResult<(f64, Option<f64>)> {
    let tau = transformed_times(&catalog.0, &params.0, None).map_err(err)?;
    let ks = ks_uniform_test(&uniform_residuals(&tau).map_err(err)?).map_err(err)?;
    Ok((ks.statistic, ks.p_value))
}

#[pymodule]
fn etas(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EtasError", m.py().get_type::<EtasError>())?;
    m.add_class::<PyRegion>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyCatalog>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(apply_scale, m)?)?;
    m.add_function(wrap_pyfunction!(ground_loglik, m)?)?;
    m.add_function(wrap_pyfunction!(ks_test, m)?)?;
    Ok(())
}
