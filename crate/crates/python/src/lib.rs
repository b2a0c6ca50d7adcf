//! Python module `pyatkde`.
//!
//! Timestamps cross the boundary as ISO-8601 strings; bare integers are
//! accepted wherever a timestamp is read and mean microseconds since the epoch.

use std::fs::File;
use std::io::{BufReader, BufWriter};

use atkde::divide::DivideConfig;
use atkde::kde::BandwidthSearchConfig;
use atkde::time::{format_timestamp as fmt_ts, parse_timestamp as parse_ts};
use atkde::{
    fit_best_distribution, fit_mean, ArrivalSimulator, AtKdeModel, ColumnMap, FitConfig, GenerationConfig, Horizon,
    ModelFile, SimulationWindow, SplitSpec,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: atkde::Error) -> PyErr {
    use atkde::Error::*;
    match e {
        Generation(_) | Model(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[derive(FromPyObject)]
enum Stamp {
    Micros(i64),
    Text(String),
}

impl Stamp {
    fn micros(&self) -> PyResult<i64> {
        match self {
            Stamp::Micros(v) => Ok(*v),
            Stamp::Text(s) => parse_ts(s).ok_or_else(|| PyValueError::new_err(format!("cannot parse timestamp {s:?}"))),
        }
    }
}

fn micros(stamps: Vec<Stamp>) -> PyResult<Vec<i64>> {
    stamps.iter().map(Stamp::micros).collect()
}

#[pyclass(name = "ArrivalDataset", module = "pyatkde")]
struct PyDataset(atkde::ArrivalDataset);

#[pymethods]
impl PyDataset {
    /// Reads an event log CSV; the first event of each case is its arrival.
    #[staticmethod]
    #[pyo3(signature = (path, case_column = "case_id", timestamp_column = "timestamp", activity_column = None))]
    fn from_event_log(
        path: &str,
        case_column: &str,
        timestamp_column: &str,
        activity_column: Option<String>,
    ) -> PyResult<Self> {
        let columns = ColumnMap {
            case_id: case_column.into(),
            timestamp: timestamp_column.into(),
            activity: activity_column,
        };
        let records = atkde::parse_event_log(path, &columns).map_err(err)?;
        Ok(Self(atkde::derive_arrivals(&records).map_err(err)?))
    }

    #[staticmethod]
    fn from_timestamps(timestamps: Vec<Stamp>) -> PyResult<Self> {
        Ok(Self(atkde::ArrivalDataset::from_timestamps(micros(timestamps)?)))
    }

    /// Temporal split: the first `train_fraction` of arrivals train.
    #[pyo3(signature = (train_fraction = 0.8))]
    fn split(&self, train_fraction: f64) -> PyResult<(Self, Self)> {
        let spec = SplitSpec::new(train_fraction).map_err(err)?;
        let (train, test) = atkde::temporal_split(&self.0, spec).map_err(err)?;
        Ok((Self(train), Self(test)))
    }

    fn daily_counts(&self) -> Vec<u64> {
        self.0.daily_counts()
    }

    fn timestamps(&self) -> Vec<String> {
        self.0.arrivals().map(fmt_ts).collect()
    }

    #[getter]
    fn num_days(&self) -> usize {
        self.0.num_days()
    }

    #[getter]
    fn first_date(&self) -> Option<String> {
        self.0.first_date().map(|d| d.to_string())
    }

    fn __len__(&self) -> usize {
        self.0.total_arrivals()
    }

    fn __repr__(&self) -> String {
        format!("ArrivalDataset({} arrivals over {} days)", self.0.total_arrivals(), self.0.num_days())
    }
}

/// A fitted arrival model: `at_kde`, `mean` or `best_distribution`.
#[pyclass(name = "Model", module = "pyatkde")]
struct PyModel {
    inner: ModelFile,
    diagnostics: Option<String>,
}

#[pymethods]
impl PyModel {
    /// Fits a model on `train`. With `test`, the default simulation window
    /// is the test window.
    #[staticmethod]
    #[pyo3(signature = (
        train, test = None, kind = "at_kde", seed = 0, window = 7, kmax = 6, bins = 3,
        sensitivities = None, factor_grid = None, validation_fraction = 0.2, seeds_per_candidate = 3
    ))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        py: Python<'_>,
        train: &PyDataset,
        test: Option<&PyDataset>,
        kind: &str,
        seed: u64,
        window: usize,
        kmax: usize,
        bins: usize,
        sensitivities: Option<Vec<f64>>,
        factor_grid: Option<Vec<f64>>,
        validation_fraction: f64,
        seeds_per_candidate: u32,
    ) -> PyResult<Self> {
        let defaults = DivideConfig::default();
        let config = FitConfig {
            divide: DivideConfig {
                window,
                max_clusters: kmax,
                sensitivities: sensitivities.unwrap_or(defaults.sensitivities.clone()),
                ..defaults
            },
            bins,
            search: BandwidthSearchConfig {
                factor_grid: factor_grid.unwrap_or(BandwidthSearchConfig::default().factor_grid),
                validation_fraction,
                seeds_per_candidate,
            },
        };
        let train_data = &train.0;
        let fitted = py.detach(|| -> atkde::Result<(ModelFile, Option<String>)> {
            Ok(match kind {
                "at_kde" => {
                    let (m, d) = AtKdeModel::fit(train_data, &config, seed)?;
                    (ModelFile::AtKde(m), Some(serde_json::to_string(&d)?))
                }
                "mean" => (ModelFile::Mean(fit_mean(train_data)?), None),
                "best_distribution" => (ModelFile::BestDistribution(fit_best_distribution(train_data)?), None),
                other => return Err(atkde::Error::Config(format!("unknown model kind {other:?}"))),
            })
        });
        let (mut inner, diagnostics) = fitted.map_err(err)?;
        if let Some(test) = test {
            inner.set_default_window(SimulationWindow::following(&train.0, &test.0));
        }
        Ok(Self { inner, diagnostics })
    }

    /// Simulates arrivals. Without `start`/`days` the model's default window is used;
    /// `num_cases` replaces the day count.
    #[pyo3(signature = (start = None, days = None, num_cases = None, seed = 0))]
    fn generate(
        &self,
        py: Python<'_>,
        start: Option<Stamp>,
        days: Option<u32>,
        num_cases: Option<u64>,
        seed: u64,
    ) -> PyResult<Vec<String>> {
        let default = self.inner.default_window();
        let missing = || PyValueError::new_err("model has no default window; pass start and days or num_cases");
        let start = match start {
            Some(s) => s.micros()?,
            None => default.ok_or_else(missing)?.start,
        };
        let horizon = match (num_cases, days) {
            (Some(n), _) => Horizon::Cases(n),
            (None, Some(d)) => Horizon::Days(d),
            (None, None) => Horizon::Days(default.ok_or_else(missing)?.days),
        };
        let config = GenerationConfig { start, horizon, seed };
        let generated = py.detach(|| self.inner.simulate(&config)).map_err(err)?;
        Ok(generated.arrivals().map(fmt_ts).collect())
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.name()
    }

    /// Fit diagnostics as JSON (AT-KDE only).
    #[getter]
    fn diagnostics(&self) -> Option<String> {
        self.diagnostics.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_json(&mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = ModelFile::read_json(text.as_bytes()).map_err(err)?;
        Ok(Self { inner, diagnostics: None })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let file = File::create(path).map_err(|e| PyValueError::new_err(format!("cannot write {path}: {e}")))?;
        self.inner.write_json(BufWriter::new(file)).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyValueError::new_err(format!("cannot read {path}: {e}")))?;
        let inner = ModelFile::read_json(BufReader::new(file)).map_err(err)?;
        Ok(Self { inner, diagnostics: None })
    }

    fn __repr__(&self) -> String {
        format!("Model(kind={:?})", self.inner.name())
    }
}

/// Returns `(cadd, sqrt_cadd)` between two arrival lists.
#[pyfunction]
fn cadd(test: Vec<Stamp>, sim: Vec<Stamp>) -> PyResult<(f64, f64)> {
    let report = atkde::cadd(&micros(test)?, &micros(sim)?).map_err(err)?;
    Ok((report.cadd, report.sqrt_cadd))
}

#[pyfunction]
fn silverman_bandwidth(samples: Vec<f64>) -> f64 {
    atkde::kde::silverman_bandwidth(&samples)
}

#[pyfunction]
fn parse_timestamp(text: &str) -> PyResult<i64> {
    Stamp::Text(text.into()).micros()
}

#[pyfunction]
fn format_timestamp(micros: i64) -> String {
    fmt_ts(micros)
}

#[pymodule]
fn pyatkde(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(cadd, m)?)?;
    m.add_function(wrap_pyfunction!(silverman_bandwidth, m)?)?;
    m.add_function(wrap_pyfunction!(parse_timestamp, m)?)?;
    m.add_function(wrap_pyfunction!(format_timestamp, m)?)?;
    Ok(())
}
