//! Python bindings for the `stinfo` library.
//!
//! Cell indices are zero-based here (the command-line tool is one-based).
//! Structured results are returned as plain dicts and lists.

use pyo3::exceptions::{PyIndexError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::Value;

use stinfo::arm_geometry::{self, ReferenceFrame, N_REFERENCE};
use stinfo::estimators::{self, build_condition_set, Design, MeasureConfig};
use stinfo::localizer;
use stinfo::pipeline::{self, ShuffleTarget, SurrogateSpec, DEFAULT_LOCAL_TAUS, DEFAULT_SCAN_TAUS};
use stinfo::synthetic::{self, ChainSpec, DriveKind, NoiseKind};
use stinfo::{io, symbolization, Error, SpatioTemporalField, TieRule};

fn err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.root() {
        Error::Io(_) => PyOSError::new_err(msg),
        Error::OutOfBounds { .. } => PyIndexError::new_err(msg),
        Error::Tolerance(_) => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn json_to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_py_any(py)?,
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_py_any(py)?,
            None => n.as_f64().unwrap_or(f64::NAN).into_py_any(py)?,
        },
        Value::String(s) => s.into_py_any(py)?,
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

fn tie_rule(s: &str) -> PyResult<TieRule> {
    s.parse().map_err(err)
}

/// Embedding and neighbourhood parameters.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct Config {
    #[pyo3(get, set)]
    k: usize,
    #[pyo3(get, set)]
    l: usize,
    #[pyo3(get, set)]
    m: usize,
    #[pyo3(get, set)]
    tau: usize,
    #[pyo3(get, set)]
    n_r: usize,
    #[pyo3(get, set)]
    t_r: usize,
    #[pyo3(get, set)]
    tie_rule: String,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (k=2, l=3, m=2, tau=1, n_r=1, t_r=1, tie_rule="recent-first"))]
    fn new(k: usize, l: usize, m: usize, tau: usize, n_r: usize, t_r: usize, tie_rule: &str) -> PyResult<Self> {
        let c = Self { k, l, m, tau, n_r, t_r, tie_rule: tie_rule.to_owned() };
        c.measure()?;
        Ok(c)
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(k={}, l={}, m={}, tau={}, n_r={}, t_r={}, tie_rule='{}')",
            self.k, self.l, self.m, self.tau, self.n_r, self.t_r, self.tie_rule
        )
    }
}

impl Config {
    fn measure(&self) -> PyResult<MeasureConfig> {
        let cfg = MeasureConfig {
            k: self.k,
            l: self.l,
            m: self.m,
            tau: self.tau,
            n_r: self.n_r,
            t_r: self.t_r,
            tie_rule: tie_rule(&self.tie_rule)?,
        };
        cfg.validate().map_err(err)?;
        Ok(cfg)
    }
}

fn config(c: Option<&Config>) -> PyResult<MeasureConfig> {
    c.map_or(Ok(MeasureConfig::default()), Config::measure)
}

/// A field of `n_cells` equal-length series.
#[pyclass(name = "Field", frozen)]
struct Field {
    inner: SpatioTemporalField,
}

#[pymethods]
impl Field {
    #[new]
    #[pyo3(signature = (rows, labels=None, t0=0))]
    fn new(rows: Vec<Vec<f64>>, labels: Option<Vec<String>>, t0: i64) -> PyResult<Self> {
        let labels = labels.unwrap_or_else(|| (1..=rows.len()).map(|c| format!("S{c}")).collect());
        let inner = SpatioTemporalField::with_labels(rows, labels, t0).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        Ok(Self { inner: io::read_field(path.as_ref()).map_err(err)? })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        io::write_field(path.as_ref(), &self.inner).map_err(err)
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.inner.n_cells()
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.n_steps()
    }

    #[getter]
    fn t0(&self) -> i64 {
        self.inner.t0
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().to_vec()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows().to_vec()
    }

    fn cell(&self, c: usize) -> PyResult<Vec<f64>> {
        if c >= self.inner.n_cells() {
            return Err(PyIndexError::new_err(format!("field has {} cells", self.inner.n_cells())));
        }
        Ok(self.inner.cell(c).to_vec())
    }

    /// Copy without the first `n` steps.
    fn discard_transient(&self, n: usize) -> PyResult<Self> {
        Ok(Self { inner: pipeline::discard_transient(&self.inner, n).map_err(err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.n_cells()
    }

    fn __repr__(&self) -> String {
        format!("Field(n_cells={}, n_steps={}, t0={})", self.inner.n_cells(), self.inner.n_steps(), self.inner.t0)
    }
}

/// A sender given either as a cell index or as an aligned external series.
#[derive(FromPyObject)]
enum SenderArg {
    Cell(usize),
    Series(Vec<f64>),
}

impl SenderArg {
    fn get(&self) -> estimators::Sender<'_> {
        match self {
            SenderArg::Cell(i) => estimators::Sender::Cell(*i),
            SenderArg::Series(s) => estimators::Sender::Series(s),
        }
    }
}

fn surrogate(n_shuffles: usize, seed: u64, target: &str) -> PyResult<SurrogateSpec> {
    let target: ShuffleTarget = target.parse().map_err(err)?;
    let spec = SurrogateSpec { n_shuffles, seed, target };
    spec.validate().map_err(err)?;
    Ok(spec)
}

/// One-based value-order offsets of a newest-first window.
#[pyfunction]
#[pyo3(signature = (window, tie_rule="recent-first"))]
fn ordinal_pattern(window: Vec<f64>, tie_rule: &str) -> PyResult<Vec<usize>> {
    let p = symbolization::ordinal_pattern(&window, self::tie_rule(tie_rule)?).map_err(err)?;
    Ok(p.ranks().to_vec())
}

#[pyfunction]
fn value_entropy(samples: Vec<f64>) -> PyResult<f64> {
    estimators::value_entropy(&samples).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (samples, l=3, tie_rule="recent-first"))]
fn permutation_entropy(samples: Vec<f64>, l: usize, tie_rule: &str) -> PyResult<f64> {
    let series = symbolization::TimeSeries::new(samples, "x", 0).map_err(err)?;
    estimators::permutation_entropy(&series, l, self::tie_rule(tie_rule)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (field, sender, receiver, l=3, tau=1, tie_rule="recent-first"))]
fn mutual_information(field: &Field, sender: SenderArg, receiver: usize, l: usize, tau: usize, tie_rule: &str) -> PyResult<f64> {
    let tie = self::tie_rule(tie_rule)?;
    Design::mutual_information(&field.inner, sender.get(), receiver, l, tau, tie)
        .and_then(|d| d.evaluate())
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (field, sender, receiver, k=2, l=3, tau=1, tie_rule="recent-first"))]
fn transfer_entropy(
    field: &Field,
    sender: SenderArg,
    receiver: usize,
    k: usize,
    l: usize,
    tau: usize,
    tie_rule: &str,
) -> PyResult<f64> {
    let tie = self::tie_rule(tie_rule)?;
    Design::transfer_entropy(&field.inner, sender.get(), receiver, k, l, tau, tie)
        .and_then(|d| d.evaluate())
        .map_err(err)
}

/// Bivariate MSIT between two aligned series.
#[pyfunction]
#[pyo3(signature = (sender, receiver, k=2, l=3, tau=1, tie_rule="recent-first"))]
fn msit(sender: Vec<f64>, receiver: Vec<f64>, k: usize, l: usize, tau: usize, tie_rule: &str) -> PyResult<f64> {
    estimators::msit(&sender, &receiver, k, l, tau, self::tie_rule(tie_rule)?).map_err(err)
}

/// Spatiotemporal MSIT; `config.tau` is overridden by `tau`.
#[pyfunction]
#[pyo3(signature = (field, sender, receiver, tau=1, config=None))]
fn msit_st(field: &Field, sender: SenderArg, receiver: usize, tau: usize, config: Option<Config>) -> PyResult<f64> {
    let cfg = self::config(config.as_ref())?.with_tau(tau);
    Design::msit(&field.inner, sender.get(), receiver, &cfg)
        .and_then(|d| d.evaluate())
        .map_err(err)
}

/// Condition blocks of a receiver as dicts `{cell, offset, lag, m}`.
#[pyfunction]
#[pyo3(signature = (field, sender, receiver, config=None))]
fn condition_set(py: Python<'_>, field: &Field, sender: Option<usize>, receiver: usize, config: Option<Config>) -> PyResult<Py<PyAny>> {
    let cfg = self::config(config.as_ref())?;
    let set = build_condition_set(sender, receiver, field.inner.n_cells(), &cfg).map_err(err)?;
    to_py(py, &set.entries)
}

/// Local MSIT at every receiver time; `None` outside the support.
#[pyfunction]
#[pyo3(signature = (field, sender, receiver, tau=1, config=None))]
fn lmsit_profile(field: &Field, sender: SenderArg, receiver: usize, tau: usize, config: Option<Config>) -> PyResult<Vec<Option<f64>>> {
    let cfg = self::config(config.as_ref())?;
    let p = localizer::lmsit_profile(&field.inner, sender.get(), receiver, tau, &cfg).map_err(err)?;
    Ok(p.values)
}

#[pyfunction]
#[pyo3(signature = (field, sender, receiver, tau=1, config=None, n_shuffles=50, seed=0, target="sender"))]
#[allow(clippy::too_many_arguments)]
fn bias_corrected_msit(
    py: Python<'_>,
    field: &Field,
    sender: SenderArg,
    receiver: usize,
    tau: usize,
    config: Option<Config>,
    n_shuffles: usize,
    seed: u64,
    target: &str,
) -> PyResult<Py<PyAny>> {
    let cfg = self::config(config.as_ref())?.with_tau(tau);
    let spec = surrogate(n_shuffles, seed, target)?;
    let s = sender.get();
    let c = py
        .detach(|| {
            let design = Design::msit(&field.inner, s, receiver, &cfg)?;
            pipeline::bias_corrected(&design, &spec, &pipeline::task_key(s, receiver, tau))
        })
        .map_err(err)?;
    to_py(py, &c)
}

fn taus_or(taus: Option<Vec<usize>>, default: std::ops::RangeInclusive<usize>) -> Vec<usize> {
    taus.unwrap_or_else(|| default.collect())
}

/// Bias-corrected delay scan of one pair.
#[pyfunction]
#[pyo3(signature = (field, sender, receiver, taus=None, config=None, n_shuffles=50, seed=0, target="sender"))]
#[allow(clippy::too_many_arguments)]
fn delay_scan(
    py: Python<'_>,
    field: &Field,
    sender: SenderArg,
    receiver: usize,
    taus: Option<Vec<usize>>,
    config: Option<Config>,
    n_shuffles: usize,
    seed: u64,
    target: &str,
) -> PyResult<Py<PyAny>> {
    let cfg = self::config(config.as_ref())?;
    let spec = surrogate(n_shuffles, seed, target)?;
    let taus = taus_or(taus, DEFAULT_SCAN_TAUS);
    let s = sender.get();
    let r = py
        .detach(|| pipeline::delay_scan(&field.inner, s, receiver, &taus, &cfg, &spec))
        .map_err(err)?;
    to_py(py, &r)
}

/// Delay scans of all interior pairs; matrices are indexed `[receiver][sender]`.
#[pyfunction]
#[pyo3(signature = (field, taus=None, config=None, n_shuffles=50, seed=0, target="sender"))]
fn pairwise_scan(
    py: Python<'_>,
    field: &Field,
    taus: Option<Vec<usize>>,
    config: Option<Config>,
    n_shuffles: usize,
    seed: u64,
    target: &str,
) -> PyResult<Py<PyAny>> {
    let cfg = self::config(config.as_ref())?;
    let spec = surrogate(n_shuffles, seed, target)?;
    let taus = taus_or(taus, DEFAULT_SCAN_TAUS);
    let scan = py
        .detach(|| pipeline::pairwise_scan(&field.inner, &taus, &cfg, &spec))
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("msit_average", scan.msit_average())?;
    out.set_item("msit_max", scan.msit_max())?;
    out.set_item("tau_max", scan.tau_max())?;
    out.set_item("noise_floor", scan.matrix_of(|r| r.noise_floor))?;
    out.set_item("excluded", scan.excluded.clone())?;
    out.set_item("results", to_py(py, &scan.results)?)?;
    Ok(out.into_any().unbind())
}

/// Receiver-by-time average and maximum of local MSIT over upstream
/// senders and `taus`, optionally folded over drive cycles.
#[pyfunction]
#[pyo3(signature = (field, taus=None, config=None, period=None, n_cycles=None, origin=0))]
fn lmsit_summary(
    py: Python<'_>,
    field: &Field,
    taus: Option<Vec<usize>>,
    config: Option<Config>,
    period: Option<usize>,
    n_cycles: Option<usize>,
    origin: usize,
) -> PyResult<Py<PyAny>> {
    let cfg = self::config(config.as_ref())?;
    let taus = taus_or(taus, DEFAULT_LOCAL_TAUS);
    let summary = py
        .detach(|| {
            let mut s = localizer::lmsit_summary(&field.inner, &taus, &cfg)?;
            if let Some(p) = period {
                let n = n_cycles.unwrap_or(field.inner.n_steps().saturating_sub(origin) / p.max(1));
                s.cycle_mean = Some(localizer::cycle_average(&s, p, n, origin)?);
            }
            Ok(s)
        })
        .map_err(err)?;
    to_py(py, &summary)
}

#[allow(clippy::too_many_arguments)]
fn chain_spec(
    n_cells: usize,
    length: usize,
    lag: usize,
    gain: f64,
    sigma: f64,
    seed: u64,
    drive: &str,
    period: usize,
    high: Option<usize>,
    noise: &str,
) -> PyResult<ChainSpec> {
    let drive = match drive {
        "random" => DriveKind::RandomBinary,
        "square" => DriveKind::SquareWave { period, high: high.unwrap_or(period / 2) },
        other => return Err(PyValueError::new_err(format!("unknown drive `{other}`"))),
    };
    let noise = match noise {
        "gaussian" => NoiseKind::Gaussian,
        "uniform" => NoiseKind::Uniform,
        other => return Err(PyValueError::new_err(format!("unknown noise `{other}`"))),
    };
    let spec = ChainSpec { n_cells, length, lag, gain, sigma, drive, noise, impulses: Vec::new(), seed };
    spec.validate().map_err(err)?;
    Ok(spec)
}

/// Unidirectional delay chain driven at cell 0; returns `(field, drive)`.
#[pyfunction]
#[pyo3(signature = (n_cells=10, length=5000, lag=1, gain=1.0, sigma=0.1, seed=0, drive="random", period=20, high=None, noise="gaussian"))]
#[allow(clippy::too_many_arguments)]
fn generate_chain(
    n_cells: usize,
    length: usize,
    lag: usize,
    gain: f64,
    sigma: f64,
    seed: u64,
    drive: &str,
    period: usize,
    high: Option<usize>,
    noise: &str,
) -> PyResult<(Field, Vec<f64>)> {
    let spec = chain_spec(n_cells, length, lag, gain, sigma, seed, drive, period, high, noise)?;
    let (inner, drive) = synthetic::generate_chain_with_drive(&spec).map_err(err)?;
    Ok((Field { inner }, drive))
}

fn frame(t: i64, points: &[(f64, f64)]) -> PyResult<ReferenceFrame> {
    let points: [(f64, f64); N_REFERENCE] = points
        .try_into()
        .map_err(|_| PyValueError::new_err(format!("a frame needs {N_REFERENCE} points, got {}", points.len())))?;
    ReferenceFrame::new(t, points).map_err(err)
}

/// Arc-length-equidistant skeleton points `(x, y)` of one frame.
#[pyfunction]
#[pyo3(signature = (points, per_interval=20))]
fn skeleton(points: Vec<(f64, f64)>, per_interval: usize) -> PyResult<Vec<(f64, f64)>> {
    let s = arm_geometry::skeleton(&frame(0, &points)?, per_interval).map_err(err)?;
    Ok(s.points)
}

/// Virtual-sensor field from tracker frames `[(t, [(x, y) * 6]), ...]`.
#[pyfunction]
#[pyo3(signature = (frames, per_interval=20))]
fn fit_arm(py: Python<'_>, frames: Vec<(i64, Vec<(f64, f64)>)>, per_interval: usize) -> PyResult<Field> {
    let frames = frames
        .iter()
        .map(|(t, p)| frame(*t, p))
        .collect::<PyResult<Vec<_>>>()?;
    let inner = py
        .detach(|| arm_geometry::build_field(&frames, per_interval))
        .map_err(err)?;
    Ok(Field { inner })
}

#[pymodule]
fn stinfo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Config>()?;
    m.add_class::<Field>()?;
    m.add_function(wrap_pyfunction!(ordinal_pattern, m)?)?;
    m.add_function(wrap_pyfunction!(value_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(permutation_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(mutual_information, m)?)?;
    m.add_function(wrap_pyfunction!(transfer_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(msit, m)?)?;
    m.add_function(wrap_pyfunction!(msit_st, m)?)?;
    m.add_function(wrap_pyfunction!(condition_set, m)?)?;
    m.add_function(wrap_pyfunction!(lmsit_profile, m)?)?;
    m.add_function(wrap_pyfunction!(bias_corrected_msit, m)?)?;
    m.add_function(wrap_pyfunction!(delay_scan, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_scan, m)?)?;
    m.add_function(wrap_pyfunction!(lmsit_summary, m)?)?;
    m.add_function(wrap_pyfunction!(generate_chain, m)?)?;
    m.add_function(wrap_pyfunction!(skeleton, m)?)?;
    m.add_function(wrap_pyfunction!(fit_arm, m)?)?;
    Ok(())
}
