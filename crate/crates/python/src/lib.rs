//! Python bindings: `fit`, `random_effects`, shrinkage curves and the
//! simulation presets. Results come back as small frozen classes or plain
//! dicts and lists.

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

use shrinkfit::curves::shrinkage_curves as core_curves;
use shrinkfit::evaluate::{run_accuracy, run_coverage, run_two_group, SimConfig};
use shrinkfit::fitters::{adm_equal_shrinkage as core_adm_equal, exact_equal_moments as core_exact_equal};
use shrinkfit::model::validate;
use shrinkfit::{FitMethod, PriorSpec, RandomEffectPosterior, ShrinkagePosterior, TwoLevelData};

fn value_error(name: &str, e: impl std::fmt::Display) -> PyErr {
    let msg = e.to_string();
    if msg.starts_with(name) {
        PyValueError::new_err(msg)
    } else {
        PyValueError::new_err(format!("{name}: {msg}"))
    }
}

fn parse_method(method: &str) -> PyResult<FitMethod> {
    method.parse().map_err(|e: String| value_error("UnknownMethod", e))
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_u64() {
            Some(u) => u.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let list = PyList::empty(py);
            for x in a {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(o) => {
            let dict = PyDict::new(py);
            for (k, x) in o {
                dict.set_item(k, to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialize<'py>(py: Python<'py>, x: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(x).map_err(|e| value_error("SerializeError", e))?;
    to_py(py, &v)
}

fn build(
    y: Vec<f64>,
    v: Vec<f64>,
    x: Option<Vec<Vec<f64>>>,
    mu: Option<Vec<f64>>,
    c: f64,
) -> PyResult<(TwoLevelData, PriorSpec)> {
    let k = y.len();
    let design = match x {
        Some(rows) if !rows.is_empty() => {
            let r = rows[0].len();
            if rows.len() != k || rows.iter().any(|row| row.len() != r) {
                return Err(value_error("DimensionMismatch", format!("x must be {k} rows of equal length")));
            }
            Some(DMatrix::from_fn(k, r, |i, j| rows[i][j]))
        }
        _ => None,
    };
    let data = TwoLevelData::new(y, v, design).map_err(|e| value_error(e.name(), e))?;
    let mut prior = PriorSpec::with_c(c);
    if let Some(mu) = mu {
        prior = prior.known_mu(mu);
    }
    Ok((data, prior))
}

/// Posterior moments of the shrinkage factors.
#[pyclass(frozen, get_all, module = "shrinkfit_py")]
pub struct Shrinkage {
    method: String,
    a_hat: f64,
    inv_info: f64,
    b_hat: Vec<f64>,
    v: Vec<f64>,
    a1: Option<Vec<f64>>,
    a0: Option<Vec<f64>>,
    boundary: bool,
}

impl From<ShrinkagePosterior> for Shrinkage {
    fn from(s: ShrinkagePosterior) -> Self {
        Shrinkage {
            method: s.method.to_string(),
            a_hat: s.a_hat,
            inv_info: s.inv_info,
            b_hat: s.b_hat,
            v: s.v,
            a1: s.a1,
            a0: s.a0,
            boundary: s.boundary,
        }
    }
}

#[pymethods]
impl Shrinkage {
    fn __repr__(&self) -> String {
        format!("Shrinkage(method={:?}, a_hat={}, boundary={})", self.method, self.a_hat, self.boundary)
    }
}

/// Point estimates and intervals for the random effects.
#[pyclass(frozen, get_all, module = "shrinkfit_py")]
pub struct RandomEffects {
    theta_hat: Vec<f64>,
    s2: Vec<f64>,
    beta_hat: Vec<f64>,
    z_star: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl From<RandomEffectPosterior> for RandomEffects {
    fn from(r: RandomEffectPosterior) -> Self {
        RandomEffects { theta_hat: r.theta_hat, s2: r.s2, beta_hat: r.beta_hat, z_star: r.z_star, lo: r.lo, hi: r.hi }
    }
}

#[pymethods]
impl RandomEffects {
    fn __repr__(&self) -> String {
        format!("RandomEffects(k={}, z_star={})", self.theta_hat.len(), self.z_star)
    }
}

fn fit_inner(data: &TwoLevelData, prior: &PriorSpec, method: &str) -> PyResult<ShrinkagePosterior> {
    let method = parse_method(method)?;
    validate(data, prior, method).map_err(|e| value_error(e.name(), e))?;
    shrinkfit::fit(data, prior, method).map_err(|e| value_error(e.name(), e))
}

/// Fit the shrinkage factors. `x` is a list of `k` covariate rows.
#[pyfunction]
#[pyo3(signature = (y, v, x=None, mu=None, method="adm", c=1.0))]
fn fit(
    y: Vec<f64>,
    v: Vec<f64>,
    x: Option<Vec<Vec<f64>>>,
    mu: Option<Vec<f64>>,
    method: &str,
    c: f64,
) -> PyResult<Shrinkage> {
    let (data, prior) = build(y, v, x, mu, c)?;
    Ok(fit_inner(&data, &prior, method)?.into())
}

/// Fit and return `(Shrinkage, RandomEffects)`.
#[pyfunction]
#[pyo3(signature = (y, v, x=None, mu=None, method="adm", c=1.0, z_star=1.96))]
fn random_effects(
    y: Vec<f64>,
    v: Vec<f64>,
    x: Option<Vec<Vec<f64>>>,
    mu: Option<Vec<f64>>,
    method: &str,
    c: f64,
    z_star: f64,
) -> PyResult<(Shrinkage, RandomEffects)> {
    let (data, prior) = build(y, v, x, mu, c)?;
    let shr = fit_inner(&data, &prior, method)?;
    let re = shrinkfit::random_effects(&data, &prior, &shr, z_star).map_err(|e| value_error(e.name(), e))?;
    Ok((shr.into(), re.into()))
}

/// Equal-variance shrinkage curves, one dict per value of `T`.
#[pyfunction]
#[pyo3(signature = (k, t_grid, r=0, c=1.0))]
fn shrinkage_curves<'py>(py: Python<'py>, k: usize, t_grid: Vec<f64>, r: usize, c: f64) -> PyResult<Bound<'py, PyAny>> {
    if k < r + 3 || !(c > 0.0) {
        return Err(value_error("InvalidArgument", "need k ≥ r + 3 and c > 0"));
    }
    let rows = core_curves(k, r, c, &t_grid).map_err(|e| value_error(e.name(), e))?;
    serialize(py, &rows)
}

/// `(E[B], Var[B])` under the harmonic prior with equal variances.
#[pyfunction]
fn exact_equal_moments(t: f64, m: f64) -> PyResult<(f64, f64)> {
    core_exact_equal(t, m).map_err(|e| value_error(e.name(), e))
}

/// Closed-form ADM shrinkage with equal variances.
#[pyfunction]
#[pyo3(signature = (t, m, c=1.0))]
fn adm_equal_shrinkage(t: f64, m: f64, c: f64) -> f64 {
    core_adm_equal(t, m, c)
}

fn run<'py>(py: Python<'py>, cfg: SimConfig, threads: usize, two_group: bool) -> PyResult<Bound<'py, PyAny>> {
    let res = py
        .detach(|| if two_group { run_two_group(&cfg, threads) } else { run_coverage(&cfg, threads) })
        .map_err(|e| value_error("SimulationError", e))?;
    serialize(py, &res.rows)
}

/// Coverage study with equal variances; returns one dict per (method, B₀).
#[pyfunction]
#[pyo3(signature = (k, reps=1000, seed=42, grid=None, methods=None, c=1.0, z_star=1.96, threads=0))]
#[allow(clippy::too_many_arguments)]
fn simulate_equal<'py>(
    py: Python<'py>,
    k: usize,
    reps: usize,
    seed: u64,
    grid: Option<Vec<f64>>,
    methods: Option<Vec<String>>,
    c: f64,
    z_star: f64,
    threads: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = SimConfig::equal(k);
    cfg.reps = reps;
    cfg.seed = seed;
    cfg.c = c;
    cfg.z_star = z_star;
    if let Some(g) = grid {
        cfg.grid = g;
    }
    if let Some(ms) = methods {
        cfg.methods = ms.iter().map(|m| parse_method(m)).collect::<PyResult<_>>()?;
    }
    run(py, cfg, threads, false)
}

/// Two-group study (five units at `V = 0.55`, five at `V = 5.5`, intercept only).
#[pyfunction]
#[pyo3(signature = (reps=100, seed=42, threads=0))]
fn simulate_two_group<'py>(py: Python<'py>, reps: usize, seed: u64, threads: usize) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = SimConfig::two_group();
    cfg.reps = reps;
    cfg.seed = seed;
    run(py, cfg, threads, true)
}

/// Accuracy of the ADM approximation over `ks × shrinkage`.
#[pyfunction]
fn accuracy_study<'py>(py: Python<'py>, ks: Vec<usize>, shrinkage: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let res = py
        .detach(|| run_accuracy(&ks, &shrinkage))
        .map_err(|e| value_error("SimulationError", e))?;
    serialize(py, &res)
}

#[pymodule]
fn shrinkfit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Shrinkage>()?;
    m.add_class::<RandomEffects>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(random_effects, m)?)?;
    m.add_function(wrap_pyfunction!(shrinkage_curves, m)?)?;
    m.add_function(wrap_pyfunction!(exact_equal_moments, m)?)?;
    m.add_function(wrap_pyfunction!(adm_equal_shrinkage, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_equal, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_two_group, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy_study, m)?)?;
    Ok(())
}
