//! Python bindings: symbolic expressions, models, symmetry checks,
//! simulation and the bundled examples suite.

use std::collections::BTreeMap;

use itosym::analysis::check_field;
use itosym::expr::{evaluate, is_identically_zero, parse, Context, ParamValue, Point, ZeroTestConfig};
use itosym::model::{Model, System};
use itosym::montecarlo::{symmetry_validation, GridSpec, SimOptions};
use itosym::sde::Diffusion;
use itosym::suite;
use itosym::symmetry::ResidualOptions;
use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let l = PyList::empty(py);
            for x in a {
                l.append(to_py(py, x)?)?;
            }
            l.into_any()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn dump<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(v).map_err(err)?)
}

/// A symbolic expression bound to its variable context.
#[pyclass(name = "Expr", frozen, from_py_object)]
#[derive(Clone)]
struct PyExpr {
    inner: itosym::expr::Expr,
    ctx: Context,
}

#[pymethods]
impl PyExpr {
    /// Parses `text` over `n` states and `m` Wiener processes.
    #[new]
    #[pyo3(signature = (text, n=1, m=1, params=None))]
    fn new(text: &str, n: usize, m: usize, params: Option<BTreeMap<String, f64>>) -> PyResult<Self> {
        let mut ctx = if n == 1 && m == 1 { Context::scalar() } else { Context::new(n, m).map_err(err)? };
        for (k, v) in params.unwrap_or_default() {
            ctx.declare_param(&k, ParamValue::Numeric(v)).map_err(err)?;
        }
        let inner = parse(text, &ctx).map_err(err)?;
        Ok(PyExpr { inner, ctx })
    }

    /// Partial derivative with respect to a state, Wiener or time variable.
    fn diff(&self, var: &str) -> PyResult<Self> {
        let v = self
            .ctx
            .lookup_var(var)
            .ok_or_else(|| PyKeyError::new_err(format!("unknown variable {var}")))?;
        Ok(PyExpr {
            inner: self.inner.diff(v).simplified(),
            ctx: self.ctx.clone(),
        })
    }

    fn simplify(&self) -> Self {
        PyExpr {
            inner: self.inner.simplified(),
            ctx: self.ctx.clone(),
        }
    }

    #[pyo3(signature = (x, t=0.0, w=None))]
    fn evaluate(&self, x: Vec<f64>, t: f64, w: Option<Vec<f64>>) -> PyResult<f64> {
        let w = w.unwrap_or_else(|| vec![0.0; self.ctx.m]);
        evaluate(&self.inner, &Point { x, t, w }, &self.ctx.numeric_params()).map_err(err)
    }

    /// Randomised zero test over the default sampling box.
    fn is_zero(&self) -> bool {
        is_identically_zero(&self.inner, &self.ctx, &ZeroTestConfig::default()).is_zero()
    }

    fn __sub__(&self, other: &PyExpr) -> Self {
        PyExpr {
            inner: (&self.inner - &other.inner).simplified(),
            ctx: self.ctx.clone(),
        }
    }

    fn __str__(&self) -> String {
        self.inner.display(&self.ctx).to_string()
    }

    fn __repr__(&self) -> String {
        format!("Expr('{}')", self.__str__())
    }
}

/// An SDE model with its vector fields and changes of variables.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: Model::load(std::path::Path::new(path)).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: Model::from_str(text).map_err(err)?,
        })
    }

    /// One of the models shipped with the library.
    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        let m = suite::bundled_model(name).ok_or_else(|| PyKeyError::new_err(format!("no bundled model {name}")))?;
        Ok(PyModel { inner: m.map_err(err)? })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn sha256(&self) -> &str {
        &self.inner.hash
    }

    #[getter]
    fn calculus(&self) -> &'static str {
        match self.inner.system {
            System::Ito(_) => "ito",
            System::Strat(_) => "stratonovich",
        }
    }

    #[getter]
    fn fields(&self) -> Vec<String> {
        self.inner.fields.keys().cloned().collect()
    }

    #[getter]
    fn covs(&self) -> Vec<String> {
        self.inner.covs.keys().cloned().collect()
    }

    /// Drift and diffusion in the other calculus, as strings.
    fn convert<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let ctx = self.inner.ctx();
        let show = |v: &[itosym::expr::Expr]| v.iter().map(|e| e.display(ctx).to_string()).collect::<Vec<_>>();
        let (to, drift, sigma) = match &self.inner.system {
            System::Ito(s) => {
                let o = s.to_strat();
                ("stratonovich", show(o.b()), o.sigma().to_vec())
            }
            System::Strat(s) => {
                let o = s.to_ito();
                ("ito", show(o.f()), o.sigma().to_vec())
            }
        };
        let sigma: Vec<Vec<String>> = sigma.iter().map(|r| show(r)).collect();
        dump(py, &serde_json::json!({ "calculus": to, "drift": drift, "diffusion": sigma }))
    }

    /// Determining equations of `field` in both calculi.
    #[pyo3(signature = (field, force=false))]
    fn check<'py>(&self, py: Python<'py>, field: &str, force: bool) -> PyResult<Bound<'py, PyAny>> {
        let x = self.inner.field(field).map_err(err)?;
        let opts = ResidualOptions {
            zero: self.inner.zero.clone(),
            force,
        };
        dump(py, &check_field(field, x, &self.inner.system, &opts))
    }

    /// Monte Carlo ensemble; with `field`, compares transformed and direct paths.
    #[pyo3(signature = (x0=None, dt=1e-3, horizon=1.0, paths=2000, seed=1, field=None, s=0.3))]
    #[allow(clippy::too_many_arguments)]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        x0: Option<Vec<f64>>,
        dt: f64,
        horizon: f64,
        paths: usize,
        seed: u64,
        field: Option<&str>,
        s: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let x0 = x0
            .or_else(|| self.inner.simulation.x0.clone())
            .unwrap_or_else(|| vec![1.0; self.inner.ctx().n]);
        let opts = SimOptions {
            spec: GridSpec::new(0.0, horizon, dt).map_err(err)?,
            paths,
            seed,
            keep_paths: false,
        };
        let dynamics = self.inner.system.dynamics();
        match field {
            Some(f) => {
                let x = self.inner.field(f).map_err(err)?;
                let r = py
                    .detach(|| symmetry_validation(&dynamics, x, s, &x0, &opts, &self.inner.zero))
                    .map_err(err)?;
                dump(py, &r)
            }
            None => {
                let r = py
                    .detach(|| match &self.inner.system {
                        System::Ito(sys) => itosym::montecarlo::euler_maruyama(sys, &x0, &opts),
                        System::Strat(sys) => itosym::montecarlo::heun_stratonovich(sys, &x0, &opts),
                    })
                    .map_err(err)?;
                let d = PyDict::new(py);
                d.set_item("scheme", dump(py, &r.scheme)?)?;
                d.set_item("mean", r.stats.terminal_mean().to_vec())?;
                d.set_item("var", r.stats.terminal_var().to_vec())?;
                d.set_item("se", r.stats.terminal_se().to_vec())?;
                d.set_item("excluded_fraction", r.excluded_fraction())?;
                d.set_item("terminal", r.terminal.clone())?;
                Ok(d.into_any())
            }
        }
    }

    fn __repr__(&self) -> String {
        format!("Model('{}')", self.inner.name)
    }
}

/// Names of the bundled example models.
#[pyfunction]
fn example_names() -> Vec<String> {
    suite::example_names().into_iter().map(str::to_string).collect()
}

/// Runs the bundled examples suite, or a single entry of it.
#[pyfunction]
#[pyo3(signature = (only=None))]
fn run_examples<'py>(py: Python<'py>, only: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let entries = py.detach(|| suite::run_examples(only)).map_err(err)?;
    dump(py, &entries)
}

#[pymodule]
fn pyitosym(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyExpr>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(example_names, m)?)?;
    m.add_function(wrap_pyfunction!(run_examples, m)?)?;
    Ok(())
}
