//! TOML model files.
//!
//! ```toml
//! name = "linear"
//! [system]
//! n = 1
//! m = 1
//! type = "ito"            # or "stratonovich"
//! states = ["x"]          # optional names
//! wieners = ["w"]
//! f1 = "lam*x"
//! sigma_1_1 = "mu"        # missing entries are zero
//! [params]
//! lam = -1.0
//! K = "symbolic"
//! [sampling]
//! state = [0.4, 2.0]
//! samples = 64
//! [sampling.states]
//! x = [0.5, 1.0]
//! [vectorfield.X]
//! phi1 = "x"
//! R = [[1.0]]             # or h1..hm; optional tau
//! [changeofvars.C]
//! direction = "old_to_new"   # or new_to_old
//! phi1 = "log(x)"
//! inverse1 = "exp(y)"
//! new_states = ["y"]
//! [simulation]
//! x0 = [1.0]
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::{Table, Value};

use crate::expr::{parse, Context, ContextError, Expr, ParamValue, ParseError, VarId, ZeroTestConfig};
use crate::kozlov::{ChangeOfVariables, CoordMap, WienerPart};
use crate::montecarlo::Dynamics;
use crate::sde::{Diffusion, ItoSystem, SdeError, StratSystem};
use crate::symmetry::{Calculus, VectorField};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{key}: {source}")]
    Expr {
        key: String,
        #[source]
        source: ParseError,
    },
    #[error("{key}: {msg}")]
    Invalid { key: String, msg: String },
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Sde(#[from] SdeError),
}

fn invalid(key: &str, msg: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        key: key.to_string(),
        msg: msg.into(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum System {
    Ito(ItoSystem),
    Strat(StratSystem),
}

impl System {
    pub fn calculus(&self) -> Calculus {
        match self {
            System::Ito(_) => Calculus::Ito,
            System::Strat(_) => Calculus::Stratonovich,
        }
    }

    pub fn ctx(&self) -> &Context {
        match self {
            System::Ito(s) => s.ctx(),
            System::Strat(s) => s.ctx(),
        }
    }

    pub fn ito(&self) -> ItoSystem {
        match self {
            System::Ito(s) => s.clone(),
            System::Strat(s) => s.to_ito(),
        }
    }

    pub fn strat(&self) -> StratSystem {
        match self {
            System::Ito(s) => s.to_strat(),
            System::Strat(s) => s.clone(),
        }
    }

    /// Simulation in the model's own calculus.
    pub fn dynamics(&self) -> Dynamics {
        match self {
            System::Ito(s) => Dynamics::Ito(s.clone()),
            System::Strat(s) => Dynamics::Strat(s.clone()),
        }
    }
}

/// Defaults for simulation commands; flags override them.
#[derive(Clone, Debug, Default, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationDefaults {
    pub x0: Option<Vec<f64>>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    /// Group parameter for symmetry validation.
    pub s: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub name: String,
    pub description: String,
    pub system: System,
    pub zero: ZeroTestConfig,
    pub fields: BTreeMap<String, VectorField>,
    pub covs: BTreeMap<String, ChangeOfVariables>,
    pub simulation: SimulationDefaults,
    /// SHA-256 of the source text.
    pub hash: String,
}

impl Model {
    pub fn ctx(&self) -> &Context {
        self.system.ctx()
    }

    pub fn field(&self, name: &str) -> Result<&VectorField, ModelError> {
        self.fields
            .get(name)
            .ok_or_else(|| invalid(name, format!("no vector field '{name}' (have: {})", keys(&self.fields))))
    }

    pub fn cov(&self, name: &str) -> Result<&ChangeOfVariables, ModelError> {
        self.covs
            .get(name)
            .ok_or_else(|| invalid(name, format!("no change of variables '{name}' (have: {})", keys(&self.covs))))
    }

    pub fn load(path: &std::path::Path) -> Result<Model, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Model::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Model, ModelError> {
        let doc: Table = text.parse()?;
        let mut hash = String::new();
        for b in Sha256::digest(text.as_bytes()) {
            let _ = write!(hash, "{b:02x}");
        }
        check_keys(&doc, "", &["name", "description", "system", "params", "sampling", "vectorfield", "changeofvars", "simulation"], &[])?;
        let system = table(&doc, "system")?.ok_or_else(|| invalid("system", "missing [system] section"))?;
        let ctx = build_context(system, table(&doc, "params")?)?;
        let zero = build_sampling(table(&doc, "sampling")?, &ctx)?;
        let sys = build_system(system, &ctx)?;
        let mut fields = BTreeMap::new();
        if let Some(vf) = table(&doc, "vectorfield")? {
            for (name, v) in vf {
                let t = v.as_table().ok_or_else(|| invalid(&format!("vectorfield.{name}"), "expected a table"))?;
                fields.insert(name.clone(), build_field(&format!("vectorfield.{name}"), t, &ctx)?);
            }
        }
        let mut covs = BTreeMap::new();
        if let Some(cv) = table(&doc, "changeofvars")? {
            for (name, v) in cv {
                let key = format!("changeofvars.{name}");
                let t = v.as_table().ok_or_else(|| invalid(&key, "expected a table"))?;
                covs.insert(name.clone(), build_cov(&key, t, &ctx)?);
            }
        }
        let simulation = match doc.get("simulation") {
            Some(v) => v.clone().try_into().map_err(|e: toml::de::Error| invalid("simulation", e.message()))?,
            None => SimulationDefaults::default(),
        };
        Ok(Model {
            name: string(&doc, "", "name")?.unwrap_or_default(),
            description: string(&doc, "", "description")?.unwrap_or_default(),
            system: sys,
            zero,
            fields,
            covs,
            simulation,
            hash,
        })
    }
}

fn keys<V>(m: &BTreeMap<String, V>) -> String {
    if m.is_empty() {
        "none".into()
    } else {
        m.keys().cloned().collect::<Vec<_>>().join(", ")
    }
}

fn join(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

fn table<'a>(t: &'a Table, key: &str) -> Result<Option<&'a Table>, ModelError> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Table(x)) => Ok(Some(x)),
        Some(_) => Err(invalid(key, "expected a table")),
    }
}

fn string(t: &Table, section: &str, key: &str) -> Result<Option<String>, ModelError> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(invalid(&join(section, key), "expected a string")),
    }
}

fn count(t: &Table, section: &str, key: &str) -> Result<usize, ModelError> {
    match t.get(key) {
        Some(Value::Integer(v)) if *v >= 1 => Ok(*v as usize),
        Some(_) => Err(invalid(&join(section, key), "expected a positive integer")),
        None => Err(invalid(&join(section, key), "missing")),
    }
}

fn number(v: &Value, key: &str) -> Result<f64, ModelError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(invalid(key, "expected a number")),
    }
}

fn range(v: &Value, key: &str) -> Result<(f64, f64), ModelError> {
    match v.as_array().map(Vec::as_slice) {
        Some([a, b]) => {
            let (a, b) = (number(a, key)?, number(b, key)?);
            if a < b {
                Ok((a, b))
            } else {
                Err(invalid(key, "range needs lo < hi"))
            }
        }
        _ => Err(invalid(key, "expected [lo, hi]")),
    }
}

fn names(t: &Table, section: &str, key: &str) -> Result<Option<Vec<String>>, ModelError> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Array(a)) => a
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| invalid(&join(section, key), "expected strings")))
            .collect::<Result<_, _>>()
            .map(Some),
        Some(_) => Err(invalid(&join(section, key), "expected an array of names")),
    }
}

fn matrix(v: &Value, key: &str, dim: usize) -> Result<DMatrix<f64>, ModelError> {
    let rows = v.as_array().ok_or_else(|| invalid(key, "expected [[..], ..]"))?;
    if rows.len() != dim {
        return Err(invalid(key, format!("expected {dim} rows")));
    }
    let mut m = DMatrix::zeros(dim, dim);
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_array().filter(|r| r.len() == dim).ok_or_else(|| invalid(key, format!("row {} needs {dim} entries", i + 1)))?;
        for (j, x) in r.iter().enumerate() {
            m[(i, j)] = number(x, key)?;
        }
    }
    Ok(m)
}

fn expr(t: &Table, section: &str, key: &str, ctx: &Context) -> Result<Option<Expr>, ModelError> {
    let full = join(section, key);
    match t.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => parse(s, ctx).map(Some).map_err(|source| ModelError::Expr { key: full, source }),
        Some(v) => number(v, &full).map(|x| Some(Expr::real(x))),
    }
}

fn required(t: &Table, section: &str, key: &str, ctx: &Context) -> Result<Expr, ModelError> {
    expr(t, section, key, ctx)?.ok_or_else(|| invalid(&join(section, key), "missing"))
}

/// `prefix1..prefixN`, all required.
fn indexed(t: &Table, section: &str, prefix: &str, len: usize, ctx: &Context) -> Result<Vec<Expr>, ModelError> {
    (1..=len).map(|i| required(t, section, &format!("{prefix}{i}"), ctx)).collect()
}

/// `prefix1..prefixN` if any is present.
fn optional_indexed(t: &Table, section: &str, prefix: &str, len: usize, ctx: &Context) -> Result<Option<Vec<Expr>>, ModelError> {
    if (1..=len).any(|i| t.contains_key(&format!("{prefix}{i}"))) {
        indexed(t, section, prefix, len, ctx).map(Some)
    } else {
        Ok(None)
    }
}

fn indexed_keys(prefix: &str, len: usize) -> Vec<String> {
    (1..=len).map(|i| format!("{prefix}{i}")).collect()
}

/// Rejects keys outside `fixed` and the indexed families `prefix1..prefixN`.
fn check_keys(t: &Table, section: &str, fixed: &[&str], families: &[(&str, usize)]) -> Result<(), ModelError> {
    let mut ok: Vec<String> = fixed.iter().map(|s| s.to_string()).collect();
    for (p, len) in families {
        ok.extend(indexed_keys(p, *len));
    }
    for k in t.keys() {
        if !ok.contains(k) {
            return Err(invalid(&join(section, k), "unknown key"));
        }
    }
    Ok(())
}

fn build_context(system: &Table, params: Option<&Table>) -> Result<Context, ModelError> {
    let n = count(system, "system", "n")?;
    let m = count(system, "system", "m")?;
    let mut ctx = Context::new(n, m)?;
    if let Some(s) = names(system, "system", "states")? {
        ctx = ctx.with_state_names(&s)?;
    }
    if let Some(w) = names(system, "system", "wieners")? {
        ctx = ctx.with_wiener_names(&w)?;
    }
    if let Some(p) = params {
        for (name, v) in p {
            let value = match v {
                Value::String(s) if s == "symbolic" => ParamValue::Symbolic,
                v => ParamValue::Numeric(number(v, &format!("params.{name}"))?),
            };
            ctx.declare_param(name, value)?;
        }
    }
    Ok(ctx)
}

fn build_sampling(t: Option<&Table>, ctx: &Context) -> Result<ZeroTestConfig, ModelError> {
    let mut cfg = ZeroTestConfig::default();
    let Some(t) = t else { return Ok(cfg) };
    check_keys(t, "sampling", &["state", "wiener", "time", "param", "samples", "abs_tol", "seed", "states", "params"], &[])?;
    let b = &mut cfg.sampling;
    for (key, slot) in [("state", &mut b.state), ("wiener", &mut b.wiener), ("time", &mut b.time), ("param", &mut b.param)] {
        if let Some(v) = t.get(key) {
            *slot = range(v, &format!("sampling.{key}"))?;
        }
    }
    if let Some(v) = t.get("samples") {
        cfg.samples = count(t, "sampling", "samples").map_err(|_| invalid("sampling.samples", format!("bad value {v}")))?;
    }
    if let Some(v) = t.get("abs_tol") {
        cfg.abs_tol = number(v, "sampling.abs_tol")?;
    }
    if let Some(v) = t.get("seed") {
        cfg.seed = v.as_integer().ok_or_else(|| invalid("sampling.seed", "expected an integer"))? as u64;
    }
    if let Some(st) = table(t, "states")? {
        for (name, v) in st {
            let key = format!("sampling.states.{name}");
            match ctx.lookup_var(name) {
                Some(VarId::State(i)) => {
                    cfg.sampling.state_overrides.insert(i, range(v, &key)?);
                }
                _ => return Err(invalid(&key, "not a state variable")),
            }
        }
    }
    if let Some(pt) = table(t, "params")? {
        for (name, v) in pt {
            let key = format!("sampling.params.{name}");
            if !ctx.params.contains_key(name) {
                return Err(invalid(&key, "not a declared parameter"));
            }
            cfg.sampling.param_overrides.insert(name.clone(), range(v, &key)?);
        }
    }
    Ok(cfg)
}

fn build_system(t: &Table, ctx: &Context) -> Result<System, ModelError> {
    let (n, m) = (ctx.n, ctx.m);
    let mut ok = vec!["n".to_string(), "m".into(), "type".into(), "states".into(), "wieners".into()];
    ok.extend(indexed_keys("f", n));
    for i in 1..=n {
        ok.extend((1..=m).map(|k| format!("sigma_{i}_{k}")));
    }
    for k in t.keys() {
        if !ok.contains(k) {
            return Err(invalid(&join("system", k), "unknown key"));
        }
    }
    let f = indexed(t, "system", "f", n, ctx)?;
    let mut sigma = vec![vec![Expr::zero(); m]; n];
    for (i, row) in sigma.iter_mut().enumerate() {
        for (k, s) in row.iter_mut().enumerate() {
            if let Some(e) = expr(t, "system", &format!("sigma_{}_{}", i + 1, k + 1), ctx)? {
                *s = e;
            }
        }
    }
    match string(t, "system", "type")?.as_deref().unwrap_or("ito") {
        "ito" => Ok(System::Ito(ItoSystem::new(ctx.clone(), f, sigma)?)),
        "stratonovich" | "strat" => Ok(System::Strat(StratSystem::new(ctx.clone(), f, sigma)?)),
        other => Err(invalid("system.type", format!("'{other}' is not ito|stratonovich"))),
    }
}

fn build_field(section: &str, t: &Table, ctx: &Context) -> Result<VectorField, ModelError> {
    check_keys(t, section, &["tau", "R", "description"], &[("phi", ctx.n), ("h", ctx.m)])?;
    let phi = indexed(t, section, "phi", ctx.n, ctx)?;
    let h = optional_indexed(t, section, "h", ctx.m, ctx)?;
    let mut x = match (h, t.get("R")) {
        (Some(_), Some(_)) => return Err(invalid(section, "give either h1..hm or R, not both")),
        (Some(h), None) => VectorField::general_h(phi, h),
        (None, Some(r)) => VectorField::linear_w(phi, matrix(r, &join(section, "R"), ctx.m)?),
        (None, None) => VectorField::simple(phi),
    };
    if let Some(tau) = expr(t, section, "tau", ctx)? {
        x = x.with_tau(tau);
    }
    Ok(x)
}

fn build_cov(section: &str, t: &Table, ctx: &Context) -> Result<ChangeOfVariables, ModelError> {
    let (n, m) = (ctx.n, ctx.m);
    check_keys(
        t,
        section,
        &["direction", "new_states", "new_wieners", "R", "description"],
        &[("phi", n), ("inverse", n), ("omega", m), ("inverse_omega", m)],
    )?;
    let mut new_ctx = ctx.clone();
    let default_states: Vec<String> = if n == 1 { vec!["y".into()] } else { (1..=n).map(|i| format!("y{i}")).collect() };
    let default_wieners: Vec<String> = if m == 1 { vec!["z".into()] } else { (1..=m).map(|k| format!("z{k}")).collect() };
    new_ctx = new_ctx.with_state_names(&names(t, section, "new_states")?.unwrap_or(default_states))?;
    new_ctx = new_ctx.with_wiener_names(&names(t, section, "new_wieners")?.unwrap_or(default_wieners))?;
    let forward = match string(t, section, "direction")?.as_deref().unwrap_or("old_to_new") {
        "old_to_new" => true,
        "new_to_old" => false,
        other => return Err(invalid(&join(section, "direction"), format!("'{other}' is not old_to_new|new_to_old"))),
    };
    let (src, dst) = if forward { (ctx, &new_ctx) } else { (&new_ctx, ctx) };
    let primary_states = indexed(t, section, "phi", n, src)?;
    let inverse_states = optional_indexed(t, section, "inverse", n, dst)?;
    let omega = optional_indexed(t, section, "omega", m, src)?;
    let inverse_omega = optional_indexed(t, section, "inverse_omega", m, dst)?;
    let (primary_w, inverse_w) = match (t.get("R"), omega) {
        (Some(_), Some(_)) => return Err(invalid(section, "give either R or omega1..m, not both")),
        (Some(r), None) => {
            let r = matrix(r, &join(section, "R"), m)?;
            let ri = r.clone().try_inverse().ok_or_else(|| invalid(&join(section, "R"), "matrix is singular"))?;
            (WienerPart::Linear(r), WienerPart::Linear(ri))
        }
        (None, Some(o)) => {
            let inv = match (&inverse_states, inverse_omega) {
                (Some(_), Some(io)) => WienerPart::General(io),
                (Some(_), None) => return Err(invalid(section, "inverse of a general Wiener map needs inverse_omega1..m")),
                (None, _) => WienerPart::Identity,
            };
            (WienerPart::General(o), inv)
        }
        (None, None) => (WienerPart::Identity, WienerPart::Identity),
    };
    let primary = Some(CoordMap::new(primary_states, primary_w));
    let inverse = inverse_states.map(|s| CoordMap::new(s, inverse_w));
    let (new_of_old, old_of_new) = if forward { (primary, inverse) } else { (inverse, primary) };
    Ok(ChangeOfVariables {
        old_ctx: ctx.clone(),
        new_ctx,
        new_of_old,
        old_of_new,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINEAR: &str = r#"
name = "linear"
[system]
n = 1
m = 1
f1 = "lam*x"
sigma_1_1 = "mu"
[params]
lam = -1
mu = 0.5
[vectorfield.S]
phi1 = "x"
R = [[1.0]]
[changeofvars.log]
phi1 = "log(x)"
inverse1 = "exp(y)"
[simulation]
x0 = [1.0]
"#;

    #[test]
    fn parses_linear_model() {
        let m = Model::from_str(LINEAR).unwrap();
        assert_eq!(m.name, "linear");
        assert_eq!(m.system.calculus(), Calculus::Ito);
        assert!(m.fields.contains_key("S"));
        let c = m.cov("log").unwrap();
        assert!(c.new_of_old.is_some() && c.old_of_new.is_some());
        assert_eq!(c.new_ctx.state_name(0), "y");
        assert_eq!(m.simulation.x0, Some(vec![1.0]));
        assert_eq!(m.hash.len(), 64);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_expressions() {
        let bad = LINEAR.replace("sigma_1_1", "sigma_1_2");
        assert!(matches!(Model::from_str(&bad), Err(ModelError::Invalid { .. })));
        let bad = LINEAR.replace("lam*x", "lam*(x");
        let e = Model::from_str(&bad).unwrap_err();
        assert!(e.to_string().starts_with("system.f1"));
        let bad = LINEAR.replace("f1 = \"lam*x\"", "f1 = \"lam*x*w\"");
        assert!(matches!(Model::from_str(&bad), Err(ModelError::Sde(SdeError::WienerDependence(_)))));
    }
}

#[cfg(test)]
mod bundled {
    use super::*;

    #[test]
    fn every_bundled_model_loads() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("models");
        let mut count = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                Model::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                count += 1;
            }
        }
        assert!(count >= 13);
    }
}
