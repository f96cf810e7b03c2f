use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::VarId;

#[derive(Debug, Error, PartialEq)]
pub enum ContextError {
    #[error("dimensions must be at least 1 (got n = {n}, m = {m})")]
    EmptyDimension { n: usize, m: usize },
    #[error("expected {expected} names for {what}, got {got}")]
    NameCount {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("identifier '{0}' is declared twice")]
    Duplicate(String),
    #[error("'{0}' is not a valid identifier")]
    BadName(String),
}

/// Value attached to a declared parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Numeric(f64),
    /// Left free: zero tests sample it, evaluation needs an explicit value.
    Symbolic,
}

/// Declares the variable universe: `n` states, time, `m` Wiener processes,
/// their printable names and the named parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub n: usize,
    pub m: usize,
    state_names: Vec<String>,
    wiener_names: Vec<String>,
    time_name: String,
    pub params: BTreeMap<String, ParamValue>,
}

fn valid_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Context {
    pub fn new(n: usize, m: usize) -> Result<Context, ContextError> {
        if n == 0 || m == 0 {
            return Err(ContextError::EmptyDimension { n, m });
        }
        Ok(Context {
            n,
            m,
            state_names: (1..=n).map(|i| format!("x{i}")).collect(),
            wiener_names: (1..=m).map(|k| format!("w{k}")).collect(),
            time_name: "t".to_string(),
            params: BTreeMap::new(),
        })
    }

    /// Scalar context (`n = m = 1`).
    pub fn scalar() -> Context {
        Context::new(1, 1).expect("non-empty")
    }

    pub fn with_state_names<S: AsRef<str>>(mut self, names: &[S]) -> Result<Context, ContextError> {
        if names.len() != self.n {
            return Err(ContextError::NameCount {
                what: "states",
                expected: self.n,
                got: names.len(),
            });
        }
        self.state_names = names.iter().map(|s| s.as_ref().to_string()).collect();
        self.validate()?;
        Ok(self)
    }

    pub fn with_wiener_names<S: AsRef<str>>(mut self, names: &[S]) -> Result<Context, ContextError> {
        if names.len() != self.m {
            return Err(ContextError::NameCount {
                what: "Wiener processes",
                expected: self.m,
                got: names.len(),
            });
        }
        self.wiener_names = names.iter().map(|s| s.as_ref().to_string()).collect();
        self.validate()?;
        Ok(self)
    }

    pub fn with_param(mut self, name: &str, value: ParamValue) -> Result<Context, ContextError> {
        self.declare_param(name, value)?;
        Ok(self)
    }

    pub fn declare_param(&mut self, name: &str, value: ParamValue) -> Result<(), ContextError> {
        if !valid_ident(name) {
            return Err(ContextError::BadName(name.to_string()));
        }
        if self.lookup_var(name).is_some() || super::Func::from_name(name).is_some() {
            return Err(ContextError::Duplicate(name.to_string()));
        }
        self.params.insert(name.to_string(), value);
        Ok(())
    }

    fn validate(&self) -> Result<(), ContextError> {
        let mut seen = std::collections::BTreeSet::new();
        for name in self
            .state_names
            .iter()
            .chain(&self.wiener_names)
            .chain(std::iter::once(&self.time_name))
        {
            if !valid_ident(name) {
                return Err(ContextError::BadName(name.clone()));
            }
            if !seen.insert(name.as_str()) {
                return Err(ContextError::Duplicate(name.clone()));
            }
        }
        Ok(())
    }

    pub fn state_name(&self, i: usize) -> &str {
        &self.state_names[i]
    }

    pub fn wiener_name(&self, k: usize) -> &str {
        &self.wiener_names[k]
    }

    pub fn time_name(&self) -> &str {
        &self.time_name
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn wiener_names(&self) -> &[String] {
        &self.wiener_names
    }

    pub fn var_name(&self, v: VarId) -> String {
        match v {
            VarId::State(i) if i < self.n => self.state_names[i].clone(),
            VarId::Wiener(k) if k < self.m => self.wiener_names[k].clone(),
            VarId::Time => self.time_name.clone(),
            VarId::State(i) => format!("x{}", i + 1),
            VarId::Wiener(k) => format!("w{}", k + 1),
        }
    }

    /// Resolves an identifier to a variable. Besides the declared names,
    /// `x1..xn`, `w1..wm` are always accepted, and in the scalar case the
    /// bare aliases `x` and `w`.
    pub fn lookup_var(&self, name: &str) -> Option<VarId> {
        if let Some(i) = self.state_names.iter().position(|s| s == name) {
            return Some(VarId::State(i));
        }
        if let Some(k) = self.wiener_names.iter().position(|s| s == name) {
            return Some(VarId::Wiener(k));
        }
        if name == self.time_name {
            return Some(VarId::Time);
        }
        let indexed = |prefix: char, bound: usize| -> Option<usize> {
            let rest = name.strip_prefix(prefix)?;
            if rest.is_empty() || rest.starts_with('0') || !rest.chars().all(|c| c.is_ascii_digit()) {
                return None;
            }
            let i: usize = rest.parse().ok()?;
            (1..=bound).contains(&i).then(|| i - 1)
        };
        if let Some(i) = indexed('x', self.n) {
            return Some(VarId::State(i));
        }
        if let Some(k) = indexed('w', self.m) {
            return Some(VarId::Wiener(k));
        }
        match name {
            "x" if self.n == 1 => Some(VarId::State(0)),
            "w" if self.m == 1 => Some(VarId::Wiener(0)),
            _ => None,
        }
    }

    /// True for identifiers of the form `x<k>`/`w<k>` (and the bare
    /// aliases) that are reserved even when out of range.
    pub fn is_reserved(&self, name: &str) -> bool {
        let indexed = |p: char| {
            name.strip_prefix(p)
                .is_some_and(|r| !r.is_empty() && r.chars().all(|c| c.is_ascii_digit()))
        };
        indexed('x') || indexed('w') || name == "t" || name == "x" || name == "w"
    }

    pub fn all_vars(&self) -> Vec<VarId> {
        let mut v: Vec<VarId> = (0..self.n).map(VarId::State).collect();
        v.push(VarId::Time);
        v.extend((0..self.m).map(VarId::Wiener));
        v
    }

    pub fn state_vars(&self) -> Vec<VarId> {
        (0..self.n).map(VarId::State).collect()
    }

    pub fn wiener_vars(&self) -> Vec<VarId> {
        (0..self.m).map(VarId::Wiener).collect()
    }

    pub fn numeric_params(&self) -> BTreeMap<String, f64> {
        self.params
            .iter()
            .filter_map(|(k, v)| match v {
                ParamValue::Numeric(x) => Some((k.clone(), *x)),
                ParamValue::Symbolic => None,
            })
            .collect()
    }

    pub fn symbolic_params(&self) -> Vec<String> {
        self.params
            .iter()
            .filter(|(_, v)| matches!(v, ParamValue::Symbolic))
            .map(|(k, _)| k.clone())
            .collect()
    }

    /// Same parameters and names, different dimensions and variable names.
    pub fn respecified(&self, n: usize, m: usize) -> Result<Context, ContextError> {
        let mut c = Context::new(n, m)?;
        c.params = self.params.clone();
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aliases_and_indexed_names() {
        let c = Context::scalar();
        assert_eq!(c.lookup_var("x"), Some(VarId::State(0)));
        assert_eq!(c.lookup_var("x1"), Some(VarId::State(0)));
        assert_eq!(c.lookup_var("w"), Some(VarId::Wiener(0)));
        assert_eq!(c.lookup_var("x2"), None);
        let c2 = Context::new(2, 2).unwrap();
        assert_eq!(c2.lookup_var("x"), None);
        assert_eq!(c2.lookup_var("w2"), Some(VarId::Wiener(1)));
    }

    #[test]
    fn custom_names() {
        let c = Context::scalar().with_state_names(&["y"]).unwrap();
        assert_eq!(c.lookup_var("y"), Some(VarId::State(0)));
        assert_eq!(c.var_name(VarId::State(0)), "y");
        assert!(Context::new(2, 1).unwrap().with_state_names(&["a", "a"]).is_err());
    }

    #[test]
    fn rejects_empty_dimensions() {
        assert!(Context::new(0, 1).is_err());
        assert!(Context::new(1, 0).is_err());
    }
}
