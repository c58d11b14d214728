//! Dynamical system definitions: state variables, parameters and one
//! right-hand side per state variable.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{self, Expr, ExprError, Var};
use crate::linalg::Matrix;

/// Parameter values that replace model defaults for a single call.
pub type Overrides = BTreeMap<String, f64>;

/// Dimension above which a model is accepted but flagged.
pub const SOFT_MAX_DIM: usize = 6;
/// Largest dimension accepted by grid-based operations.
pub const GRID_MAX_DIM: usize = 3;

pub const BUILTIN_MODELS: [&str; 3] = ["saddle_node_cubic", "linear_1d", "double_well_2d"];

#[derive(Debug, Clone)]
pub struct SystemModel {
    name: String,
    state: Vec<String>,
    params: Vec<(String, f64)>,
    rhs: Vec<Expr>,
    // jacobian[i][j] = d rhs_i / d state_j
    jacobian: Vec<Vec<Expr>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    name: String,
    state: Vec<String>,
    params: BTreeMap<String, f64>,
    rhs: BTreeMap<String, String>,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl SystemModel {
    /// Builds and validates a model. `rhs[i]` is the right-hand side for
    /// `state[i]`.
    pub fn new(
        name: impl Into<String>,
        state: Vec<String>,
        params: Vec<(String, f64)>,
        rhs: &[&str],
    ) -> Result<Self> {
        if state.is_empty() {
            return Err(Error::Schema(
                "model needs at least one state variable".into(),
            ));
        }
        if rhs.len() != state.len() {
            return Err(Error::Schema(format!(
                "{} state variables but {} right-hand sides",
                state.len(),
                rhs.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for n in state.iter().chain(params.iter().map(|(n, _)| n)) {
            if !is_identifier(n) {
                return Err(Error::Schema(format!("`{n}` is not a valid identifier")));
            }
            if expr::Func::from_name(n).is_some() {
                return Err(Error::Schema(format!("`{n}` is a reserved function name")));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::Schema(format!("name `{n}` declared twice")));
            }
        }
        if let Some((p, v)) = params.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Schema(format!(
                "parameter `{p}` has non-finite default {v}"
            )));
        }
        let state_refs: Vec<&str> = state.iter().map(String::as_str).collect();
        let param_refs: Vec<&str> = params.iter().map(|(n, _)| n.as_str()).collect();
        let rhs = state
            .iter()
            .zip(rhs)
            .map(|(s, text)| {
                expr::parse(text, &state_refs, &param_refs).map_err(|source| Error::Equation {
                    state: s.clone(),
                    source,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let jacobian = rhs
            .iter()
            .map(|f| {
                (0..state.len())
                    .map(|j| f.derivative(Var::State(j)))
                    .collect()
            })
            .collect();
        Ok(SystemModel {
            name: name.into(),
            state,
            params,
            rhs,
            jacobian,
        })
    }

    /// Parses a JSON model document.
    pub fn from_json(document: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(document).map_err(|e| Error::Schema(e.to_string()))?;
        let declared: BTreeSet<&String> = doc.state.iter().collect();
        if declared.len() != doc.state.len() {
            return Err(Error::Schema("duplicate state variable".into()));
        }
        for key in doc.rhs.keys() {
            if !declared.contains(key) {
                return Err(Error::Schema(format!(
                    "rhs entry for undeclared state `{key}`"
                )));
            }
        }
        let mut texts = Vec::with_capacity(doc.state.len());
        for s in &doc.state {
            match doc.rhs.get(s) {
                Some(t) => texts.push(t.as_str()),
                None => return Err(Error::Schema(format!("missing rhs for state `{s}`"))),
            }
        }
        SystemModel::new(
            doc.name,
            doc.state,
            doc.params.into_iter().collect(),
            &texts,
        )
    }

    /// Serializes to the JSON model format.
    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            name: self.name.clone(),
            state: self.state.clone(),
            params: self.params.iter().cloned().collect(),
            rhs: self
                .state
                .iter()
                .cloned()
                .zip(self.rhs.iter().map(Expr::to_string))
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("model document serializes")
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        match name {
            "saddle_node_cubic" => {
                SystemModel::new(name, s(&["x"]), vec![("mu".into(), 0.0)], &["mu + x - x^3"])
            }
            "linear_1d" => SystemModel::new(
                name,
                s(&["x"]),
                vec![("mu".into(), 0.0), ("k".into(), 1.0)],
                &["mu - k*x"],
            ),
            // gradient flow of U = (x^2 - 1)^2 + y^2
            "double_well_2d" => {
                SystemModel::new(name, s(&["x", "y"]), vec![], &["4*x - 4*x^3", "-2*y"])
            }
            _ => Err(Error::UnknownModel(name.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn rhs(&self) -> &[Expr] {
        &self.rhs
    }

    /// Symbolic Jacobian entries, row `i` holding the partials of `rhs[i]`.
    pub fn jacobian_exprs(&self) -> &[Vec<Expr>] {
        &self.jacobian
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|(n, _)| n == name)
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state.iter().position(|n| n == name)
    }

    pub fn exceeds_soft_limit(&self) -> bool {
        self.dim() > SOFT_MAX_DIM
    }

    /// Resolves defaults plus overrides into a bound system.
    pub fn bind(&self, overrides: &Overrides) -> Result<System<'_>> {
        let mut params: Vec<f64> = self.params.iter().map(|(_, v)| *v).collect();
        for (name, value) in overrides {
            let i = self
                .param_index(name)
                .ok_or_else(|| Error::UnknownParameter(name.clone()))?;
            params[i] = *value;
        }
        Ok(System {
            model: self,
            params,
            forcing: None,
        })
    }

    pub(crate) fn require_grid_dim(&self) -> Result<()> {
        if self.dim() > GRID_MAX_DIM {
            Err(Error::DimensionTooLarge {
                dim: self.dim(),
                max: GRID_MAX_DIM,
            })
        } else {
            Ok(())
        }
    }
}

/// A model with every parameter fixed, optionally with a constant additive
/// forcing on the right-hand side.
#[derive(Debug, Clone)]
pub struct System<'m> {
    model: &'m SystemModel,
    params: Vec<f64>,
    forcing: Option<Vec<f64>>,
}

impl<'m> System<'m> {
    pub fn model(&self) -> &'m SystemModel {
        self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.model.param_index(name).map(|i| self.params[i])
    }

    pub fn with_param(&self, index: usize, value: f64) -> System<'m> {
        let mut s = self.clone();
        s.params[index] = value;
        s
    }

    pub fn with_forcing(&self, forcing: Vec<f64>) -> System<'m> {
        assert_eq!(forcing.len(), self.dim());
        let mut s = self.clone();
        s.forcing = Some(forcing);
        s
    }

    pub fn without_forcing(&self) -> System<'m> {
        let mut s = self.clone();
        s.forcing = None;
        s
    }

    /// Writes the vector field at `x` into `out`.
    pub fn rhs(&self, x: &[f64], out: &mut [f64]) -> Result<(), ExprError> {
        for (i, f) in self.model.rhs.iter().enumerate() {
            out[i] = f.eval(x, &self.params)?;
        }
        if let Some(g) = &self.forcing {
            for (o, g) in out.iter_mut().zip(g) {
                *o += g;
            }
        }
        Ok(())
    }

    pub fn rhs_vec(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        let mut out = vec![0.0; self.dim()];
        self.rhs(x, &mut out)?;
        Ok(out)
    }

    /// Exact Jacobian from the symbolic partial derivatives.
    pub fn jacobian(&self, x: &[f64]) -> Result<Matrix, ExprError> {
        let n = self.dim();
        let mut m = Matrix::zeros(n);
        for (i, row) in self.model.jacobian.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                m.set(i, j, e.eval(x, &self.params)?);
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBIC_DOC: &str =
        r#"{"name": "cubic", "state": ["x"], "params": {"mu": 0.0}, "rhs": {"x": "mu + x - x^3"}}"#;

    #[test]
    fn load_cubic_document() {
        let m = SystemModel::from_json(CUBIC_DOC).unwrap();
        assert_eq!(m.dim(), 1);
        assert_eq!(m.params(), &[("mu".to_string(), 0.0)]);
        let sys = m.bind(&Overrides::from([("mu".into(), 0.3)])).unwrap();
        assert!((sys.rhs_vec(&[0.0]).unwrap()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn undeclared_identifier_names_equation() {
        let doc = r#"{"name": "m", "state": ["x"], "params": {}, "rhs": {"x": "x + y"}}"#;
        match SystemModel::from_json(doc).unwrap_err() {
            Error::Equation { state, source } => {
                assert_eq!(state, "x");
                assert_eq!(source, ExprError::UnknownIdentifier("y".into()));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn arity_mismatch_and_unknown_keys() {
        let doc = r#"{"name": "m", "state": ["x", "y"], "params": {}, "rhs": {"x": "y"}}"#;
        assert!(matches!(SystemModel::from_json(doc), Err(Error::Schema(_))));
        let doc = r#"{"name": "m", "state": ["x"], "params": {}, "rhs": {"x": "x"}, "extra": 1}"#;
        assert!(matches!(SystemModel::from_json(doc), Err(Error::Schema(_))));
        let doc = r#"{"name": "m", "state": ["x"], "rhs": {"x": "x"}}"#;
        assert!(matches!(SystemModel::from_json(doc), Err(Error::Schema(_))));
        let doc = r#"{"name": "m", "state": ["x"], "params": {"x": 1}, "rhs": {"x": "x"}}"#;
        assert!(matches!(SystemModel::from_json(doc), Err(Error::Schema(_))));
    }

    #[test]
    fn builtins() {
        let cubic = SystemModel::builtin("saddle_node_cubic").unwrap();
        assert_eq!(cubic.rhs()[0].to_string(), "mu + x - x^3");
        let lin = SystemModel::builtin("linear_1d").unwrap();
        let sys = lin.bind(&Overrides::new()).unwrap();
        assert_eq!(sys.param("k"), Some(1.0));
        assert!(matches!(
            SystemModel::builtin("bogus"),
            Err(Error::UnknownModel(_))
        ));
    }

    #[test]
    fn double_well_is_negative_gradient() {
        let m = SystemModel::builtin("double_well_2d").unwrap();
        let sys = m.bind(&Overrides::new()).unwrap();
        for i in 0..=20 {
            for j in 0..=20 {
                let x = -2.0 + 0.2 * i as f64;
                let y = -2.0 + 0.2 * j as f64;
                // U = (x^2 - 1)^2 + y^2
                let grad = [4.0 * x * (x * x - 1.0), 2.0 * y];
                let f = sys.rhs_vec(&[x, y]).unwrap();
                assert!((f[0] + grad[0]).abs() < 1e-12 && (f[1] + grad[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unknown_override_rejected() {
        let m = SystemModel::builtin("saddle_node_cubic").unwrap();
        assert!(matches!(
            m.bind(&Overrides::from([("nu".into(), 1.0)])),
            Err(Error::UnknownParameter(_))
        ));
    }

    #[test]
    fn print_then_load_round_trip() {
        let m = SystemModel::new(
            "osc",
            vec!["u".into(), "v".into()],
            vec![("a".into(), 0.5), ("b".into(), -1.25)],
            &["a*u - v^3/3 + sin(v)", "-(u - b)/(1 + exp(-v))"],
        )
        .unwrap();
        let back = SystemModel::from_json(&m.to_json()).unwrap();
        let s1 = m.bind(&Overrides::new()).unwrap();
        let s2 = back.bind(&Overrides::new()).unwrap();
        for k in 0..50 {
            let x = [(k as f64 * 0.37).sin() * 2.0, (k as f64 * 0.11).cos() * 3.0];
            assert_eq!(s1.rhs_vec(&x).unwrap(), s2.rhs_vec(&x).unwrap());
        }
    }

    #[test]
    fn jacobian_of_double_well() {
        let m = SystemModel::builtin("double_well_2d").unwrap();
        let j = m
            .bind(&Overrides::new())
            .unwrap()
            .jacobian(&[1.0, 0.0])
            .unwrap();
        assert_eq!(j.rows(), vec![vec![-8.0, 0.0], vec![0.0, -2.0]]);
    }
}
