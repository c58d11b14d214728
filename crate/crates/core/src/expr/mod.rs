//! Right-hand-side expressions: parsing, evaluation and symbolic derivatives.
//!
//! An [`Expr`] is an immutable tree over constants, state variables and
//! parameters. Identifiers are resolved at parse time into [`Symbol`]s that
//! carry both a positional index (for fast slice-based evaluation) and the
//! declared name (for printing).

mod deriv;
mod parser;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub use parser::parse;

/// Node constructors that fold constant subtrees and trivial identities.
pub mod fold {
    pub use super::deriv::{add, call, div, mul, neg, pow, sub};
}

/// Errors raised while parsing or evaluating an expression.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at position {position} near {token:?}: {message}")]
    Syntax {
        position: usize,
        token: String,
        message: String,
    },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("identifier `{0}` has no bound value")]
    Unbound(String),
    #[error("domain error: {0}")]
    Domain(String),
}

/// A resolved identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Symbol {
    pub index: usize,
    pub name: Arc<str>,
}

impl Symbol {
    pub fn new(index: usize, name: &str) -> Self {
        Symbol {
            index,
            name: Arc::from(name),
        }
    }
}

/// Variable to differentiate against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    State(usize),
    Param(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Tanh,
    Sqrt,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "tanh" => Func::Tanh,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, u: f64) -> Result<f64, ExprError> {
        match self {
            Func::Sin => Ok(u.sin()),
            Func::Cos => Ok(u.cos()),
            Func::Exp => Ok(u.exp()),
            Func::Tanh => Ok(u.tanh()),
            Func::Ln if u > 0.0 => Ok(u.ln()),
            Func::Ln => Err(ExprError::Domain(format!("ln of non-positive value {u}"))),
            Func::Sqrt if u >= 0.0 => Ok(u.sqrt()),
            Func::Sqrt => Err(ExprError::Domain(format!("sqrt of negative value {u}"))),
        }
    }
}

/// Expression tree. `Pow` carries a constant exponent.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    State(Symbol),
    Param(Symbol),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

fn finite(v: f64, what: &str) -> Result<f64, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::Domain(format!("non-finite result in {what}")))
    }
}

pub(crate) fn pow_value(base: f64, exponent: f64) -> Result<f64, ExprError> {
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        if base == 0.0 && exponent < 0.0 {
            return Err(ExprError::Domain("zero raised to a negative power".into()));
        }
        Ok(base.powi(exponent as i32))
    } else if base > 0.0 {
        Ok(base.powf(exponent))
    } else {
        Err(ExprError::Domain(format!(
            "non-integer power {exponent} of non-positive base {base}"
        )))
    }
}

impl Expr {
    /// Evaluates against positional state and parameter slices.
    pub fn eval(&self, state: &[f64], params: &[f64]) -> Result<f64, ExprError> {
        self.eval_by(&|sym: &Symbol, is_state: bool| {
            let values = if is_state { state } else { params };
            values
                .get(sym.index)
                .copied()
                .ok_or_else(|| ExprError::Unbound(sym.name.to_string()))
        })
    }

    /// Evaluates with values looked up by name.
    pub fn eval_named(
        &self,
        state: &BTreeMap<String, f64>,
        params: &BTreeMap<String, f64>,
    ) -> Result<f64, ExprError> {
        self.eval_by(&|sym: &Symbol, is_state: bool| {
            let values = if is_state { state } else { params };
            values
                .get(&*sym.name)
                .copied()
                .ok_or_else(|| ExprError::Unbound(sym.name.to_string()))
        })
    }

    fn eval_by<L>(&self, lookup: &L) -> Result<f64, ExprError>
    where
        L: Fn(&Symbol, bool) -> Result<f64, ExprError>,
    {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::State(s) => lookup(s, true),
            Expr::Param(s) => lookup(s, false),
            Expr::Neg(a) => Ok(-a.eval_by(lookup)?),
            Expr::Add(a, b) => finite(a.eval_by(lookup)? + b.eval_by(lookup)?, "addition"),
            Expr::Sub(a, b) => finite(a.eval_by(lookup)? - b.eval_by(lookup)?, "subtraction"),
            Expr::Mul(a, b) => finite(a.eval_by(lookup)? * b.eval_by(lookup)?, "product"),
            Expr::Div(a, b) => {
                let num = a.eval_by(lookup)?;
                let den = b.eval_by(lookup)?;
                if den == 0.0 {
                    return Err(ExprError::Domain("division by zero".into()));
                }
                finite(num / den, "division")
            }
            Expr::Pow(a, e) => finite(pow_value(a.eval_by(lookup)?, *e)?, "power"),
            Expr::Call(f, a) => finite(f.apply(a.eval_by(lookup)?)?, f.name()),
        }
    }

    /// Symbolic derivative with respect to `wrt`, constant-folded.
    pub fn derivative(&self, wrt: Var) -> Expr {
        deriv::derivative(self, &|e: &Expr| match (e, wrt) {
            (Expr::State(s), Var::State(i)) => s.index == i,
            (Expr::Param(s), Var::Param(i)) => s.index == i,
            _ => false,
        })
    }

    /// True when the tree contains no identifiers.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::State(_) | Expr::Param(_) => false,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.is_constant(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.is_constant() && b.is_constant()
            }
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::State(_) | Expr::Param(_) => 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => 1 + a.size(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.size() + b.size()
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if *c < 0.0 || c.is_sign_negative() => 3,
            _ => 5,
        }
    }
}

/// Derivative with respect to the state variable called `var`.
pub fn differentiate(e: &Expr, var: &str) -> Expr {
    deriv::derivative(
        e,
        &|node: &Expr| matches!(node, Expr::State(s) if &*s.name == var),
    )
}

fn write_number(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        write!(f, "{v:e}")
    } else {
        write!(f, "{v}")
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write_number(f, *c),
            Expr::State(s) | Expr::Param(s) => f.write_str(&s.name),
            Expr::Neg(a) => {
                f.write_str("-")?;
                write_operand(f, a, 3)
            }
            Expr::Add(a, b) => {
                write_operand(f, a, 1)?;
                f.write_str(" + ")?;
                write_operand(f, b, 2)
            }
            Expr::Sub(a, b) => {
                write_operand(f, a, 1)?;
                f.write_str(" - ")?;
                write_operand(f, b, 2)
            }
            Expr::Mul(a, b) => {
                write_operand(f, a, 2)?;
                f.write_str("*")?;
                write_operand(f, b, 3)
            }
            Expr::Div(a, b) => {
                write_operand(f, a, 2)?;
                f.write_str("/")?;
                write_operand(f, b, 3)
            }
            Expr::Pow(a, e) => {
                write_operand(f, a, 5)?;
                f.write_str("^")?;
                if *e < 0.0 {
                    f.write_str("(")?;
                    write_number(f, *e)?;
                    f.write_str(")")
                } else {
                    write_number(f, *e)
                }
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
