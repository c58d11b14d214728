#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

//! Basin-of-attraction analysis for low-dimensional ODE models: equilibria,
//! basin maps, kick resilience and parameter continuation.

pub mod error;
pub mod expr;
pub mod grid;
pub mod integrate;
pub mod linalg;
pub mod model;
pub mod parallel;
pub mod table;

pub mod basin;
pub mod bifurcation;
pub mod equilibria;
pub mod kicks;

pub use error::{Error, Result};
pub use expr::{Expr, ExprError};
pub use grid::{CellGrid, StateBox};
pub use integrate::{IntegratorConfig, Method, Trajectory, Verdict};
pub use model::{Overrides, System, SystemModel};
pub use table::Table;
