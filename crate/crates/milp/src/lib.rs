//! Small mixed-integer linear programming toolkit: a bounded-variable simplex
//! for continuous relaxations, best-first branch-and-bound over binary
//! columns, an exhaustive enumeration oracle, and CPLEX-LP text exchange.
//!
//! All models are maximizations with finitely bounded columns.

mod bnb;
mod error;
mod lp;
pub mod lpformat;
mod model;
mod oracle;

pub use bnb::{branch_and_bound, branch_and_bound_with_start, MipOptions, MipResult, MipStatus};
pub use error::{MilpError, Result};
pub use lp::{lp_solve, lp_solve_with, LpOptions, LpSolution, LpStatus};
pub use model::{Col, Column, Comparator, Model, Row, RowId, VarKind};
pub use oracle::{enumerate_oracle, ENUMERATION_LIMIT};
