//! EV charging station model with event-based price learning and
//! scenario-based MPC dispatch.

pub mod env;
pub mod bench;
pub mod ebo;
pub mod error;
pub mod heuristic;
pub mod mpc;
pub mod stochastic;
pub mod validate;

pub use error::{Error, Result};
