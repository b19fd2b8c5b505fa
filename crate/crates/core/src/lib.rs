//! Active mapping of the feasible region of problems with several
//! expensive black-box inequality constraints.
//!
//! Each constraint gets its own Gaussian-process surrogate. New evaluations
//! are placed where the joint model is least certain about the
//! feasible/infeasible boundary.

pub mod acquisition;
mod bounds;
mod error;
pub mod evaluation;
pub mod feasibility;
pub mod gp;
pub mod harness;
pub mod normal;
pub mod optimizer;
pub mod problems;
pub mod sampling;
pub mod search;

pub use bounds::Bounds;
pub use error::{Error, Result};
