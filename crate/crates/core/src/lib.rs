//! Online semi-infinite linear programming with a low-dimensional
//! non-negative dual basis.
//!
//! The dual of the constraint family is approximated as `u = Φw` with a
//! Gaussian RBF basis `Φ`. Online policies update the `q`-dimensional weight
//! `w`; offline oracles compute the projected benchmark they are measured
//! against.

pub mod basis;
pub mod csvfmt;
pub mod dual;
pub mod error;
pub mod harness;
pub mod instance;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod policies;

pub use error::{Error, Result};
