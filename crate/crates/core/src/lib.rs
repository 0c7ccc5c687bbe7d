//! Numerical laboratory for constrained matrix Li-Yau-Hamilton estimates
//! on model Kähler manifolds evolving by the ε-Kähler-Ricci flow.

pub mod checks;
pub mod cli;
pub mod error;
pub mod fields;
pub mod flow;
pub mod geom;
pub mod initial;
pub mod linalg;
pub mod lyh;

pub use error::{Error, Result};
