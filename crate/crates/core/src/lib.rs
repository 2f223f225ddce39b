//! Simulation harness for comparing treatment allocations driven by
//! estimated conditional average treatment effects against allocations
//! driven by the true effects.

pub mod config;
pub mod dgp;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod io;
pub mod learners;
pub mod matrix;
pub mod plot;
pub mod policy;
pub mod seed;
pub mod shift;

pub use error::{Error, Result};
pub use matrix::Matrix;
