//! Reference-level safety filtering for model-reference adaptive control.

pub mod barrier;
pub mod cli;
pub mod error;
pub mod filters;
pub mod linalg;
pub mod models;
pub mod mrac;
pub mod sim;
pub mod solvers;

pub use error::{Error, Result};
