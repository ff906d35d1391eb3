pub mod arith;
pub mod bnn;
pub mod circuit;
pub mod cli;
pub mod error;
pub mod leakage;
pub mod masking;
pub mod trivium;
pub mod tvla;

pub use error::{Error, Result};
