//! Class-incremental learning with generative classifiers.

pub mod baselines;
pub mod error;
pub mod genclass;
pub mod harness;
pub mod netcore;
pub mod numerics;
pub mod selftest;
pub mod slda;
pub mod stream;

pub use error::{Error, Result};
