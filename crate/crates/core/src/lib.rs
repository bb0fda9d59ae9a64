//! Inverse optimal control for indefinite linear-quadratic problems.

pub mod config;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod experiments;
pub mod forward;
pub mod instances;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod sdp;
pub mod simulate;

pub use error::{Error, Result};
