//! Multiobjective model predictive control for home energy management.
//!
//! Control trajectories are compressed onto a discrete Laguerre basis, the
//! physical bounds become linear inequalities over the coefficients, and a
//! feasibility-preserving evolutionary search trades energy cost against
//! user dissatisfaction inside a receding-horizon loop.

pub mod baselines;
pub mod cli;
pub mod constraints;
pub mod domain;
pub mod error;
pub mod harness;
pub mod io;
pub mod laguerre;
pub mod linalg;
pub mod moea;
pub mod objectives;
pub mod sampler;

pub use error::{Error, Result};
