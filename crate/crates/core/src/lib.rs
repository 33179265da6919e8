//! Drift estimation for stochastic differential equations.
//!
//! The drift of `dX = V(X) dt + G(X) dW` is the conditional mean rate of
//! the increments, `V(x) = E[(X(t + dt) - X(t)) / dt | X(t) = x]` in the
//! limit `dt -> 0`. This crate turns a sampled path into pairs of states and
//! third-order increment targets and regresses one on the other with kernel
//! integral operators.
//!
//! * [`systems`]: benchmark SDEs and their simulation.
//! * [`kernels`]: Gaussian, Markov and diffusion kernels, bandwidth selection.
//! * [`condexp`]: kernel representation of a scalar conditional expectation.
//! * [`drift`]: increment targets, dense and shared-unit drift estimators.
//! * [`eval`]: error metrics and orbit comparison.
//! * [`cli`]: the `sde-drift` command line.

pub mod cli;
pub mod condexp;
pub mod drift;
pub mod error;
pub mod eval;
pub mod field;
pub mod kernels;
pub mod points;
pub mod systems;

pub use error::{Error, Result};
pub use field::{FieldValue, VectorField};
pub use points::Points;
