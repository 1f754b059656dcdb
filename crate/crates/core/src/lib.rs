//! Nonlinear model predictive control with a finite-tail terminal cost.
//!
//! The terminal penalty of the MPC problem is the cost of running a locally
//! stabilizing feedback for `M` further steps from the predicted terminal
//! state. Besides the online solver, the crate computes the horizon bounds
//! and suboptimality constants that certify closed-loop stability, estimates
//! the required cost-controllability constants by sampling, and checks the
//! resulting guarantees along simulated closed-loop trajectories.
//!
//! Module map:
//! - [`model`]: discrete-time systems, the four-tank benchmark, linearization.
//! - [`cost`]: quadratic tracking stage cost and its input-minimized form.
//! - [`tail`]: LQR synthesis, the local feedback, rollouts, finite-tail cost.
//! - [`certify`]: closed-form certificates and sampling-based estimation.
//! - [`mpc`]: single-shooting solver for the finite-tail MPC problem.
//! - [`simulate`]: closed-loop simulation and guarantee verification.
//! - [`config`]: the run configuration file schema.

pub mod certify;
pub mod config;
pub mod cost;
mod error;
pub mod linalg;
pub mod model;
pub mod mpc;
pub mod simulate;
pub mod tail;

pub use error::{Error, Result};

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
