//! Stability and performance certificates for finite-tail MPC.
//!
//! [`formulas`] holds the closed-form constants (accumulated-cost bounds,
//! tail contraction constant, horizon thresholds); [`estimate`] measures the
//! cost-controllability constants of a given feedback by sampling.

pub mod estimate;
pub mod formulas;

pub use estimate::{estimate_controllability, EmpiricalConstants, LevelOutcome, SamplingPlan};
pub use formulas::{
    c_m_analytic, c_m_lp, gamma_k, horizon_certificate, m_lower_threshold, no_terminal_horizon_bound,
    relaxed_clf_margin, ConstantSource, ControllabilityCertificate, Horizon, HorizonCertificate,
    HorizonOverrides,
};
