//! Online finite-tail MPC problem, solved by single shooting.
//!
//! Only the `N` inputs are decision variables; predicted states come from
//! forward simulation and the `M` tail steps follow the local feedback, so
//! the tail horizon adds function evaluations but no decision variables.

mod objective;
mod solver;

use serde::{Deserialize, Serialize};

use crate::cost::QuadraticStageCost;
use crate::model::DiscreteSystem;
use crate::tail::{TailController, TailEvaluation, TailValue};
use crate::{Error, Result, Vector};

pub use objective::ObjectiveEvaluation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Quasi-Newton iterations per penalty round.
    pub max_iterations: usize,
    pub max_penalty_rounds: usize,
    /// Bound on the projected-gradient norm, relative to `1 + |objective|`.
    pub kkt_tolerance: f64,
    /// Allowed violation of the state box.
    pub constraint_tolerance: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub warm_start: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            max_penalty_rounds: 25,
            kkt_tolerance: 1e-7,
            constraint_tolerance: 1e-6,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            warm_start: true,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.kkt_tolerance > 0.0 && self.constraint_tolerance > 0.0) {
            return Err(Error::InvalidParameter("solver tolerances must be positive".into()));
        }
        if !(self.penalty_init > 0.0 && self.penalty_growth > 1.0) {
            return Err(Error::InvalidParameter(
                "penalty must start positive and grow by a factor > 1".into(),
            ));
        }
        if self.max_iterations == 0 || self.max_penalty_rounds == 0 {
            return Err(Error::InvalidParameter("solver iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    /// Prediction horizon `N`.
    pub prediction_horizon: usize,
    /// Tail horizon `M`.
    pub tail_horizon: usize,
    pub solver: SolverSettings,
}

impl MpcConfig {
    pub fn new(prediction_horizon: usize, tail_horizon: usize) -> Self {
        Self {
            prediction_horizon,
            tail_horizon,
            solver: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prediction_horizon == 0 || self.tail_horizon == 0 {
            return Err(Error::InvalidParameter(
                "prediction and tail horizons must be at least 1".into(),
            ));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max-iter",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub u_seq: Vec<Vector>,
    /// `N + 1` predicted states from forward simulation.
    pub x_seq: Vec<Vector>,
    /// `Σ ℓ(x(k), u(k)) + V_{f,M}(x(N))`; infinite unless the tail is feasible.
    pub value: f64,
    pub tail: TailEvaluation,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub penalty: f64,
    /// Largest violation of the state box over `x(1..N+M−1)`.
    pub constraint_violation: f64,
}

impl MpcSolution {
    pub fn first_input(&self) -> &Vector {
        &self.u_seq[0]
    }
}

/// The finite-tail MPC problem for one plant, cost and feedback.
#[derive(Debug, Clone)]
pub struct FiniteTailMpc {
    sys: DiscreteSystem,
    cost: QuadraticStageCost,
    controller: TailController,
    config: MpcConfig,
}

impl FiniteTailMpc {
    pub fn new(
        sys: DiscreteSystem,
        cost: QuadraticStageCost,
        controller: TailController,
        config: MpcConfig,
    ) -> Result<Self> {
        config.validate()?;
        crate::error::check_dim("stage cost state", sys.n(), cost.state_dim())?;
        crate::error::check_dim("stage cost input", sys.m(), cost.input_dim())?;
        Ok(Self {
            sys,
            cost,
            controller,
            config,
        })
    }

    pub fn system(&self) -> &DiscreteSystem {
        &self.sys
    }

    pub fn cost(&self) -> &QuadraticStageCost {
        &self.cost
    }

    pub fn controller(&self) -> &TailController {
        &self.controller
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    /// Same problem with different horizons.
    pub fn with_horizons(&self, prediction_horizon: usize, tail_horizon: usize) -> Result<Self> {
        let mut config = self.config.clone();
        config.prediction_horizon = prediction_horizon;
        config.tail_horizon = tail_horizon;
        Self::new(self.sys.clone(), self.cost.clone(), self.controller.clone(), config)
    }

    /// Shifted previous solution with `κ(x*(N))` appended: the standard
    /// feasible candidate for the next time step.
    pub fn shifted_warm_start(&self, previous: &MpcSolution) -> Vec<Vector> {
        let mut next: Vec<Vector> = previous.u_seq.iter().skip(1).cloned().collect();
        let terminal = &previous.x_seq[previous.x_seq.len() - 1];
        next.push(self.controller.input(terminal));
        next
    }

    /// Inputs of the feedback rollout from `x0`, used as the cold start.
    pub fn feedback_guess(&self, x0: &Vector) -> Result<Vec<Vector>> {
        let path = crate::tail::rollout(&self.sys, &self.controller, x0, self.config.prediction_horizon)?;
        Ok(path.inputs)
    }
}

pub(crate) fn tail_value_or_infinity(tail: &TailEvaluation) -> f64 {
    match tail.value {
        TailValue::Feasible(v) => v,
        TailValue::Infeasible { .. } => f64::INFINITY,
    }
}
