//! The local feedback `κ`, its closed-loop rollouts and the finite-tail cost.

use crate::cost::QuadraticStageCost;
use crate::error::check_dim;
use crate::linalg::{is_finite, max_abs, spectral_radius};
use crate::model::{linearize, DiscreteSystem};
use crate::{Error, Matrix, Result, Vector};

const DARE_MAX_ITERATIONS: usize = 100_000;
const DARE_STEP_TOLERANCE: f64 = 1e-12;

/// Solves the discrete algebraic Riccati equation by fixed-point iteration
/// from `P₀ = Q` and returns `(P, K)` with `K = (R + BᵀPB)⁻¹BᵀPA`.
pub fn dare_solve(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<(Matrix, Matrix)> {
    let n = a.nrows();
    check_dim("DARE A", n, a.ncols())?;
    check_dim("DARE B rows", n, b.nrows())?;
    check_dim("DARE Q", n, q.nrows())?;
    check_dim("DARE R", b.ncols(), r.nrows())?;

    let at = a.transpose();
    let bt = b.transpose();
    let gain = |p: &Matrix| -> Option<Matrix> {
        let s = r + &bt * p * b;
        s.cholesky().map(|c| c.solve(&(&bt * p * a)))
    };

    let mut p = q.clone();
    let mut converged = false;
    for _ in 0..DARE_MAX_ITERATIONS {
        let Some(k) = gain(&p) else { break };
        let next = q + &at * &p * a - &at * &p * b * &k;
        let next = (&next + next.transpose()) * 0.5;
        let delta = max_abs(&(&next - &p));
        if !delta.is_finite() {
            break;
        }
        p = next;
        if delta < DARE_STEP_TOLERANCE * max_abs(&p).max(1.0) {
            converged = true;
            break;
        }
    }

    let k = gain(&p);
    let radius = k
        .as_ref()
        .map(|k| spectral_radius(&(a - b * k)))
        .unwrap_or(f64::INFINITY);
    match k {
        Some(k) if converged && radius < 1.0 => Ok((p, k)),
        _ => Err(Error::Synthesis {
            spectral_radius: radius,
        }),
    }
}

/// Residual `‖Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA − P‖_max` of a Riccati solution.
pub fn dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> f64 {
    let s = r + b.transpose() * p * b;
    let Some(chol) = s.cholesky() else {
        return f64::INFINITY;
    };
    let k = chol.solve(&(b.transpose() * p * a));
    max_abs(&(q + a.transpose() * p * a - a.transpose() * p * b * k - p))
}

/// Saturated linear feedback `κ(x) = clip(u_s − K(x − x_s), u_lo, u_hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailController {
    gain: Matrix,
    x_s: Vector,
    u_s: Vector,
    u_lo: Vector,
    u_hi: Vector,
}

impl TailController {
    pub fn new(gain: Matrix, x_s: Vector, u_s: Vector, u_lo: Vector, u_hi: Vector) -> Result<Self> {
        check_dim("feedback gain rows", u_s.len(), gain.nrows())?;
        check_dim("feedback gain columns", x_s.len(), gain.ncols())?;
        check_dim("saturation lower bound", u_s.len(), u_lo.len())?;
        check_dim("saturation upper bound", u_s.len(), u_hi.len())?;
        Ok(Self {
            gain,
            x_s,
            u_s,
            u_lo,
            u_hi,
        })
    }

    /// Controller with an explicit gain, saturated to the system's input box.
    pub fn with_gain(sys: &DiscreteSystem, cost: &QuadraticStageCost, gain: Matrix) -> Result<Self> {
        let z = sys.z_box();
        Self::new(
            gain,
            cost.x_s().clone(),
            cost.u_s().clone(),
            z.u_lo.clone(),
            z.u_hi.clone(),
        )
    }

    /// LQR on the finite-difference linearization at the setpoint.
    pub fn lqr(sys: &DiscreteSystem, cost: &QuadraticStageCost) -> Result<Self> {
        let (a, b) = linearize(sys, cost.x_s(), cost.u_s())?;
        let q = Matrix::from_diagonal(cost.q_diag());
        let r = Matrix::from_diagonal(cost.r_diag());
        let (_, k) = dare_solve(&a, &b, &q, &r)?;
        Self::with_gain(sys, cost, k)
    }

    pub fn gain(&self) -> &Matrix {
        &self.gain
    }

    /// The affine law before saturation.
    pub fn raw_input(&self, x: &Vector) -> Vector {
        &self.u_s - &self.gain * (x - &self.x_s)
    }

    pub fn input(&self, x: &Vector) -> Vector {
        let raw = self.raw_input(x);
        Vector::from_iterator(
            raw.len(),
            raw.iter()
                .zip(self.u_lo.iter().zip(self.u_hi.iter()))
                .map(|(v, (l, h))| v.clamp(*l, *h)),
        )
    }

    /// Whether the affine law leaves the saturation box at `x`.
    pub fn saturates(&self, x: &Vector) -> bool {
        let raw = self.raw_input(x);
        raw.iter()
            .zip(self.u_lo.iter().zip(self.u_hi.iter()))
            .any(|(v, (l, h))| v < l || v > h)
    }

    /// `∂κ/∂x`: `−K` with the rows of saturated components zeroed.
    pub fn input_jacobian(&self, x: &Vector) -> Matrix {
        let raw = self.raw_input(x);
        let mut jac = -&self.gain;
        for (i, v) in raw.iter().enumerate() {
            if *v < self.u_lo[i] || *v > self.u_hi[i] {
                jac.row_mut(i).fill(0.0);
            }
        }
        jac
    }
}

/// Closed-loop response `φ_x`, `φ_u` of the feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// `horizon + 1` states, starting at the initial state.
    pub states: Vec<Vector>,
    /// `horizon` inputs, `inputs[k] = κ(states[k])`.
    pub inputs: Vec<Vector>,
}

pub fn rollout(
    sys: &DiscreteSystem,
    controller: &TailController,
    x: &Vector,
    horizon: usize,
) -> Result<Rollout> {
    check_dim("rollout state", sys.n(), x.len())?;
    if !is_finite(x) {
        return Err(Error::Rollout { step: 0 });
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    states.push(x.clone());
    for k in 0..horizon {
        let u = controller.input(&states[k]);
        let next = sys
            .step(&states[k], &u)
            .map_err(|_| Error::Rollout { step: k + 1 })?;
        if !is_finite(&next) {
            return Err(Error::Rollout { step: k + 1 });
        }
        inputs.push(u);
        states.push(next);
    }
    Ok(Rollout { states, inputs })
}

/// Value of the finite-tail cost: a finite sum or the "infinite" marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailValue {
    Feasible(f64),
    /// The rollout left `Z`; `step` is the first offending index.
    Infeasible { step: usize },
}

impl TailValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            TailValue::Feasible(v) => Some(v),
            TailValue::Infeasible { .. } => None,
        }
    }

    pub fn is_feasible(self) -> bool {
        matches!(self, TailValue::Feasible(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailEvaluation {
    pub value: TailValue,
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub per_step_costs: Vec<f64>,
}

impl TailEvaluation {
    /// Sum of the per-step costs regardless of feasibility.
    pub fn cost_sum(&self) -> f64 {
        self.per_step_costs.iter().sum()
    }
}

/// `V_{f,M}(x)`: the `M`-step cost of the feedback from `x`, infinite when any
/// pair `(φ_x(k), φ_u(k))`, `k < M`, leaves `Z`.
pub fn finite_tail_cost(
    sys: &DiscreteSystem,
    cost: &QuadraticStageCost,
    controller: &TailController,
    x: &Vector,
    horizon: usize,
) -> Result<TailEvaluation> {
    finite_tail_cost_within(sys, cost, controller, x, horizon, 0.0)
}

/// [`finite_tail_cost`] with the box of `Z` relaxed by `tol`.
pub fn finite_tail_cost_within(
    sys: &DiscreteSystem,
    cost: &QuadraticStageCost,
    controller: &TailController,
    x: &Vector,
    horizon: usize,
    tol: f64,
) -> Result<TailEvaluation> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("tail horizon must be at least 1".into()));
    }
    let Rollout { states, inputs } = rollout(sys, controller, x, horizon)?;
    let z = sys.z_box();
    let mut first_violation = None;
    let mut per_step_costs = Vec::with_capacity(horizon);
    for (k, (xk, uk)) in states.iter().zip(inputs.iter()).enumerate() {
        if first_violation.is_none() && !z.contains_within(xk, uk, tol) {
            first_violation = Some(k);
        }
        per_step_costs.push(cost.stage_cost(xk, uk)?);
    }
    let value = match first_violation {
        Some(step) => TailValue::Infeasible { step },
        None => TailValue::Feasible(per_step_costs.iter().sum()),
    };
    Ok(TailEvaluation {
        value,
        states,
        inputs,
        per_step_costs,
    })
}
