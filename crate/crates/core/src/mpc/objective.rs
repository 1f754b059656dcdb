use super::FiniteTailMpc;
use crate::error::check_dim;
use crate::linalg::is_finite;
use crate::tail::TailValue;
use crate::{Error, Result, Vector};

/// `J_{N,M}` at an input sequence and its gradient w.r.t. the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEvaluation {
    /// Stage costs plus the tail cost sum (finite even when the tail leaves `Z`).
    pub value: f64,
    pub gradient: Vec<Vector>,
    /// Tail value with the exact `Z` membership test.
    pub tail: TailValue,
}

/// Augmented-Lagrangian data for the state box on `x(1..N+M−1)`.
#[derive(Debug, Clone)]
pub(super) struct Penalty {
    pub weight: f64,
    /// Multipliers of `x − x_hi ≤ 0`, one per predicted state component.
    pub upper: Vec<f64>,
    /// Multipliers of `x_lo − x ≤ 0`.
    pub lower: Vec<f64>,
}

impl Penalty {
    pub fn new(weight: f64, len: usize) -> Self {
        Self {
            weight,
            upper: vec![0.0; len],
            lower: vec![0.0; len],
        }
    }
}

/// Forward/backward pass result on the flattened input sequence.
#[derive(Debug, Clone)]
pub(super) struct Evaluation {
    /// Flattened input sequence this evaluation belongs to.
    pub point: Vec<f64>,
    pub cost: f64,
    /// `cost` plus the augmented-Lagrangian penalty.
    pub merit: f64,
    pub gradient: Vec<f64>,
    /// Box constraint values `(x − x_hi, x_lo − x)` per constrained state.
    pub upper_gap: Vec<f64>,
    pub lower_gap: Vec<f64>,
    pub violation: f64,
    pub tail_violation: f64,
    pub tail_exact: TailValue,
}

impl FiniteTailMpc {
    /// Value and reverse-mode gradient of the finite-tail cost at `u_seq`.
    ///
    /// Saturated tail inputs and empty tanks contribute zero derivative.
    pub fn objective(&self, x0: &Vector, u_seq: &[Vector]) -> Result<ObjectiveEvaluation> {
        let n_steps = self.config.prediction_horizon;
        check_dim("input sequence length", n_steps, u_seq.len())?;
        let m = self.sys.m();
        let mut flat = Vec::with_capacity(n_steps * m);
        for u in u_seq {
            check_dim("input", m, u.len())?;
            flat.extend(u.iter());
        }
        let eval = self.evaluate(x0, &flat, None, true)?;
        Ok(ObjectiveEvaluation {
            value: eval.cost,
            gradient: eval
                .gradient
                .chunks(m)
                .map(Vector::from_column_slice)
                .collect(),
            tail: eval.tail_exact,
        })
    }

    pub(super) fn evaluate(
        &self,
        x0: &Vector,
        flat: &[f64],
        penalty: Option<&Penalty>,
        with_gradient: bool,
    ) -> Result<Evaluation> {
        let sys = &self.sys;
        let z = sys.z_box();
        let (n, m) = (sys.n(), sys.m());
        let horizon = self.config.prediction_horizon;
        let total = horizon + self.config.tail_horizon;

        // Forward: states x_0..x_{N+M−1}, inputs v_0..v_{N+M−1}.
        let mut states = Vec::with_capacity(total + 1);
        let mut inputs = Vec::with_capacity(total);
        states.push(x0.clone());
        let mut cost = 0.0;
        let mut tail_exact = None;
        for k in 0..total {
            let v = if k < horizon {
                Vector::from_column_slice(&flat[k * m..(k + 1) * m])
            } else {
                self.controller.input(&states[k])
            };
            cost += self.cost.stage_cost(&states[k], &v)?;
            if k >= horizon && tail_exact.is_none() && !z.contains(&states[k], &v) {
                tail_exact = Some(k - horizon);
            }
            if k + 1 < total {
                let next = sys.step(&states[k], &v)?;
                if !is_finite(&next) {
                    return Err(Error::Rollout { step: k + 1 });
                }
                states.push(next);
            }
            inputs.push(v);
        }
        let tail_exact = match tail_exact {
            Some(step) => TailValue::Infeasible { step },
            None => TailValue::Feasible(
                (horizon..total)
                    .map(|k| self.cost.stage_cost(&states[k], &inputs[k]))
                    .sum::<Result<f64>>()?,
            ),
        };

        // Box constraints on x_1..x_{N+M−1}.
        let constrained = total - 1;
        let mut upper_gap = vec![0.0; constrained * n];
        let mut lower_gap = vec![0.0; constrained * n];
        let mut violation: f64 = 0.0;
        let mut tail_violation: f64 = 0.0;
        for k in 1..total {
            for i in 0..n {
                let idx = (k - 1) * n + i;
                upper_gap[idx] = states[k][i] - z.x_hi[i];
                lower_gap[idx] = z.x_lo[i] - states[k][i];
                let v = upper_gap[idx].max(lower_gap[idx]).max(0.0);
                violation = violation.max(v);
                if k >= horizon {
                    tail_violation = tail_violation.max(v);
                }
            }
        }

        let mut merit = cost;
        let mut penalty_slope = vec![(0.0, 0.0); constrained * n];
        if let Some(p) = penalty {
            let mu = p.weight;
            for idx in 0..constrained * n {
                let hi = (p.upper[idx] + mu * upper_gap[idx]).max(0.0);
                let lo = (p.lower[idx] + mu * lower_gap[idx]).max(0.0);
                merit += (hi * hi - p.upper[idx].powi(2) + lo * lo - p.lower[idx].powi(2)) / (2.0 * mu);
                penalty_slope[idx] = (hi, lo);
            }
        }

        let mut gradient = vec![0.0; horizon * m];
        if with_gradient {
            // Reverse sweep; `adjoint` holds ∂merit/∂x_{k+1}.
            let mut adjoint = Vector::zeros(n);
            for k in (0..total).rev() {
                let (mut gx, mut gu) = self.cost.gradients(&states[k], &inputs[k]);
                if k + 1 < total {
                    let (a, b) = sys.jacobians(&states[k], &inputs[k])?;
                    gx += a.tr_mul(&adjoint);
                    gu += b.tr_mul(&adjoint);
                }
                if k >= horizon {
                    gx += self.controller.input_jacobian(&states[k]).tr_mul(&gu);
                } else {
                    gradient[k * m..(k + 1) * m].copy_from_slice(gu.as_slice());
                }
                if k >= 1 {
                    for i in 0..n {
                        let (hi, lo) = penalty_slope[(k - 1) * n + i];
                        gx[i] += hi - lo;
                    }
                }
                adjoint = gx;
            }
        }

        Ok(Evaluation {
            point: flat.to_vec(),
            cost,
            merit,
            gradient,
            upper_gap,
            lower_gap,
            violation,
            tail_violation,
            tail_exact,
        })
    }
}
