//! Augmented-penalty outer loop around a projected quasi-Newton method.

use super::objective::{Evaluation, Penalty};
use super::{tail_value_or_infinity, FiniteTailMpc, MpcSolution, SolveStatus};
use crate::error::check_dim;
use crate::tail::finite_tail_cost_within;
use crate::{Matrix, Result, Vector};

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

struct InnerResult {
    eval: Evaluation,
    iterations: usize,
    kkt: f64,
    converged: bool,
}

impl FiniteTailMpc {
    /// Solves the finite-tail MPC problem from `x0`.
    ///
    /// Inputs are kept in their box by projection; the state box over the
    /// prediction and tail is enforced by an augmented-Lagrangian penalty
    /// whose weight grows until the violation drops below the tolerance.
    /// Without a warm start the feedback rollout inputs are the initial guess.
    pub fn solve(&self, x0: &Vector, warm: Option<&[Vector]>) -> Result<MpcSolution> {
        let sys = &self.sys;
        let (n, m) = (sys.n(), sys.m());
        check_dim("initial state", n, x0.len())?;
        let settings = &self.config.solver;
        let horizon = self.config.prediction_horizon;
        let z_box = sys.z_box();

        let guess = match warm {
            Some(w) => {
                check_dim("warm start length", horizon, w.len())?;
                w.to_vec()
            }
            None => self.feedback_guess(x0)?,
        };
        let lo: Vec<f64> = (0..horizon).flat_map(|_| z_box.u_lo.iter().copied()).collect();
        let hi: Vec<f64> = (0..horizon).flat_map(|_| z_box.u_hi.iter().copied()).collect();
        let mut flat: Vec<f64> = guess.iter().flat_map(|u| u.iter().copied()).collect();
        project(&mut flat, &lo, &hi);

        let constrained = (horizon + self.config.tail_horizon - 1) * n;
        let mut penalty = Penalty::new(settings.penalty_init, constrained);
        let mut iterations = 0;
        let mut previous_violation = f64::INFINITY;
        let mut status = SolveStatus::Infeasible;
        let mut last = None;

        let initial_ok = z_box.contains_state(x0);
        for _ in 0..settings.max_penalty_rounds {
            if !initial_ok {
                break;
            }
            let inner = self.minimize(x0, &flat, &lo, &hi, &penalty)?;
            iterations += inner.iterations;
            flat.clone_from(&inner.eval.point);
            let violation = inner.eval.violation;
            if violation <= settings.constraint_tolerance {
                status = if inner.converged {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::MaxIter
                };
                last = Some(inner);
                break;
            }
            let mu = penalty.weight;
            for idx in 0..constrained {
                penalty.upper[idx] = (penalty.upper[idx] + mu * inner.eval.upper_gap[idx]).max(0.0);
                penalty.lower[idx] = (penalty.lower[idx] + mu * inner.eval.lower_gap[idx]).max(0.0);
            }
            if violation > 0.25 * previous_violation {
                penalty.weight *= settings.penalty_growth;
            }
            previous_violation = violation;
            last = Some(inner);
        }

        let (kkt, violation) = match &last {
            Some(r) => (r.kkt, r.eval.violation),
            None => (f64::INFINITY, z_box.state_violation(x0)),
        };
        let u_seq: Vec<Vector> = flat.chunks(m).map(Vector::from_column_slice).collect();
        let mut x_seq = Vec::with_capacity(horizon + 1);
        x_seq.push(x0.clone());
        let mut stage_sum = 0.0;
        for u in &u_seq {
            let x = &x_seq[x_seq.len() - 1];
            stage_sum += self.cost.stage_cost(x, u)?;
            let next = sys.step(x, u)?;
            x_seq.push(next);
        }
        let tol = if status == SolveStatus::Infeasible {
            0.0
        } else {
            settings.constraint_tolerance
        };
        let tail = finite_tail_cost_within(
            sys,
            &self.cost,
            &self.controller,
            &x_seq[horizon],
            self.config.tail_horizon,
            tol,
        )?;
        let value = if status == SolveStatus::Infeasible {
            f64::INFINITY
        } else {
            stage_sum + tail_value_or_infinity(&tail)
        };
        Ok(MpcSolution {
            u_seq,
            x_seq,
            value,
            tail,
            status,
            kkt_residual: kkt,
            iterations,
            penalty: penalty.weight,
            constraint_violation: violation,
        })
    }

    /// Projected BFGS on the augmented-Lagrangian merit function.
    fn minimize(
        &self,
        x0: &Vector,
        start: &[f64],
        lo: &[f64],
        hi: &[f64],
        penalty: &Penalty,
    ) -> Result<InnerResult> {
        let settings = &self.config.solver;
        let tail_tol = settings.constraint_tolerance;
        let dim = start.len();
        let mut point = start.to_vec();
        let mut eval = self.evaluate(x0, &point, Some(penalty), true)?;
        let mut inverse_hessian = Matrix::identity(dim, dim);
        let mut scaled = false;
        let mut kkt = projected_gradient_norm(&point, &eval.gradient, lo, hi);

        for iteration in 0..settings.max_iterations {
            if kkt <= settings.kkt_tolerance * (1.0 + eval.merit.abs()) {
                return Ok(InnerResult {
                    eval,
                    iterations: iteration,
                    kkt,
                    converged: true,
                });
            }
            let g = &eval.gradient;
            let free: Vec<bool> = (0..dim)
                .map(|i| {
                    let at_lo = point[i] <= lo[i] && g[i] > 0.0;
                    let at_hi = point[i] >= hi[i] && g[i] < 0.0;
                    !(at_lo || at_hi)
                })
                .collect();

            let mut accepted = None;
            for attempt in 0..2 {
                if attempt == 1 {
                    inverse_hessian = Matrix::identity(dim, dim);
                    scaled = false;
                }
                let direction = descent_direction(&inverse_hessian, g, &free);
                accepted = self.line_search(x0, &point, &eval, &direction, lo, hi, penalty, tail_tol)?;
                if accepted.is_some() {
                    break;
                }
            }
            let Some((trial_point, trial)) = accepted else {
                return Ok(InnerResult {
                    eval,
                    iterations: iteration,
                    kkt,
                    converged: false,
                });
            };

            let s = Vector::from_iterator(dim, trial_point.iter().zip(&point).map(|(a, b)| a - b));
            let y = Vector::from_iterator(
                dim,
                trial.gradient.iter().zip(&eval.gradient).map(|(a, b)| a - b),
            );
            let sy = s.dot(&y);
            if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
                if !scaled {
                    inverse_hessian = Matrix::identity(dim, dim) * (sy / y.dot(&y));
                    scaled = true;
                }
                bfgs_update(&mut inverse_hessian, &s, &y, sy);
            }
            point = trial_point;
            eval = trial;
            kkt = projected_gradient_norm(&point, &eval.gradient, lo, hi);
        }
        let converged = kkt <= settings.kkt_tolerance * (1.0 + eval.merit.abs());
        Ok(InnerResult {
            eval,
            iterations: settings.max_iterations,
            kkt,
            converged,
        })
    }

    /// Backtracking along the projection arc. A trial that makes a feasible
    /// tail infeasible counts as an infinite value and is rejected.
    #[allow(clippy::too_many_arguments)]
    fn line_search(
        &self,
        x0: &Vector,
        point: &[f64],
        eval: &Evaluation,
        direction: &[f64],
        lo: &[f64],
        hi: &[f64],
        penalty: &Penalty,
        tail_tol: f64,
    ) -> Result<Option<(Vec<f64>, Evaluation)>> {
        let keep_tail = eval.tail_violation <= tail_tol;
        let mut step = 1.0;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = point
                .iter()
                .zip(direction)
                .map(|(p, d)| p + step * d)
                .collect();
            project(&mut trial, lo, hi);
            let predicted: f64 = trial
                .iter()
                .zip(point)
                .zip(&eval.gradient)
                .map(|((t, p), g)| g * (t - p))
                .sum();
            if predicted >= 0.0 {
                step *= 0.5;
                continue;
            }
            let candidate = match self.evaluate(x0, &trial, Some(penalty), true) {
                Ok(c) => c,
                Err(crate::Error::Rollout { .. }) | Err(crate::Error::Domain(_)) => {
                    step *= 0.5;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let tail_ok = !keep_tail || candidate.tail_violation <= tail_tol;
            if tail_ok && candidate.merit <= eval.merit + ARMIJO * predicted {
                return Ok(Some((trial, candidate)));
            }
            step *= 0.5;
        }
        Ok(None)
    }
}

fn project(v: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((x, l), h) in v.iter_mut().zip(lo).zip(hi) {
        *x = x.clamp(*l, *h);
    }
}

fn projected_gradient_norm(point: &[f64], gradient: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    point
        .iter()
        .zip(gradient)
        .zip(lo.iter().zip(hi))
        .map(|((p, g), (l, h))| ((p - g).clamp(*l, *h) - p).abs())
        .fold(0.0, f64::max)
}

fn descent_direction(inverse_hessian: &Matrix, gradient: &[f64], free: &[bool]) -> Vec<f64> {
    let dim = gradient.len();
    (0..dim)
        .map(|i| {
            if !free[i] {
                return 0.0;
            }
            -(0..dim)
                .filter(|&j| free[j])
                .map(|j| inverse_hessian[(i, j)] * gradient[j])
                .sum::<f64>()
        })
        .collect()
}

fn bfgs_update(h: &mut Matrix, s: &Vector, y: &Vector, sy: f64) {
    let rho = 1.0 / sy;
    let hy = &*h * y;
    let yhy = y.dot(&hy);
    // H⁺ = H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
    *h -= (&hy * s.transpose() + s * hy.transpose()) * rho;
    *h += (s * s.transpose()) * (rho * rho * yhy + rho);
}
