//! Nominal closed-loop simulation and runtime checks of the certified bounds.

use serde::Serialize;

use crate::certify::HorizonCertificate;
use crate::mpc::{FiniteTailMpc, SolveStatus};
use crate::{Error, Result, Vector};

/// Convergence test for a finished run: `ℓ_min(x(T)) < 1e-6 · ℓ_min(x(0))`.
pub const CONVERGENCE_RATIO: f64 = 1e-6;

/// Descent-check slack in units of the solver KKT tolerance.
pub const SLACK_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopTrace {
    /// Step indices `0..T`.
    pub times: Vec<usize>,
    /// `T + 1` visited states.
    pub states: Vec<Vector>,
    /// `T` applied inputs `u(t) = u*(0|t)`.
    pub inputs: Vec<Vector>,
    pub stage_costs: Vec<f64>,
    /// `ℓ_min(x(t))` for every visited state.
    pub stage_costs_min: Vec<f64>,
    /// `V_{N,M}(x(t))` for every visited state that was solved.
    pub values: Vec<f64>,
    /// `V(t+1) − V(t) + ε·ℓ(t)` with the `ε` passed to [`run_closed_loop`].
    pub decrease_margins: Vec<f64>,
    pub descent_eps: f64,
    pub statuses: Vec<SolveStatus>,
    pub iterations: Vec<usize>,
    pub kkt_residuals: Vec<f64>,
    /// Final augmented-Lagrangian penalty weight of each solve.
    pub penalties: Vec<f64>,
    /// Set when a solve was infeasible; the trace stops at that step.
    pub failure: Option<usize>,
}

impl ClosedLoopTrace {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn all_optimal(&self) -> bool {
        self.statuses.iter().all(|s| *s == SolveStatus::Optimal)
    }

    pub fn total_cost(&self) -> f64 {
        self.stage_costs.iter().sum()
    }
}

/// Runs `steps` closed-loop steps from `x0`, applying the first optimal input
/// and warm-starting each solve with the shifted previous solution.
///
/// Every visited state is solved, including the final one, so `values` has
/// one more entry than `inputs` on a complete run.
pub fn run_closed_loop(
    mpc: &FiniteTailMpc,
    x0: &Vector,
    steps: usize,
    descent_eps: f64,
) -> Result<ClosedLoopTrace> {
    if steps == 0 {
        return Err(Error::InvalidParameter("simulation needs at least one step".into()));
    }
    let sys = mpc.system();
    let cost = mpc.cost();
    let warm_start = mpc.config().solver.warm_start;
    let mut trace = ClosedLoopTrace {
        times: Vec::with_capacity(steps),
        states: vec![x0.clone()],
        inputs: Vec::with_capacity(steps),
        stage_costs: Vec::with_capacity(steps),
        stage_costs_min: vec![cost.stage_cost_min(sys.z_box(), x0)?],
        values: Vec::with_capacity(steps + 1),
        decrease_margins: Vec::with_capacity(steps),
        descent_eps,
        statuses: Vec::with_capacity(steps + 1),
        iterations: Vec::with_capacity(steps + 1),
        kkt_residuals: Vec::with_capacity(steps + 1),
        penalties: Vec::with_capacity(steps + 1),
        failure: None,
    };

    let mut warm: Option<Vec<Vector>> = None;
    for t in 0..=steps {
        let x = trace.states[t].clone();
        let solution = mpc.solve(&x, warm.as_deref())?;
        trace.statuses.push(solution.status);
        trace.iterations.push(solution.iterations);
        trace.kkt_residuals.push(solution.kkt_residual);
        trace.penalties.push(solution.penalty);
        if solution.status == SolveStatus::Infeasible {
            trace.failure = Some(t);
            break;
        }
        trace.values.push(solution.value);
        if t > 0 {
            let margin = trace.values[t] - trace.values[t - 1] + descent_eps * trace.stage_costs[t - 1];
            trace.decrease_margins.push(margin);
        }
        if t == steps {
            break;
        }
        let u = solution.first_input().clone();
        let stage = cost.stage_cost(&x, &u)?;
        let next = sys.step(&x, &u)?;
        warm = warm_start.then(|| mpc.shifted_warm_start(&solution));
        trace.times.push(t);
        trace.stage_costs.push(stage);
        trace.stage_costs_min.push(cost.stage_cost_min(sys.z_box(), &next)?);
        trace.inputs.push(u);
        trace.states.push(next);
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Largest value of the checked quantity minus its bound (≤ 0 passes).
    pub worst_margin: f64,
    pub worst_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuaranteeReport {
    /// Whether the certificate covers this `(N, M)`; checks (a) and (b) are
    /// only implied by the theory when it does.
    pub certified: bool,
    pub eps_nm: f64,
    pub gamma_vbar: f64,
    pub descent: CheckOutcome,
    pub performance: CheckOutcome,
    pub sandwich: CheckOutcome,
    pub monotone: CheckOutcome,
    pub feasibility: CheckOutcome,
    pub convergence: CheckOutcome,
    pub all_optimal: bool,
}

impl GuaranteeReport {
    /// The four certificate checks.
    pub fn guarantees_hold(&self) -> bool {
        self.descent.passed && self.performance.passed && self.sandwich.passed && self.monotone.passed
    }

    pub fn all_passed(&self) -> bool {
        self.guarantees_hold() && self.feasibility.passed && self.convergence.passed && self.all_optimal
    }

    pub fn checks(&self) -> [&CheckOutcome; 6] {
        [
            &self.descent,
            &self.performance,
            &self.sandwich,
            &self.monotone,
            &self.feasibility,
            &self.convergence,
        ]
    }
}

fn worst(name: &'static str, margins: impl Iterator<Item = f64>) -> CheckOutcome {
    let mut outcome = CheckOutcome {
        name,
        passed: true,
        worst_margin: f64::NEG_INFINITY,
        worst_step: None,
    };
    for (t, m) in margins.enumerate() {
        if m > outcome.worst_margin || m.is_nan() {
            outcome.worst_margin = m;
            outcome.worst_step = Some(t);
        }
    }
    outcome.passed = !(outcome.worst_margin > 0.0 || outcome.worst_margin.is_nan());
    if outcome.worst_step.is_none() {
        outcome.worst_margin = 0.0;
    }
    outcome
}

/// Checks a finished trace against the certificate:
/// (a) per-step descent `V(t+1) − V(t) ≤ −ε_{N,M} ℓ(t)`;
/// (b) truncated performance `Σ ℓ(t) ≤ V(x₀)/ε_{N,M}`;
/// (c) the sandwich `ℓ_min(x) ≤ V(x) ≤ γ_V̄ ℓ_min(x)`;
/// (d) `V` non-increasing.
/// Feasibility of the applied pairs and convergence of `ℓ_min` are reported
/// alongside. Margins allow `10 × kkt_tolerance × (1 + |V|)` of slack.
pub fn verify_guarantees(
    trace: &ClosedLoopTrace,
    certificate: &HorizonCertificate,
    mpc: &FiniteTailMpc,
) -> GuaranteeReport {
    let eps = certificate.eps_nm;
    let settings = &mpc.config().solver;
    let slack = |v: f64| SLACK_FACTOR * settings.kkt_tolerance * (1.0 + v.abs());
    let values = &trace.values;
    let steps = values.len().saturating_sub(1);

    let descent = worst(
        "descent",
        (0..steps).map(|t| values[t + 1] - values[t] + eps * trace.stage_costs[t] - slack(values[t])),
    );
    let monotone = worst(
        "monotone",
        (0..steps).map(|t| values[t + 1] - values[t] - slack(values[t])),
    );
    let performance = {
        // Without a positive margin the bound is void and the check fails.
        let bound = match values.first() {
            Some(v0) if eps > 0.0 => Some(v0 / eps),
            _ => None,
        };
        let mut running = 0.0;
        worst(
            "performance",
            trace.stage_costs.iter().map(|l| {
                running += l;
                bound.map_or(f64::INFINITY, |b| running - b - slack(b))
            }),
        )
    };
    let sandwich = worst(
        "sandwich",
        values.iter().zip(&trace.stage_costs_min).map(|(v, lmin)| {
            let lower = lmin - v;
            let upper = v - certificate.gamma_vbar * lmin;
            lower.max(upper) - slack(*v)
        }),
    );
    let z = mpc.system().z_box();
    let tol = settings.constraint_tolerance;
    let feasibility = worst(
        "feasibility",
        trace
            .states
            .iter()
            .zip(&trace.inputs)
            .map(|(x, u)| if z.contains_within(x, u, tol) { 0.0 } else { z.state_violation(x).max(tol) }),
    );
    let convergence = {
        let first = trace.stage_costs_min.first().copied().unwrap_or(0.0);
        let last = trace.stage_costs_min.last().copied().unwrap_or(0.0);
        let margin = if first == 0.0 {
            last
        } else {
            last - CONVERGENCE_RATIO * first
        };
        CheckOutcome {
            name: "convergence",
            passed: trace.is_complete() && (margin < 0.0 || (first == 0.0 && last == 0.0)),
            worst_margin: margin,
            worst_step: Some(trace.stage_costs_min.len().saturating_sub(1)),
        }
    };
    GuaranteeReport {
        certified: certificate.certified,
        eps_nm: eps,
        gamma_vbar: certificate.gamma_vbar,
        descent,
        performance,
        sandwich,
        monotone,
        feasibility,
        convergence,
        all_optimal: trace.all_optimal() && trace.is_complete(),
    }
}
