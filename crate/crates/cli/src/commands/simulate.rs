use fintail::config::RunConfig;
use fintail::simulate::{run_closed_loop, verify_guarantees, CheckOutcome, ClosedLoopTrace};
use serde::Serialize;

use super::certificate_paths;
use crate::output::{self, indexed, num, Table};
use crate::Failure;

#[derive(Serialize)]
struct SimulateSummary {
    prediction_horizon: usize,
    tail_horizon: usize,
    steps: usize,
    completed: bool,
    failure_step: Option<usize>,
    all_optimal: bool,
    verified: bool,
    certified: bool,
    certificate_path: &'static str,
    eps_nm: f64,
    eps_nm_source: &'static str,
    gamma_vbar: f64,
    v_bar: f64,
    x0: Vec<f64>,
    value_initial: f64,
    value_final: Option<f64>,
    closed_loop_cost: f64,
    stage_cost_min_initial: f64,
    stage_cost_min_final: f64,
    max_solver_iterations: usize,
    max_kkt_residual: f64,
    checks: Vec<CheckOutcome>,
}

pub fn simulate(config: &RunConfig) -> Result<(), Failure> {
    let setup = config.setup()?;
    let sim = config
        .simulate
        .as_ref()
        .ok_or_else(|| Failure::Usage("config has no [simulate] block".into()))?;
    let x0 = config.initial_state()?;
    let mpc = setup.mpc(&config.mpc, &config.solver)?;
    let (n, m) = (config.mpc.prediction_horizon, config.mpc.tail_horizon);
    let paths = certificate_paths(config, &setup, n, m, n + m)?;
    let (path_label, chosen) = paths.preferred();
    let mut certificate = chosen.clone();
    let eps_source = match sim.eps_nm {
        Some(eps) => {
            certificate.eps_nm = eps;
            "override"
        }
        None => path_label,
    };

    let trace = run_closed_loop(&mpc, &x0, sim.steps, certificate.eps_nm)?;
    let report = verify_guarantees(&trace, &certificate, &mpc);
    let verified = report.all_passed();

    let dir = output::prepare(&config.output.dir)?;
    write_trace(&dir.join("trace.csv"), &trace)?;
    write_plot(&dir.join("plot.csv"), &trace, config)?;
    let summary = SimulateSummary {
        prediction_horizon: n,
        tail_horizon: m,
        steps: sim.steps,
        completed: trace.is_complete(),
        failure_step: trace.failure,
        all_optimal: report.all_optimal,
        verified,
        certified: certificate.certified,
        certificate_path: path_label,
        eps_nm: certificate.eps_nm,
        eps_nm_source: eps_source,
        gamma_vbar: certificate.gamma_vbar,
        v_bar: paths.v_bar,
        x0: x0.iter().copied().collect(),
        value_initial: trace.values.first().copied().unwrap_or(f64::INFINITY),
        value_final: trace.values.last().copied(),
        closed_loop_cost: trace.total_cost(),
        stage_cost_min_initial: trace.stage_costs_min[0],
        stage_cost_min_final: *trace.stage_costs_min.last().unwrap_or(&0.0),
        max_solver_iterations: trace.iterations.iter().copied().max().unwrap_or(0),
        max_kkt_residual: trace.kkt_residuals.iter().copied().fold(0.0, f64::max),
        checks: report.checks().into_iter().cloned().collect(),
    };
    output::write_toml(&dir.join("summary.toml"), &summary)?;

    for check in report.checks() {
        println!(
            "{:<12} {} worst margin {} at step {}",
            check.name,
            if check.passed { "pass" } else { "FAIL" },
            check.worst_margin,
            check.worst_step.map_or("-".into(), |t| t.to_string())
        );
    }
    println!(
        "all solves optimal: {}; eps_NM = {} ({eps_source}); trace written to {}",
        report.all_optimal,
        certificate.eps_nm,
        dir.display()
    );
    if let Some(t) = trace.failure {
        return Err(Failure::Solver(format!("MPC problem infeasible at step {t}")));
    }
    if verified {
        Ok(())
    } else {
        Err(Failure::Violated("closed-loop guarantee checks failed".into()))
    }
}

fn write_trace(path: &std::path::Path, trace: &ClosedLoopTrace) -> Result<(), Failure> {
    let n = trace.states[0].len();
    let m = trace.inputs.first().map_or(0, |u| u.len());
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(indexed("x", n))
        .chain(indexed("u", m))
        .chain(
            [
                "stage_cost",
                "value",
                "decrease_margin",
                "solver_status",
                "solver_iters",
                "kkt_residual",
                "penalty",
            ]
            .map(String::from),
        )
        .collect();
    let mut table = Table::create(path, &header)?;
    for (t, x) in trace.states.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(|v| num(*v)));
        match trace.inputs.get(t) {
            Some(u) => row.extend(u.iter().map(|v| num(*v))),
            None => row.extend(std::iter::repeat_n(String::new(), m)),
        }
        row.push(trace.stage_costs.get(t).map_or(String::new(), |v| num(*v)));
        row.push(trace.values.get(t).map_or(String::new(), |v| num(*v)));
        row.push(trace.decrease_margins.get(t).map_or(String::new(), |v| num(*v)));
        row.push(trace.statuses.get(t).map_or("", |s| s.as_str()).to_string());
        row.push(trace.iterations.get(t).map_or(String::new(), |v| v.to_string()));
        row.push(trace.kkt_residuals.get(t).map_or(String::new(), |v| num(*v)));
        row.push(trace.penalties.get(t).map_or(String::new(), |v| num(*v)));
        table.row(&row)?;
    }
    table.finish()
}

/// Levels and inflows against time with their bounds.
fn write_plot(path: &std::path::Path, trace: &ClosedLoopTrace, config: &RunConfig) -> Result<(), Failure> {
    let sp = config.setpoint();
    let (n, m) = (sp.x_s.len(), sp.u_s.len());
    let mut header = vec!["time".to_string()];
    for i in 1..=n {
        header.extend([format!("x_{i}"), format!("x_{i}_setpoint"), format!("x_{i}_lo"), format!("x_{i}_hi")]);
    }
    for j in 1..=m {
        header.extend([format!("u_{j}"), format!("u_{j}_setpoint"), format!("u_{j}_lo"), format!("u_{j}_hi")]);
    }
    let ts = config.sample_time();
    let mut table = Table::create(path, &header)?;
    for (t, x) in trace.states.iter().enumerate() {
        let mut row = vec![num(t as f64 * ts)];
        for i in 0..n {
            row.extend([num(x[i]), num(sp.x_s[i]), num(sp.x_lo[i]), num(sp.x_hi[i])]);
        }
        for j in 0..m {
            let u = trace.inputs.get(t).map_or(String::new(), |u| num(u[j]));
            row.extend([u, num(sp.u_s[j]), num(sp.u_lo[j]), num(sp.u_hi[j])]);
        }
        table.row(&row)?;
    }
    table.finish()
}
