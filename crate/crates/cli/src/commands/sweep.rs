use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fintail::certify::HorizonCertificate;
use fintail::config::{HorizonConfig, RunConfig, Setup};
use fintail::simulate::{run_closed_loop, verify_guarantees};
use fintail::Vector;
use rayon::prelude::*;

use super::certificate_paths;
use crate::output::{self, indexed, num, Table};
use crate::Failure;

const OUTCOME_COLUMNS: [&str; 17] = [
    "completed",
    "failure_step",
    "all_optimal",
    "feasible",
    "monotone",
    "descent",
    "performance",
    "sandwich",
    "converged",
    "certified",
    "eps_nm",
    "value_initial",
    "closed_loop_cost",
    "stage_cost_min_ratio",
    "max_solver_iters",
    "steps",
    "error",
];

struct Cell {
    index: usize,
    horizons: HorizonConfig,
    offset: Vec<f64>,
}

pub fn sweep(config: &RunConfig) -> Result<(), Failure> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Failure::Usage("config has no [sweep] block".into()))?;
    if sweep.pairs.is_empty() || sweep.x0_offsets.is_empty() {
        return Err(Failure::Usage("sweep needs at least one (N, M) pair and one initial state".into()));
    }
    let setup = config.setup()?;
    let x_s = Vector::from_column_slice(&config.setpoint().x_s);
    if let Some(bad) = sweep.x0_offsets.iter().find(|o| o.len() != x_s.len()) {
        return Err(Failure::Usage(format!("initial-state offset {bad:?} has the wrong length")));
    }

    let mut certificates: BTreeMap<(usize, usize), Result<HorizonCertificate, String>> = BTreeMap::new();
    for &[n, m] in &sweep.pairs {
        certificates.entry((n, m)).or_insert_with(|| {
            certificate_paths(config, &setup, n, m, n + m)
                .map(|p| p.preferred().1.clone())
                .map_err(|e| e.to_string())
        });
    }

    let cells: Vec<Cell> = sweep
        .pairs
        .iter()
        .flat_map(|&[n, m]| sweep.x0_offsets.iter().map(move |o| (n, m, o.clone())))
        .enumerate()
        .map(|(index, (n, m, offset))| Cell {
            index,
            horizons: HorizonConfig {
                prediction_horizon: n,
                tail_horizon: m,
            },
            offset,
        })
        .collect();

    let dir = output::prepare(&config.output.dir)?;
    let cell_dir = output::prepare(&dir.join("cells"))?;
    let header: Vec<String> = ["cell", "N", "M"]
        .map(String::from)
        .into_iter()
        .chain(indexed("x0_offset", x_s.len()))
        .chain(OUTCOME_COLUMNS.map(String::from))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sweep.workers)
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start {} workers: {e}", sweep.workers)))?;
    let files: Vec<PathBuf> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let certificate = &certificates[&(cell.horizons.prediction_horizon, cell.horizons.tail_horizon)];
                let outcome = run_cell(config, &setup, &x_s, cell, certificate, sweep.steps);
                let mut row = vec![
                    cell.index.to_string(),
                    cell.horizons.prediction_horizon.to_string(),
                    cell.horizons.tail_horizon.to_string(),
                ];
                row.extend(cell.offset.iter().map(|v| num(*v)));
                row.extend(outcome);
                let path = cell_dir.join(format!("cell_{:04}.csv", cell.index));
                let mut table = Table::create(&path, &header)?;
                table.row(&row)?;
                table.finish()?;
                Ok(path)
            })
            .collect::<Result<_, Failure>>()
    })?;

    let merged = dir.join("sweep.csv");
    merge(&files, &merged)?;
    println!("{} cells written to {}", cells.len(), merged.display());
    Ok(())
}

/// Outcome columns of one cell; failures are recorded, not raised.
fn run_cell(
    config: &RunConfig,
    setup: &Setup,
    x_s: &Vector,
    cell: &Cell,
    certificate: &Result<HorizonCertificate, String>,
    steps: usize,
) -> Vec<String> {
    let failed = |message: String| {
        let mut row = vec![String::new(); OUTCOME_COLUMNS.len() - 1];
        row.push(message);
        row
    };
    let certificate = match certificate {
        Ok(c) => c,
        Err(e) => return failed(format!("certificate: {e}")),
    };
    let x0 = x_s + Vector::from_column_slice(&cell.offset);
    let trace = match setup
        .mpc(&cell.horizons, &config.solver)
        .and_then(|mpc| run_closed_loop(&mpc, &x0, steps, certificate.eps_nm).map(|t| (mpc, t)))
    {
        Ok(t) => t,
        Err(e) => return failed(e.to_string()),
    };
    let (mpc, trace) = trace;
    let report = verify_guarantees(&trace, certificate, &mpc);
    let first = trace.stage_costs_min[0];
    let last = *trace.stage_costs_min.last().unwrap_or(&0.0);
    vec![
        trace.is_complete().to_string(),
        trace.failure.map_or(String::new(), |t| t.to_string()),
        report.all_optimal.to_string(),
        report.feasibility.passed.to_string(),
        report.monotone.passed.to_string(),
        report.descent.passed.to_string(),
        report.performance.passed.to_string(),
        report.sandwich.passed.to_string(),
        report.convergence.passed.to_string(),
        certificate.certified.to_string(),
        num(certificate.eps_nm),
        trace.values.first().map_or(String::new(), |v| num(*v)),
        num(trace.total_cost()),
        if first > 0.0 { num(last / first) } else { String::new() },
        trace.iterations.iter().max().map_or(String::new(), |v| v.to_string()),
        trace.inputs.len().to_string(),
        String::new(),
    ]
}

/// Concatenates the per-cell files in cell order under a single header.
fn merge(files: &[PathBuf], target: &Path) -> Result<(), Failure> {
    let read_failure = |p: &Path, e: csv::Error| Failure::Usage(format!("cannot read {}: {e}", p.display()));
    let mut table: Option<Table> = None;
    for file in files {
        let mut reader = csv::Reader::from_path(file).map_err(|e| read_failure(file, e))?;
        if table.is_none() {
            let header: Vec<String> = reader
                .headers()
                .map_err(|e| read_failure(file, e))?
                .iter()
                .map(String::from)
                .collect();
            table = Some(Table::create(target, &header)?);
        }
        let out = table.as_mut().expect("created above");
        for record in reader.records() {
            let record = record.map_err(|e| read_failure(file, e))?;
            out.row(&record.iter().collect::<Vec<_>>())?;
        }
    }
    match table {
        Some(t) => t.finish(),
        None => Ok(()),
    }
}
