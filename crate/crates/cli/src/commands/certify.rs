use fintail::certify::{
    c_m_analytic, c_m_lp, m_lower_threshold, no_terminal_horizon_bound, HorizonCertificate, LevelOutcome,
};
use fintail::config::RunConfig;
use serde::Serialize;

use super::certificate_paths;
use crate::output::{self, num, opt, Table};
use crate::Failure;

#[derive(Serialize)]
struct EstimateSummary {
    rho_empirical: f64,
    c_empirical: f64,
    eps_empirical: f64,
    k_max: usize,
    gamma_inf_analytic: f64,
    gamma_max_empirical: f64,
    gamma_n_plus_m_empirical: Option<f64>,
    c_m_analytic: f64,
    c_m_lp_analytic: f64,
    c_m_empirical: Option<f64>,
    c_m_support_empirical: usize,
    m_lower_analytic: f64,
    no_terminal_bound_analytic: Option<f64>,
    no_terminal_bound_empirical: Option<f64>,
}

#[derive(Serialize)]
struct CertifyReport<'a> {
    prediction_horizon: usize,
    tail_horizon: usize,
    v_bar: f64,
    seed: u64,
    certified_analytic: bool,
    certified_empirical: bool,
    estimate: EstimateSummary,
    analytic: &'a HorizonCertificate,
    empirical: &'a HorizonCertificate,
    levels: &'a [LevelOutcome],
}

/// The bound is only defined for `γ > 1`.
pub(super) fn no_terminal_bound(gamma: Option<f64>) -> fintail::Result<Option<f64>> {
    gamma.filter(|g| *g > 1.0).map(no_terminal_horizon_bound).transpose()
}

pub fn certify(config: &RunConfig) -> Result<(), Failure> {
    let setup = config.setup()?;
    let (n, m) = (config.mpc.prediction_horizon, config.mpc.tail_horizon);
    let paths = certificate_paths(config, &setup, n, m, n + m)?;
    let est = &paths.estimate;
    let cert = &est.certificate;
    let gamma_nm = est.gamma_at(n + m);

    let summary = EstimateSummary {
        rho_empirical: cert.rho,
        c_empirical: cert.c,
        eps_empirical: cert.eps,
        k_max: est.gamma_table.len() - 1,
        gamma_inf_analytic: cert.gamma_inf,
        gamma_max_empirical: est.gamma_max(),
        gamma_n_plus_m_empirical: gamma_nm,
        c_m_analytic: c_m_analytic(cert.rho, cert.c, m)?,
        c_m_lp_analytic: c_m_lp(cert.rho, cert.c, m)?,
        c_m_empirical: est.c_m,
        c_m_support_empirical: est.c_m_support,
        m_lower_analytic: m_lower_threshold(cert.rho, cert.c)?,
        no_terminal_bound_analytic: no_terminal_bound(Some(cert.gamma_inf))?,
        no_terminal_bound_empirical: no_terminal_bound(gamma_nm)?,
    };
    let report = CertifyReport {
        prediction_horizon: n,
        tail_horizon: m,
        v_bar: paths.v_bar,
        seed: config.certify.seed,
        certified_analytic: paths.analytic.certified,
        certified_empirical: paths.empirical.certified,
        estimate: summary,
        analytic: &paths.analytic,
        empirical: &paths.empirical,
        levels: &est.levels,
    };

    let dir = output::prepare(&config.output.dir)?;
    output::write_toml(&dir.join("report.toml"), &report)?;
    let mut table = Table::create(&dir.join("gamma_table.csv"), &["k", "gamma_k_analytic", "gamma_k_empirical"])?;
    for (k, (a, e)) in cert.gamma_table.iter().zip(&est.gamma_table).enumerate() {
        table.row(&[k.to_string(), num(*a), num(*e)])?;
    }
    table.finish()?;
    let mut table = Table::create(
        &dir.join("levels.csv"),
        &["eps", "accepted", "rho_empirical", "c_empirical", "diagnostic"],
    )?;
    for level in &est.levels {
        table.row(&[
            num(level.eps),
            level.accepted.to_string(),
            opt(level.rho),
            opt(level.c),
            level.diagnostic.clone().unwrap_or_default(),
        ])?;
    }
    table.finish()?;

    println!(
        "rho={} C={} eps={} gamma_inf={} gamma_{}={} c_M={}",
        cert.rho,
        cert.c,
        cert.eps,
        cert.gamma_inf,
        n + m,
        opt(gamma_nm),
        opt(est.c_m)
    );
    for (label, c) in [("analytic", &paths.analytic), ("empirical", &paths.empirical)] {
        println!(
            "{label:>9}: N={n} M={m} N_M={} eps_NM={} alpha_NM={} certified={}",
            c.n_m, c.eps_nm, c.alpha_nm, c.certified
        );
    }
    println!("report written to {}", dir.display());
    if paths.analytic.certified || paths.empirical.certified {
        Ok(())
    } else {
        Err(Failure::Violated(format!("N={n}, M={m} is not certified on either path")))
    }
}
