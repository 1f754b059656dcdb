use fintail::certify::{
    c_m_analytic, horizon_certificate, m_lower_threshold, ControllabilityCertificate, HorizonCertificate,
    HorizonOverrides,
};
use fintail::config::RunConfig;
use serde::Serialize;

use super::certificate_paths;
use super::certify::no_terminal_bound;
use crate::output::{self, num, opt, Table};
use crate::Failure;

#[derive(Serialize)]
struct CompareSummary {
    prediction_horizon: usize,
    tail_horizon: usize,
    constants_source: &'static str,
    rho: f64,
    c: f64,
    eps: f64,
    v_bar: f64,
    gamma_inf_analytic: f64,
    gamma_empirical: Option<f64>,
    m_lower_analytic: f64,
    no_terminal_bound_analytic: Option<f64>,
    no_terminal_bound_empirical: Option<f64>,
    n_m_analytic: f64,
    n_m_empirical: f64,
}

struct Constants {
    source: &'static str,
    certificate: ControllabilityCertificate,
    v_bar: f64,
    /// Measured overrides per tail horizon.
    overrides: Box<dyn Fn(usize) -> HorizonOverrides>,
}

pub fn compare(config: &RunConfig) -> Result<(), Failure> {
    let (n, m) = (config.mpc.prediction_horizon, config.mpc.tail_horizon);
    let table_config = config.compare.clone().unwrap_or(fintail::config::CompareConfig {
        tail_horizons: vec![m],
        rho: None,
        c: None,
        eps: None,
        gamma: None,
        c_m: None,
    });
    let mut horizons = table_config.tail_horizons.clone();
    horizons.push(m);
    horizons.sort_unstable();
    horizons.dedup();
    let m_max = *horizons.last().unwrap_or(&m);

    let constants = match table_config.fixed_constants() {
        Some((rho, c, eps)) => {
            let (gamma, c_m) = (table_config.gamma, table_config.c_m);
            Constants {
                source: "given",
                certificate: ControllabilityCertificate::new(rho, c, eps, n + m_max)?,
                v_bar: config.certify.v_bar_for(eps),
                overrides: Box::new(move |mm| HorizonOverrides {
                    gamma,
                    c_m: c_m.filter(|_| mm == m),
                }),
            }
        }
        None => {
            let setup = config.setup()?;
            let paths = certificate_paths(config, &setup, n, m, n + m_max)?;
            let est = paths.estimate;
            Constants {
                source: "sampled",
                certificate: est.certificate.clone(),
                v_bar: paths.v_bar,
                overrides: Box::new(move |mm| est.overrides(n, mm)),
            }
        }
    };
    let cert = &constants.certificate;

    let dir = output::prepare(&config.output.dir)?;
    let mut table = Table::create(
        &dir.join("compare.csv"),
        &[
            "M",
            "c_M_analytic",
            "N_M_analytic",
            "N_M_min_analytic",
            "eps_NM_analytic",
            "certified_analytic",
            "gamma_empirical",
            "c_M_empirical",
            "N_M_empirical",
            "N_M_min_empirical",
            "eps_NM_empirical",
            "certified_empirical",
        ],
    )?;
    let mut at_configured: Option<(HorizonCertificate, HorizonCertificate)> = None;
    for &mm in &horizons {
        let analytic = horizon_certificate(cert, mm, n, constants.v_bar, HorizonOverrides::default())?;
        let overrides = (constants.overrides)(mm);
        let empirical = horizon_certificate(cert, mm, n, constants.v_bar, overrides)?;
        table.row(&[
            mm.to_string(),
            num(c_m_analytic(cert.rho, cert.c, mm)?),
            num(analytic.n_m),
            analytic.n_m_min.to_string(),
            num(analytic.eps_nm),
            analytic.certified.to_string(),
            opt(overrides.gamma),
            opt(overrides.c_m),
            num(empirical.n_m),
            empirical.n_m_min.to_string(),
            num(empirical.eps_nm),
            empirical.certified.to_string(),
        ])?;
        if mm == m {
            at_configured = Some((analytic, empirical));
        }
    }
    table.finish()?;

    let (analytic, empirical) = at_configured.expect("configured M is part of the sweep");
    let gamma_empirical = (constants.overrides)(m).gamma;
    let summary = CompareSummary {
        prediction_horizon: n,
        tail_horizon: m,
        constants_source: constants.source,
        rho: cert.rho,
        c: cert.c,
        eps: cert.eps,
        v_bar: constants.v_bar,
        gamma_inf_analytic: cert.gamma_inf,
        gamma_empirical,
        m_lower_analytic: m_lower_threshold(cert.rho, cert.c)?,
        no_terminal_bound_analytic: no_terminal_bound(Some(cert.gamma_inf))?,
        no_terminal_bound_empirical: no_terminal_bound(gamma_empirical)?,
        n_m_analytic: analytic.n_m,
        n_m_empirical: empirical.n_m,
    };
    output::write_toml(&dir.join("compare.toml"), &summary)?;

    println!(
        "no terminal ingredients: N > {} (gamma_inf={}){}",
        opt(summary.no_terminal_bound_analytic),
        cert.gamma_inf,
        summary
            .no_terminal_bound_empirical
            .map_or(String::new(), |b| format!(", N > {b} (measured gamma)"))
    );
    println!("finite tail at M={m}: N_M={} (analytic), {} (empirical); M_lower={}", analytic.n_m, empirical.n_m, summary.m_lower_analytic);
    println!("table written to {}", dir.join("compare.csv").display());
    Ok(())
}
