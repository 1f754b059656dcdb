mod certify;
mod compare;
mod simulate;
mod sweep;

pub use certify::certify;
pub use compare::compare;
pub use simulate::simulate;
pub use sweep::sweep;

use fintail::certify::{
    estimate_controllability, horizon_certificate, EmpiricalConstants, HorizonCertificate,
    HorizonOverrides,
};
use fintail::config::{RunConfig, Setup};

/// The horizon certificate evaluated with formula constants and with the
/// measured `γ_{N+M}` and `c_M`.
pub struct CertificatePaths {
    pub estimate: EmpiricalConstants,
    pub v_bar: f64,
    pub analytic: HorizonCertificate,
    pub empirical: HorizonCertificate,
}

impl CertificatePaths {
    /// The certified path with the larger descent margin, else the empirical one.
    pub fn preferred(&self) -> (&'static str, &HorizonCertificate) {
        let candidates = [("empirical", &self.empirical), ("analytic", &self.analytic)];
        candidates
            .into_iter()
            .filter(|(_, c)| c.certified)
            .max_by(|a, b| a.1.eps_nm.total_cmp(&b.1.eps_nm))
            .unwrap_or(("empirical", &self.empirical))
    }
}

pub fn certificate_paths(
    config: &RunConfig,
    setup: &Setup,
    prediction_horizon: usize,
    tail_horizon: usize,
    k_max: usize,
) -> fintail::Result<CertificatePaths> {
    let mut plan = config.certify.sampling_plan(prediction_horizon, tail_horizon);
    plan.k_max = plan.k_max.max(k_max);
    let estimate = estimate_controllability(&setup.system, &setup.cost, &setup.controller, &plan)?;
    let v_bar = config.certify.v_bar_for(estimate.certificate.eps);
    let cert = &estimate.certificate;
    let analytic =
        horizon_certificate(cert, tail_horizon, prediction_horizon, v_bar, HorizonOverrides::default())?;
    let empirical = horizon_certificate(
        cert,
        tail_horizon,
        prediction_horizon,
        v_bar,
        estimate.overrides(prediction_horizon, tail_horizon),
    )?;
    Ok(CertificatePaths {
        estimate,
        v_bar,
        analytic,
        empirical,
    })
}
