use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::Serialize;

use crate::{Error, Result};

/// A step count that may be unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

fn check_decay(rho: f64, c: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!(
            "decay rate must lie in [0, 1), got {rho}"
        )));
    }
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "overshoot constant must be finite and >= 1, got {c}"
        )));
    }
    Ok(())
}

/// Accumulated-cost bound `γ_k = C (1 − ρ^k)/(1 − ρ)`; `γ_∞ = C/(1 − ρ)`.
pub fn gamma_k(rho: f64, c: f64, k: Horizon) -> Result<f64> {
    check_decay(rho, c)?;
    Ok(match k {
        Horizon::Finite(k) => c * (1.0 - rho.powi(k as i32)) / (1.0 - rho),
        Horizon::Infinite => c / (1.0 - rho),
    })
}

/// Tail contraction constant `c_M = Cρ^M(1 − ρ)/(1 − ρ^M)`, so that
/// `V_{f,M+1} ≤ (1 + c_M) V_{f,M}` inside the ε-sublevel set.
pub fn c_m_analytic(rho: f64, c: f64, m: usize) -> Result<f64> {
    check_decay(rho, c)?;
    if m == 0 {
        return Err(Error::InvalidParameter("tail horizon must be at least 1".into()));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let rho_m = rho.powi(m as i32);
    Ok(c * rho_m * (1.0 - rho) / (1.0 - rho_m))
}

/// `c_M` as the optimum of the worst-case linear program
///
/// ```text
/// max ℓ_M  s.t.  Σ_{k<M} ℓ_k = 1,  ℓ_M ≤ C ρ^{M−k} ℓ_k  (k < M),  ℓ ≥ 0.
/// ```
///
/// Solved in the variable `t = ℓ_M/(Cρ^M) ∈ (0, 1]`, where the rows read
/// `ρ^k t ≤ ℓ_k`; the optimum of the original program is then `Cρ^M t`. In
/// the original scaling the optimum is often below the simplex tolerances.
pub fn c_m_lp(rho: f64, c: f64, m: usize) -> Result<f64> {
    check_decay(rho, c)?;
    if m == 0 {
        return Err(Error::InvalidParameter("tail horizon must be at least 1".into()));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let t = lp.add_var(1.0, (0.0, f64::INFINITY));
    let costs: Vec<_> = (0..m).map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let normalization: Vec<_> = costs.iter().map(|v| (*v, 1.0)).collect();
    lp.add_constraint(normalization, ComparisonOp::Eq, 1.0);
    for (k, var) in costs.iter().enumerate() {
        lp.add_constraint([(t, rho.powi(k as i32)), (*var, -1.0)], ComparisonOp::Le, 0.0);
    }
    let solution = lp
        .solve()
        .map_err(|e| Error::LinearProgram(e.to_string()))?;
    Ok(c * rho.powi(m as i32) * solution[t])
}

/// `M̲ = log C / log(1/ρ)`: for `M > M̲` the tail cost is a relaxed CLF.
/// Returns 0 when `ρ = 0` or `C = 1`.
pub fn m_lower_threshold(rho: f64, c: f64) -> Result<f64> {
    check_decay(rho, c)?;
    if rho == 0.0 {
        return Ok(0.0);
    }
    Ok(c.ln() / (1.0 / rho).ln())
}

/// `α_M = 1 − Cρ^M`, the relaxed-CLF decrease fraction (positive iff `M > M̲`).
pub fn relaxed_clf_margin(rho: f64, c: f64, m: usize) -> Result<f64> {
    check_decay(rho, c)?;
    Ok(1.0 - c * rho.powi(m as i32))
}

/// Horizon `2 log γ / (log γ − log(γ − 1))` required by the simple bound for
/// MPC without terminal ingredients.
pub fn no_terminal_horizon_bound(gamma: f64) -> Result<f64> {
    if !(gamma > 1.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "accumulated-cost bound must exceed 1, got {gamma}"
        )));
    }
    Ok(2.0 * gamma.ln() / decay_log_ratio(gamma))
}

/// `log γ − log(γ − 1) = −log ρ_γ`; infinite for `γ = 1`.
fn decay_log_ratio(gamma: f64) -> f64 {
    gamma.ln() - (gamma - 1.0).ln()
}

/// Cost-controllability constants `(ρ, C, ε)` of the local feedback.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllabilityCertificate {
    pub rho: f64,
    pub c: f64,
    pub eps: f64,
    /// `γ_k` for `k = 0..=k_max`.
    pub gamma_table: Vec<f64>,
    pub gamma_inf: f64,
}

impl ControllabilityCertificate {
    pub fn new(rho: f64, c: f64, eps: f64, k_max: usize) -> Result<Self> {
        check_decay(rho, c)?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sublevel threshold must be positive, got {eps}"
            )));
        }
        let gamma_table = (0..=k_max)
            .map(|k| gamma_k(rho, c, Horizon::Finite(k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rho,
            c,
            eps,
            gamma_table,
            gamma_inf: gamma_k(rho, c, Horizon::Infinite)?,
        })
    }
}

/// Where a constant entering the certificate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantSource {
    Analytic,
    Empirical,
}

/// Optional measured replacements for `γ` and `c_M`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HorizonOverrides {
    pub gamma: Option<f64>,
    pub c_m: Option<f64>,
}

/// Every constant of the closed-loop stability and performance certificate
/// for a prediction horizon `N`, tail horizon `M` and level `V̄`.
///
/// Thresholds are reported both as reals and as the smallest integer horizon
/// satisfying the corresponding strict inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonCertificate {
    pub prediction_horizon: usize,
    pub tail_horizon: usize,
    pub v_bar: f64,
    pub rho: f64,
    pub c: f64,
    pub eps: f64,
    pub gamma: f64,
    pub gamma_source: ConstantSource,
    pub gamma_vbar: f64,
    pub gamma_lower: f64,
    pub rho_gamma: f64,
    pub c_m: f64,
    pub c_m_source: ConstantSource,
    pub n0: usize,
    pub n1: usize,
    pub n2: f64,
    pub n2_min: usize,
    pub n_m: f64,
    pub n_m_min: usize,
    pub m_lower: f64,
    pub alpha_m: f64,
    pub eps_nm: f64,
    pub alpha_nm: f64,
    pub certified: bool,
}

/// Smallest integer strictly greater than `x` (and at least 0).
fn first_integer_above(x: f64) -> usize {
    if x < 0.0 {
        0
    } else if x.is_finite() {
        x.floor() as usize + 1
    } else {
        usize::MAX
    }
}

/// Builds the horizon certificate for `N` (`prediction_horizon`), `M`
/// (`tail_horizon`) and region-of-attraction level `V̄`.
///
/// `γ` defaults to `γ_∞ = C/(1 − ρ)` and `c_M` to its closed form; either can
/// be replaced by a measured value, in which case the descent margin is
/// `ε_{N,M} = 1 − c_M γ ρ_γ^{N−N₀}`. With both analytic this equals
/// `1 − C² ρ_γ^{N−N₀} ρ^M/(1 − ρ^M)`.
pub fn horizon_certificate(
    cert: &ControllabilityCertificate,
    tail_horizon: usize,
    prediction_horizon: usize,
    v_bar: f64,
    overrides: HorizonOverrides,
) -> Result<HorizonCertificate> {
    let (rho, c, eps) = (cert.rho, cert.c, cert.eps);
    check_decay(rho, c)?;
    if !(v_bar > 0.0 && v_bar.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "region-of-attraction level must be positive, got {v_bar}"
        )));
    }
    if tail_horizon == 0 || prediction_horizon == 0 {
        return Err(Error::InvalidParameter("horizons must be at least 1".into()));
    }

    let (gamma, gamma_source) = match overrides.gamma {
        Some(g) if g >= 1.0 && g.is_finite() => (g, ConstantSource::Empirical),
        Some(g) => {
            return Err(Error::InvalidParameter(format!(
                "gamma override must be finite and >= 1, got {g}"
            )))
        }
        None => (cert.gamma_inf, ConstantSource::Analytic),
    };
    let (c_m, c_m_source) = match overrides.c_m {
        Some(v) if v >= 0.0 && v.is_finite() => (v, ConstantSource::Empirical),
        Some(v) => {
            return Err(Error::InvalidParameter(format!(
                "c_M override must be finite and non-negative, got {v}"
            )))
        }
        None => (c_m_analytic(rho, c, tail_horizon)?, ConstantSource::Analytic),
    };

    let gamma_vbar = gamma.max(v_bar / eps);
    let gamma_lower = gamma.min(v_bar / eps);
    let rho_gamma = (gamma - 1.0) / gamma;
    let n0 = ((v_bar - gamma * eps) / eps).max(0.0).ceil() as usize;
    let log_ratio = decay_log_ratio(gamma);
    let contraction = c_m * gamma;

    let region_term = gamma_lower.ln().max(0.0) / log_ratio;
    let n1 = n0 + region_term.ceil() as usize;
    let n2 = n0 as f64 + contraction.ln() / log_ratio;
    let n_m = n0 as f64 + gamma_lower.ln().max(contraction.ln()).max(0.0) / log_ratio;

    let decay = rho_gamma.powi(prediction_horizon as i32 - n0 as i32);
    let eps_nm = 1.0 - contraction * decay;
    let alpha_nm = eps_nm / (1.0 + gamma * decay);

    Ok(HorizonCertificate {
        prediction_horizon,
        tail_horizon,
        v_bar,
        rho,
        c,
        eps,
        gamma,
        gamma_source,
        gamma_vbar,
        gamma_lower,
        rho_gamma,
        c_m,
        c_m_source,
        n0,
        n1,
        n2,
        n2_min: first_integer_above(n2),
        n_m,
        n_m_min: first_integer_above(n_m),
        m_lower: m_lower_threshold(rho, c)?,
        alpha_m: relaxed_clf_margin(rho, c, tail_horizon)?,
        eps_nm,
        alpha_nm,
        certified: (prediction_horizon as f64) > n_m && eps_nm > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma_k(0.5, 2.0, Horizon::Finite(0)).unwrap(), 0.0);
        assert!(close(gamma_k(0.5, 2.0, Horizon::Finite(2)).unwrap(), 3.0, 1e-15));
        let inf = gamma_k(0.93, 6.9, Horizon::Infinite).unwrap();
        assert!(close(inf, 98.571_428_571, 1e-6), "{inf}");
        assert!(gamma_k(1.0, 2.0, Horizon::Finite(3)).is_err());
    }

    #[test]
    fn c_m_values() {
        assert!(close(c_m_analytic(0.7, 3.0, 1).unwrap(), 2.1, 1e-12));
        assert!(close(c_m_analytic(0.5, 2.0, 2).unwrap(), 1.0 / 3.0, 1e-15));
        let published = c_m_analytic(0.93, 6.9, 25).unwrap();
        assert!(close(published, 0.0940, 0.0005), "{published}");
        assert_eq!(c_m_analytic(0.0, 4.0, 3).unwrap(), 0.0);
        assert!(c_m_analytic(0.5, 2.0, 0).is_err());
    }

    #[test]
    fn lp_matches_closed_form_on_published_constants() {
        let lp = c_m_lp(0.93, 6.9, 25).unwrap();
        assert!(close(lp, c_m_analytic(0.93, 6.9, 25).unwrap(), 1e-9));
        assert!(close(c_m_lp(0.6, 2.5, 1).unwrap(), 1.5, 1e-12));
    }

    #[test]
    fn thresholds() {
        assert_eq!(m_lower_threshold(0.9, 1.0).unwrap(), 0.0);
        assert!(close(m_lower_threshold(0.5, 2.0).unwrap(), 1.0, 1e-15));
        let m = m_lower_threshold(0.93, 6.9).unwrap();
        assert!(close(m, 26.6, 0.05), "{m}");
        assert_eq!(m_lower_threshold(0.0, 3.0).unwrap(), 0.0);
        assert!(relaxed_clf_margin(0.93, 6.9, 27).unwrap() > 0.0);
        assert!(relaxed_clf_margin(0.93, 6.9, 26).unwrap() < 0.0);
    }

    #[test]
    fn no_terminal_bound_values() {
        assert!(close(no_terminal_horizon_bound(2.0).unwrap(), 2.0, 1e-15));
        let b = no_terminal_horizon_bound(98.571_428_571).unwrap();
        assert!(b > 600.0 && close(b, 900.0, 15.0), "{b}");
        assert!(no_terminal_horizon_bound(1.0 + 1e-9).unwrap() < 1e-6);
        assert!(no_terminal_horizon_bound(1.0).is_err());
    }

    #[test]
    fn local_level_has_no_offset() {
        let cert = ControllabilityCertificate::new(0.93, 6.9, 0.08, 30).unwrap();
        let h = horizon_certificate(&cert, 25, 5, 0.08 * cert.gamma_inf, HorizonOverrides::default())
            .unwrap();
        assert_eq!(h.n0, 0);
        let h = horizon_certificate(&cert, 25, 5, 0.08 * cert.gamma_inf + 0.2, HorizonOverrides::default())
            .unwrap();
        assert_eq!(h.n0, 3);
    }

    #[test]
    fn empirical_constants_give_positive_margin() {
        let cert = ControllabilityCertificate::new(0.93, 6.9, 0.08, 30).unwrap();
        let overrides = HorizonOverrides {
            gamma: Some(74.0),
            c_m: Some(0.013),
        };
        let h = horizon_certificate(&cert, 25, 5, 0.0801, overrides).unwrap();
        let rho_gamma: f64 = 73.0 / 74.0;
        assert!(close(h.eps_nm, 1.0 - 0.013 * 74.0 * rho_gamma.powi(5), 1e-12));
        assert!(h.eps_nm > 0.0 && h.certified);
        assert!(h.alpha_nm <= h.eps_nm);

        let analytic = horizon_certificate(&cert, 25, 5, 0.0801, HorizonOverrides::default()).unwrap();
        assert!(!analytic.certified);
        assert!(analytic.eps_nm < 0.0);
        assert!(analytic.n_m > 100.0);
    }

    #[test]
    fn analytic_margin_matches_squared_overshoot_form() {
        let cert = ControllabilityCertificate::new(0.8, 2.0, 0.5, 10).unwrap();
        let h = horizon_certificate(&cert, 7, 40, 0.3, HorizonOverrides::default()).unwrap();
        let rho_m = 0.8f64.powi(7);
        let expected = 1.0 - 4.0 * h.rho_gamma.powi(40) * rho_m / (1.0 - rho_m);
        assert!(close(h.eps_nm, expected, 1e-12));
    }

    #[test]
    fn long_tail_drives_margin_to_one() {
        let cert = ControllabilityCertificate::new(0.93, 6.9, 0.08, 30).unwrap();
        let h = horizon_certificate(&cert, 2000, 5, 0.05, HorizonOverrides::default()).unwrap();
        assert!(close(h.eps_nm, 1.0, 1e-12));
    }

    #[test]
    fn dead_beat_feedback() {
        let cert = ControllabilityCertificate::new(0.0, 3.0, 1.0, 5).unwrap();
        let h = horizon_certificate(&cert, 1, 1, 0.5, HorizonOverrides::default()).unwrap();
        assert_eq!(h.gamma, 3.0);
        assert!(close(h.rho_gamma, 2.0 / 3.0, 1e-15));
        assert_eq!(h.eps_nm, 1.0);
        assert!(h.certified);
    }

    #[test]
    fn rejects_bad_level() {
        let cert = ControllabilityCertificate::new(0.5, 2.0, 0.1, 5).unwrap();
        assert!(horizon_certificate(&cert, 1, 1, 0.0, HorizonOverrides::default()).is_err());
    }
}
