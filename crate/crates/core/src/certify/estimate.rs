//! Sampling-based estimation of the cost-controllability constants.
//!
//! For each candidate level `ε` (largest first) states are drawn on and inside
//! the ellipsoid `ℓ_min(x) = ε`, the feedback is rolled out, and the level is
//! accepted when every rollout stays in `Z` with the unsaturated feedback law.
//! The decay bound `ℓ_κ(φ_x(k, x)) ≤ C ρ^k ℓ_min(x)` is fitted over a ρ-grid
//! using every visited state that lies in the sublevel set as a start point.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::formulas::{ControllabilityCertificate, HorizonOverrides};
use crate::cost::QuadraticStageCost;
use crate::model::DiscreteSystem;
use crate::tail::{rollout, TailController};
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    /// Candidate sublevel thresholds; tried from largest to smallest.
    pub eps_grid: Vec<f64>,
    pub boundary_samples: usize,
    pub interior_samples: usize,
    /// Rollout length; the γ_k table covers `k = 0..=k_max`.
    pub k_max: usize,
    /// Tail horizon `M` at which the contraction constant `c_M` is measured.
    pub tail_horizon: usize,
    pub rho_step: f64,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            eps_grid: vec![0.5, 0.2, 0.1, 0.05, 0.02, 0.01],
            boundary_samples: 200,
            interior_samples: 200,
            k_max: 30,
            tail_horizon: 25,
            rho_step: 0.005,
            seed: 0,
        }
    }
}

impl SamplingPlan {
    pub fn validate(&self) -> Result<()> {
        if self.eps_grid.is_empty() || self.eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidParameter(
                "sampling plan needs a non-empty grid of positive levels".into(),
            ));
        }
        if self.boundary_samples + self.interior_samples == 0 {
            return Err(Error::InvalidParameter("sampling plan needs samples".into()));
        }
        if self.k_max == 0 || self.tail_horizon == 0 {
            return Err(Error::InvalidParameter(
                "rollout length and tail horizon must be at least 1".into(),
            ));
        }
        if !(self.rho_step > 0.0 && self.rho_step < 1.0) {
            return Err(Error::InvalidParameter("rho grid step must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Result of testing one candidate level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelOutcome {
    pub eps: f64,
    pub accepted: bool,
    /// Fitted `(ρ, C)` when the level was accepted.
    pub rho: Option<f64>,
    pub c: Option<f64>,
    /// Why the level was rejected, naming the worst sample.
    pub diagnostic: Option<String>,
}

/// Measured constants for the accepted level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalConstants {
    pub certificate: ControllabilityCertificate,
    /// `max_x V_{f,k}(x)/ℓ_min(x)` over the samples, `k = 0..=k_max`.
    pub gamma_table: Vec<f64>,
    /// `max ℓ_κ(φ_x(M, x))/V_{f,M}(x)` over visited states with `V_{f,M}(x) ≤ ε`.
    pub c_m: Option<f64>,
    pub c_m_horizon: usize,
    /// Number of states entering the `c_M` maximum.
    pub c_m_support: usize,
    /// Measured `c_M` for `M = 1, 2, …` up to the rollout length minus one.
    pub c_m_by_horizon: Vec<Option<f64>>,
    pub levels: Vec<LevelOutcome>,
}

impl EmpiricalConstants {
    /// Largest entry of the measured γ_k table.
    pub fn gamma_max(&self) -> f64 {
        self.gamma_table.iter().copied().fold(0.0, f64::max)
    }

    /// Measured `γ_k`, if `k` is within the table.
    pub fn gamma_at(&self, k: usize) -> Option<f64> {
        self.gamma_table.get(k).copied()
    }

    /// Measured replacements for the horizon certificate at `(N, M)`: `γ_{N+M}`
    /// (which bounds `V_{N,M} ≤ V_{f,N+M}`) and `c_M`. Either is absent when
    /// the rollouts were too short to measure it.
    pub fn overrides(&self, prediction_horizon: usize, tail_horizon: usize) -> HorizonOverrides {
        HorizonOverrides {
            gamma: self.gamma_at(prediction_horizon + tail_horizon),
            c_m: self.c_m_at(tail_horizon),
        }
    }

    /// Measured `c_M` at tail horizon `m`, if the rollouts were long enough
    /// and some visited state had `0 < V_{f,M} ≤ ε`.
    pub fn c_m_at(&self, m: usize) -> Option<f64> {
        m.checked_sub(1).and_then(|i| self.c_m_by_horizon.get(i).copied().flatten())
    }
}

struct SampleRollout {
    /// `ℓ_κ(φ_x(k))` for every simulated step.
    stage: Vec<f64>,
    /// `ℓ_min(φ_x(k))` for every simulated step.
    stage_min: Vec<f64>,
    violation: Option<String>,
}

pub fn estimate_controllability(
    sys: &DiscreteSystem,
    cost: &QuadraticStageCost,
    controller: &TailController,
    plan: &SamplingPlan,
) -> Result<EmpiricalConstants> {
    plan.validate()?;
    let z = sys.z_box();
    let floor = cost.stage_cost_min(z, cost.x_s())?;
    let length = plan.k_max.max(plan.tail_horizon + 1);

    let mut grid = plan.eps_grid.clone();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();

    let mut levels = Vec::with_capacity(grid.len());
    for (index, &eps) in grid.iter().enumerate() {
        let radius_sq = eps - floor;
        if radius_sq <= 0.0 {
            levels.push(rejected(eps, "level below the minimal stage cost".into()));
            continue;
        }
        let samples = draw_samples(cost, plan, radius_sq, plan.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let rollouts: Vec<SampleRollout> = samples
            .par_iter()
            .map(|x| simulate_sample(sys, cost, controller, x, length))
            .collect::<Result<_>>()?;

        if let Some((i, reason)) = rollouts
            .iter()
            .enumerate()
            .find_map(|(i, r)| r.violation.as_ref().map(|v| (i, v)))
        {
            let x = &samples[i];
            levels.push(rejected(
                eps,
                format!("sample {i} at {:?}: {reason}", x.as_slice()),
            ));
            continue;
        }

        let peaks = ratio_peaks(&rollouts, eps, length);
        let Some((rho, c)) = fit_decay(&peaks, plan.rho_step) else {
            levels.push(rejected(eps, "no decay rate below 1 bounds the rollouts".into()));
            continue;
        };
        levels.push(LevelOutcome {
            eps,
            accepted: true,
            rho: Some(rho),
            c: Some(c),
            diagnostic: None,
        });

        let gamma_table = empirical_gamma_table(&rollouts, plan.k_max);
        let (c_m, c_m_support) = empirical_c_m(&rollouts, eps, plan.tail_horizon);
        let c_m_by_horizon = (1..length).map(|h| empirical_c_m(&rollouts, eps, h).0).collect();
        return Ok(EmpiricalConstants {
            certificate: ControllabilityCertificate::new(rho, c, eps, plan.k_max)?,
            gamma_table,
            c_m,
            c_m_horizon: plan.tail_horizon,
            c_m_support,
            c_m_by_horizon,
            levels,
        });
    }

    let detail = levels
        .iter()
        .map(|l| format!("eps={}: {}", l.eps, l.diagnostic.as_deref().unwrap_or("")))
        .collect::<Vec<_>>()
        .join("; ");
    Err(Error::Certification(format!("no candidate level validated ({detail})")))
}

fn rejected(eps: f64, diagnostic: String) -> LevelOutcome {
    LevelOutcome {
        eps,
        accepted: false,
        rho: None,
        c: None,
        diagnostic: Some(diagnostic),
    }
}

/// Boundary samples on `‖x − x_s‖²_Q = r²` followed by interior samples with
/// uniformly distributed radius.
fn draw_samples(cost: &QuadraticStageCost, plan: &SamplingPlan, radius_sq: f64, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cost.state_dim();
    let total = plan.boundary_samples + plan.interior_samples;
    let radius = radius_sq.sqrt();
    (0..total)
        .map(|i| {
            let direction = loop {
                let d = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let norm = d.norm();
                if norm > 1e-12 {
                    break d / norm;
                }
            };
            let scale = if i < plan.boundary_samples {
                radius
            } else {
                radius * rng.random::<f64>().powf(1.0 / n as f64)
            };
            let shift = direction
                .component_div(&cost.q_diag().map(f64::sqrt))
                * scale;
            cost.x_s() + shift
        })
        .collect()
}

fn simulate_sample(
    sys: &DiscreteSystem,
    cost: &QuadraticStageCost,
    controller: &TailController,
    x: &Vector,
    length: usize,
) -> Result<SampleRollout> {
    let z = sys.z_box();
    let path = rollout(sys, controller, x, length)?;
    let mut violation = None;
    let mut stage = Vec::with_capacity(length);
    let mut stage_min = Vec::with_capacity(length);
    for (k, (xk, uk)) in path.states.iter().zip(path.inputs.iter()).enumerate() {
        if violation.is_none() {
            if !z.contains_state(xk) {
                violation = Some(format!("state leaves the box at step {k}"));
            } else if !z.contains_input(&controller.raw_input(xk)) {
                violation = Some(format!("feedback saturates at step {k}"));
            }
        }
        stage.push(cost.stage_cost(xk, uk)?);
        stage_min.push(cost.stage_cost_min(z, xk)?);
    }
    Ok(SampleRollout {
        stage,
        stage_min,
        violation,
    })
}

/// `peaks[i] = max ℓ_κ(φ_x(j + i))/ℓ_min(φ_x(j))` over all rollouts and all
/// start indices `j` whose state lies in the ε-sublevel set.
fn ratio_peaks(rollouts: &[SampleRollout], eps: f64, length: usize) -> Vec<f64> {
    let mut peaks = vec![0.0f64; length];
    for r in rollouts {
        for j in 0..length {
            let base = r.stage_min[j];
            if !(base > 0.0 && base <= eps) {
                continue;
            }
            for i in 0..length - j {
                peaks[i] = peaks[i].max(r.stage[j + i] / base);
            }
        }
    }
    peaks
}

/// Chooses `(ρ, C)` on the grid minimizing `C/(1 − ρ)` where
/// `C(ρ) = max(1, max_i peaks[i]/ρ^i)`.
fn fit_decay(peaks: &[f64], step: f64) -> Option<(f64, f64)> {
    let points = ((0.995 + 1e-12) / step).floor() as usize;
    let mut best: Option<(f64, f64, f64)> = None;
    for g in 0..=points {
        let rho = g as f64 * step;
        let c = peaks
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if *p == 0.0 {
                    0.0
                } else if i == 0 {
                    *p
                } else if rho == 0.0 {
                    f64::INFINITY
                } else {
                    p / rho.powi(i as i32)
                }
            })
            .fold(1.0, f64::max);
        if !c.is_finite() {
            continue;
        }
        let gamma = c / (1.0 - rho);
        if best.is_none_or(|(_, _, g)| gamma < g) {
            best = Some((rho, c, gamma));
        }
    }
    best.map(|(rho, c, _)| (rho, c))
}

fn empirical_gamma_table(rollouts: &[SampleRollout], k_max: usize) -> Vec<f64> {
    let mut table = vec![0.0f64; k_max + 1];
    for r in rollouts {
        let base = r.stage_min[0];
        if base <= 0.0 {
            continue;
        }
        let mut sum = 0.0;
        for k in 1..=k_max {
            sum += r.stage[k - 1];
            table[k] = table[k].max(sum / base);
        }
    }
    table
}

fn empirical_c_m(rollouts: &[SampleRollout], eps: f64, horizon: usize) -> (Option<f64>, usize) {
    let mut best: Option<f64> = None;
    let mut support = 0;
    for r in rollouts {
        for j in 0..r.stage.len().saturating_sub(horizon) {
            let tail: f64 = r.stage[j..j + horizon].iter().sum();
            if !(tail > 0.0 && tail <= eps) {
                continue;
            }
            support += 1;
            let ratio = r.stage[j + horizon] / tail;
            best = Some(best.map_or(ratio, |b| b.max(ratio)));
        }
    }
    (best, support)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_exact_geometric_decay() {
        let peaks: Vec<f64> = (0..40).map(|k| 1.5 * 0.6f64.powi(k)).collect();
        let (rho, c) = fit_decay(&peaks, 0.005).unwrap();
        assert!((rho - 0.6).abs() < 0.005 + 1e-12, "{rho}");
        assert!((c - 1.5).abs() < 1e-6, "{c}");
    }

    #[test]
    fn fit_of_dead_beat_response() {
        let (rho, c) = fit_decay(&[2.0, 0.0, 0.0], 0.005).unwrap();
        assert_eq!((rho, c), (0.0, 2.0));
    }

    #[test]
    fn fit_fails_for_exploding_response() {
        let peaks: Vec<f64> = (0..1100).map(|k| 2f64.powi(k)).collect();
        assert!(fit_decay(&peaks, 0.005).is_none());
    }

    #[test]
    fn plan_validation() {
        let mut plan = SamplingPlan::default();
        assert!(plan.validate().is_ok());
        plan.eps_grid.clear();
        assert!(plan.validate().is_err());
    }
}
