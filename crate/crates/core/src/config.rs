//! Run configuration (TOML).
//!
//! ```toml
//! [plant]
//! model = "four_tank"            # or "linear" with state_matrix/input_matrix
//! A = [...]; a = [...]; b = [...]; g = 981.0; Ts = 3.0
//! x_s = [...]; u_s = [...]; x_lo = [...]; x_hi = [...]; u_lo = [...]; u_hi = [...]
//! [cost]     q_diag, r_diag
//! [tail]     K (optional explicit gain, rows = inputs)
//! [mpc]      N, M
//! [solver]   see `SolverSettings`
//! [certify]  eps_grid, boundary_samples, interior_samples, k_max, rho_step, seed, v_bar | v_bar_rel
//! [simulate] x0 | x0_offset, T_sim, eps_nm (override)
//! [compare]  tail_horizons, optional rho/c/eps and gamma/c_m overrides
//! [sweep]    pairs, x0_offsets, workers, T_sim
//! [output]   dir
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::certify::SamplingPlan;
use crate::cost::QuadraticStageCost;
use crate::model::{ConstraintBox, DiscreteSystem, FourTank, FourTankParams, LinearDynamics};
use crate::mpc::{FiniteTailMpc, MpcConfig, SolverSettings};
use crate::tail::TailController;
use crate::{Error, Matrix, Result, Vector};

/// Allowed `‖f(x_s, u_s) − x_s‖_∞` for a configured setpoint.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantConfig,
    pub cost: CostConfig,
    #[serde(default)]
    pub tail: TailConfig,
    pub mpc: HorizonConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PlantConfig {
    FourTank(FourTankPlant),
    Linear(LinearPlant),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setpoint {
    pub x_s: Vec<f64>,
    pub u_s: Vec<f64>,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub u_lo: Vec<f64>,
    pub u_hi: Vec<f64>,
}

/// Four-tank constants in cm, cm², s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourTankPlant {
    #[serde(rename = "A")]
    pub tank_areas: [f64; 4],
    #[serde(rename = "a")]
    pub outlet_areas: [f64; 4],
    #[serde(rename = "b")]
    pub valve_splits: [f64; 2],
    pub g: f64,
    #[serde(rename = "Ts")]
    pub sample_time: f64,
    #[serde(flatten)]
    pub setpoint: Setpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearPlant {
    pub state_matrix: Vec<Vec<f64>>,
    pub input_matrix: Vec<Vec<f64>>,
    #[serde(flatten)]
    pub setpoint: Setpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub q_diag: Vec<f64>,
    pub r_diag: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailConfig {
    #[serde(rename = "K")]
    pub gain: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonConfig {
    #[serde(rename = "N")]
    pub prediction_horizon: usize,
    #[serde(rename = "M")]
    pub tail_horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    pub eps_grid: Vec<f64>,
    pub boundary_samples: usize,
    pub interior_samples: usize,
    /// Rollout length; defaults to `N + M`.
    pub k_max: Option<usize>,
    pub rho_step: f64,
    pub seed: u64,
    /// Absolute region-of-attraction level `V̄`.
    pub v_bar: Option<f64>,
    /// `V̄` as a multiple of the certified `ε` (used when `v_bar` is absent).
    pub v_bar_rel: Option<f64>,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        let plan = SamplingPlan::default();
        Self {
            eps_grid: plan.eps_grid,
            boundary_samples: plan.boundary_samples,
            interior_samples: plan.interior_samples,
            k_max: None,
            rho_step: plan.rho_step,
            seed: plan.seed,
            v_bar: None,
            v_bar_rel: None,
        }
    }
}

impl CertifyConfig {
    pub fn sampling_plan(&self, prediction_horizon: usize, tail_horizon: usize) -> SamplingPlan {
        SamplingPlan {
            eps_grid: self.eps_grid.clone(),
            boundary_samples: self.boundary_samples,
            interior_samples: self.interior_samples,
            k_max: self.k_max.unwrap_or(prediction_horizon + tail_horizon),
            tail_horizon,
            rho_step: self.rho_step,
            seed: self.seed,
        }
    }

    /// `V̄` for a certified level `eps`; defaults to `eps` itself.
    pub fn v_bar_for(&self, eps: f64) -> f64 {
        match (self.v_bar, self.v_bar_rel) {
            (Some(v), _) => v,
            (None, Some(r)) => r * eps,
            (None, None) => eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Absolute initial state.
    pub x0: Option<Vec<f64>>,
    /// Initial state as `x_s + x0_offset`.
    pub x0_offset: Option<Vec<f64>>,
    #[serde(rename = "T_sim")]
    pub steps: usize,
    /// Replaces the certified descent margin in the checks (negative controls).
    pub eps_nm: Option<f64>,
}

/// Horizon comparison table. Without `rho`, `c`, `eps` the constants are
/// estimated by sampling; with them the table is purely formula-based and
/// `gamma`/`c_m` act as measured overrides (`c_m` at the configured `M` only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub tail_horizons: Vec<usize>,
    pub rho: Option<f64>,
    pub c: Option<f64>,
    pub eps: Option<f64>,
    pub gamma: Option<f64>,
    pub c_m: Option<f64>,
}

impl CompareConfig {
    pub fn fixed_constants(&self) -> Option<(f64, f64, f64)> {
        Some((self.rho?, self.c?, self.eps?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `(N, M)` cells.
    pub pairs: Vec<[usize; 2]>,
    /// Initial states as offsets from `x_s`.
    pub x0_offsets: Vec<Vec<f64>>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(rename = "T_sim")]
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: std::path::PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
        }
    }
}

fn default_workers() -> usize {
    4
}

/// Plant, cost and feedback assembled from a config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub system: DiscreteSystem,
    pub cost: QuadraticStageCost,
    pub controller: TailController,
}

impl Setup {
    pub fn mpc(&self, horizons: &HorizonConfig, solver: &SolverSettings) -> Result<FiniteTailMpc> {
        FiniteTailMpc::new(
            self.system.clone(),
            self.cost.clone(),
            self.controller.clone(),
            MpcConfig {
                prediction_horizon: horizons.prediction_horizon,
                tail_horizon: horizons.tail_horizon,
                solver: solver.clone(),
            },
        )
    }
}

fn vector(name: &str, values: &[f64], len: usize) -> Result<Vector> {
    if values.len() != len {
        return Err(Error::Config(format!(
            "`{name}` must have {len} entries, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("`{name}` must be finite")));
    }
    Ok(Vector::from_column_slice(values))
}

fn matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<Matrix> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("`{name}` must be {nrows}×{ncols}")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Parse-time checks of every block; plant-level invariants are checked
    /// by [`RunConfig::setup`].
    pub fn validate(&self) -> Result<()> {
        MpcConfig {
            prediction_horizon: self.mpc.prediction_horizon,
            tail_horizon: self.mpc.tail_horizon,
            solver: self.solver.clone(),
        }
        .validate()
        .map_err(|e| Error::Config(e.to_string()))?;
        let c = &self.certify;
        self.certify
            .sampling_plan(self.mpc.prediction_horizon, self.mpc.tail_horizon)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if c.v_bar.is_some() && c.v_bar_rel.is_some() {
            return Err(Error::Config("give at most one of `v_bar` and `v_bar_rel`".into()));
        }
        if c.v_bar.or(c.v_bar_rel).is_some_and(|v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Config("`v_bar` must be positive".into()));
        }
        if let Some(sim) = &self.simulate {
            if sim.x0.is_some() == sim.x0_offset.is_some() {
                return Err(Error::Config(
                    "[simulate] needs exactly one of `x0` and `x0_offset`".into(),
                ));
            }
            if sim.steps == 0 {
                return Err(Error::Config("`T_sim` must be at least 1".into()));
            }
        }
        if let Some(cmp) = &self.compare {
            if cmp.tail_horizons.contains(&0) {
                return Err(Error::Config("compare tail horizons must be at least 1".into()));
            }
            let given = [cmp.rho, cmp.c, cmp.eps].iter().filter(|v| v.is_some()).count();
            if given != 0 && given != 3 {
                return Err(Error::Config(
                    "[compare] needs all or none of `rho`, `c`, `eps`".into(),
                ));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.pairs.iter().any(|[n, m]| *n == 0 || *m == 0) {
                return Err(Error::Config("sweep horizons must be at least 1".into()));
            }
            if sweep.workers == 0 || sweep.steps == 0 {
                return Err(Error::Config("sweep needs workers >= 1 and T_sim >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn setpoint(&self) -> &Setpoint {
        match &self.plant {
            PlantConfig::FourTank(p) => &p.setpoint,
            PlantConfig::Linear(p) => &p.setpoint,
        }
    }

    /// Seconds per step for time axes; 1 for plants without a sample time.
    pub fn sample_time(&self) -> f64 {
        match &self.plant {
            PlantConfig::FourTank(p) => p.sample_time,
            PlantConfig::Linear(_) => 1.0,
        }
    }

    /// Builds the plant, the stage cost and the feedback (explicit gain or
    /// LQR on the linearization at the setpoint).
    pub fn setup(&self) -> Result<Setup> {
        let sp = self.setpoint();
        let (n, m) = (sp.x_s.len(), sp.u_s.len());
        let z_box = ConstraintBox::new(
            vector("x_lo", &sp.x_lo, n)?,
            vector("x_hi", &sp.x_hi, n)?,
            vector("u_lo", &sp.u_lo, m)?,
            vector("u_hi", &sp.u_hi, m)?,
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        let system = match &self.plant {
            PlantConfig::FourTank(p) => {
                if (n, m) != (4, 2) {
                    return Err(Error::Config("four-tank plant has 4 states and 2 inputs".into()));
                }
                let params = FourTankParams {
                    tank_areas: p.tank_areas,
                    outlet_areas: p.outlet_areas,
                    valve_splits: p.valve_splits,
                    gravity: p.g,
                    sample_time: p.sample_time,
                };
                DiscreteSystem::new(
                    Arc::new(FourTank::new(params).map_err(|e| Error::Config(e.to_string()))?),
                    z_box,
                )?
            }
            PlantConfig::Linear(p) => {
                let a = matrix("state_matrix", &p.state_matrix, n, n)?;
                let b = matrix("input_matrix", &p.input_matrix, n, m)?;
                DiscreteSystem::new(Arc::new(LinearDynamics::new(a, b)?), z_box)?
            }
        };
        let x_s = vector("x_s", &sp.x_s, n)?;
        let u_s = vector("u_s", &sp.u_s, m)?;
        system
            .check_equilibrium(&x_s, &u_s, EQUILIBRIUM_TOLERANCE)
            .map_err(|e| Error::Config(e.to_string()))?;
        let cost = QuadraticStageCost::new(
            x_s,
            u_s,
            vector("q_diag", &self.cost.q_diag, n)?,
            vector("r_diag", &self.cost.r_diag, m)?,
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        let controller = match &self.tail.gain {
            Some(rows) => TailController::with_gain(&system, &cost, matrix("K", rows, m, n)?)?,
            None => TailController::lqr(&system, &cost)?,
        };
        Ok(Setup {
            system,
            cost,
            controller,
        })
    }

    /// Initial state of the `[simulate]` block.
    pub fn initial_state(&self) -> Result<Vector> {
        let sim = self
            .simulate
            .as_ref()
            .ok_or_else(|| Error::Config("missing [simulate] block".into()))?;
        let sp = self.setpoint();
        match (&sim.x0, &sim.x0_offset) {
            (Some(x0), _) => vector("x0", x0, sp.x_s.len()),
            (None, Some(off)) => Ok(vector("x_s", &sp.x_s, sp.x_s.len())?
                + vector("x0_offset", off, sp.x_s.len())?),
            (None, None) => Err(Error::Config("missing initial state".into())),
        }
    }
}
