#![allow(dead_code)]

use std::path::PathBuf;

use fintail::config::{RunConfig, Setup};
use fintail::cost::QuadraticStageCost;
use fintail::model::{ConstraintBox, DiscreteSystem};
use fintail::mpc::{FiniteTailMpc, MpcConfig};
use fintail::tail::TailController;
use fintail::{Matrix, Vector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn four_tank() -> (RunConfig, Setup) {
    let config = RunConfig::load(&config_path("four_tank.toml")).expect("shipped config parses");
    let setup = config.setup().expect("shipped config builds");
    (config, setup)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| uniform(rng, -scale, scale))
}

/// A linear-quadratic instance around the origin with boxes wide enough to
/// stay inactive, and its LQR feedback.
pub struct LqInstance {
    pub a: Matrix,
    pub b: Matrix,
    pub q: Vector,
    pub r: Vector,
    pub sys: DiscreteSystem,
    pub cost: QuadraticStageCost,
    pub controller: TailController,
}

pub fn lq_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LqInstance {
    let a = random_matrix(rng, n, n, 0.8);
    let b = random_matrix(rng, n, m, 1.0);
    let q = Vector::from_fn(n, |_, _| uniform(rng, 0.2, 2.0));
    let r = Vector::from_fn(m, |_, _| uniform(rng, 0.1, 1.0));
    let z_box = ConstraintBox::uniform(n, m, 1e6, 1e6);
    let sys = DiscreteSystem::linear(a.clone(), b.clone(), z_box).unwrap();
    let cost = QuadraticStageCost::new(Vector::zeros(n), Vector::zeros(m), q.clone(), r.clone()).unwrap();
    let controller = TailController::lqr(&sys, &cost).unwrap();
    LqInstance {
        a,
        b,
        q,
        r,
        sys,
        cost,
        controller,
    }
}

impl LqInstance {
    pub fn mpc(&self, n_horizon: usize, m_horizon: usize) -> FiniteTailMpc {
        FiniteTailMpc::new(
            self.sys.clone(),
            self.cost.clone(),
            self.controller.clone(),
            MpcConfig::new(n_horizon, m_horizon),
        )
        .unwrap()
    }

    /// `P_M = Σ_{k<M} (A−BK)ᵀᵏ (Q + KᵀRK) (A−BK)ᵏ`.
    pub fn tail_weight(&self, m_horizon: usize) -> Matrix {
        let k = self.controller.gain();
        let acl = &self.a - &self.b * k;
        let stage = Matrix::from_diagonal(&self.q) + k.transpose() * Matrix::from_diagonal(&self.r) * k;
        let mut p = Matrix::zeros(self.a.nrows(), self.a.ncols());
        let mut power = Matrix::identity(self.a.nrows(), self.a.ncols());
        for _ in 0..m_horizon {
            p += power.transpose() * &stage * &power;
            power = &acl * power;
        }
        p
    }

    /// Optimal value `x₀ᵀ P₀ x₀` of the unconstrained problem by the backward
    /// Riccati recursion from the tail weight.
    pub fn riccati_value(&self, x0: &Vector, n_horizon: usize, m_horizon: usize) -> f64 {
        let (a, b) = (&self.a, &self.b);
        let q = Matrix::from_diagonal(&self.q);
        let r = Matrix::from_diagonal(&self.r);
        let mut p = self.tail_weight(m_horizon);
        for _ in 0..n_horizon {
            let gain = (&r + b.transpose() * &p * b)
                .try_inverse()
                .unwrap()
                * b.transpose()
                * &p
                * a;
            p = &q + a.transpose() * &p * a - a.transpose() * &p * b * gain;
        }
        (x0.transpose() * p * x0)[(0, 0)]
    }
}
