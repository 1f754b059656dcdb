//! Discrete-time plants, the four-tank benchmark and numerical linearization.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::check_dim;
use crate::linalg::is_finite;
use crate::{Error, Matrix, Result, Vector};

/// Componentwise box `Z = X × U` on states and inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBox {
    pub x_lo: Vector,
    pub x_hi: Vector,
    pub u_lo: Vector,
    pub u_hi: Vector,
}

impl ConstraintBox {
    pub fn new(x_lo: Vector, x_hi: Vector, u_lo: Vector, u_hi: Vector) -> Result<Self> {
        check_dim("constraint box state bounds", x_lo.len(), x_hi.len())?;
        check_dim("constraint box input bounds", u_lo.len(), u_hi.len())?;
        let ordered = |lo: &Vector, hi: &Vector| lo.iter().zip(hi.iter()).all(|(l, h)| l < h);
        if !ordered(&x_lo, &x_hi) || !ordered(&u_lo, &u_hi) {
            return Err(Error::InvalidParameter(
                "constraint box requires lower < upper componentwise".into(),
            ));
        }
        Ok(Self {
            x_lo,
            x_hi,
            u_lo,
            u_hi,
        })
    }

    /// Box with the given bounds replicated over every component.
    pub fn uniform(n: usize, m: usize, x_bound: f64, u_bound: f64) -> Self {
        Self {
            x_lo: Vector::from_element(n, -x_bound),
            x_hi: Vector::from_element(n, x_bound),
            u_lo: Vector::from_element(m, -u_bound),
            u_hi: Vector::from_element(m, u_bound),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.x_lo.len()
    }

    pub fn input_dim(&self) -> usize {
        self.u_lo.len()
    }

    pub fn contains_state(&self, x: &Vector) -> bool {
        interval_contains(&self.x_lo, &self.x_hi, x, 0.0)
    }

    pub fn contains_input(&self, u: &Vector) -> bool {
        interval_contains(&self.u_lo, &self.u_hi, u, 0.0)
    }

    pub fn contains(&self, x: &Vector, u: &Vector) -> bool {
        self.contains_within(x, u, 0.0)
    }

    /// Membership with every bound relaxed by `tol`.
    pub fn contains_within(&self, x: &Vector, u: &Vector, tol: f64) -> bool {
        interval_contains(&self.x_lo, &self.x_hi, x, tol)
            && interval_contains(&self.u_lo, &self.u_hi, u, tol)
    }

    /// Strict interior membership of the pair.
    pub fn interior_contains(&self, x: &Vector, u: &Vector) -> bool {
        let strict = |lo: &Vector, hi: &Vector, v: &Vector| {
            lo.iter()
                .zip(hi.iter())
                .zip(v.iter())
                .all(|((l, h), x)| l < x && x < h)
        };
        strict(&self.x_lo, &self.x_hi, x) && strict(&self.u_lo, &self.u_hi, u)
    }

    /// Largest amount by which `x` leaves the state box (0 when inside).
    pub fn state_violation(&self, x: &Vector) -> f64 {
        self.x_lo
            .iter()
            .zip(self.x_hi.iter())
            .zip(x.iter())
            .fold(0.0, |acc, ((l, h), v)| acc.max(l - v).max(v - h))
    }

    pub fn project_input(&self, u: &Vector) -> Vector {
        Vector::from_iterator(
            u.len(),
            u.iter()
                .zip(self.u_lo.iter().zip(self.u_hi.iter()))
                .map(|(v, (l, h))| v.clamp(*l, *h)),
        )
    }
}

fn interval_contains(lo: &Vector, hi: &Vector, v: &Vector, tol: f64) -> bool {
    lo.iter()
        .zip(hi.iter())
        .zip(v.iter())
        .all(|((l, h), x)| *x >= l - tol && *x <= h + tol)
}

/// Transition map `x⁺ = f(x, u)` together with its Jacobians.
///
/// The default Jacobian uses central finite differences; implementations with
/// closed-form derivatives override it.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn step(&self, x: &Vector, u: &Vector) -> Result<Vector>;

    fn jacobians(&self, x: &Vector, u: &Vector) -> Result<(Matrix, Matrix)> {
        central_differences(|x, u| self.step(x, u), x, u)
    }
}

/// A plant: dynamics plus the constraint box `Z`.
#[derive(Clone)]
pub struct DiscreteSystem {
    dynamics: Arc<dyn Dynamics>,
    z_box: ConstraintBox,
}

impl fmt::Debug for DiscreteSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteSystem")
            .field("n", &self.n())
            .field("m", &self.m())
            .field("z_box", &self.z_box)
            .finish()
    }
}

impl DiscreteSystem {
    pub fn new(dynamics: Arc<dyn Dynamics>, z_box: ConstraintBox) -> Result<Self> {
        check_dim("system state bounds", dynamics.state_dim(), z_box.state_dim())?;
        check_dim("system input bounds", dynamics.input_dim(), z_box.input_dim())?;
        Ok(Self { dynamics, z_box })
    }

    /// Linear system `x⁺ = A x + B u`.
    pub fn linear(a: Matrix, b: Matrix, z_box: ConstraintBox) -> Result<Self> {
        Self::new(Arc::new(LinearDynamics::new(a, b)?), z_box)
    }

    /// System defined by an arbitrary closure; Jacobians by finite differences.
    pub fn from_fn<F>(n: usize, m: usize, f: F, z_box: ConstraintBox) -> Result<Self>
    where
        F: Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
    {
        Self::new(Arc::new(FnDynamics { n, m, f }), z_box)
    }

    pub fn n(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn m(&self) -> usize {
        self.dynamics.input_dim()
    }

    pub fn z_box(&self) -> &ConstraintBox {
        &self.z_box
    }

    pub fn step(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        check_dim("state", self.n(), x.len())?;
        check_dim("input", self.m(), u.len())?;
        if !is_finite(x) || !is_finite(u) {
            return Err(Error::Domain("non-finite state or input".into()));
        }
        self.dynamics.step(x, u)
    }

    pub fn jacobians(&self, x: &Vector, u: &Vector) -> Result<(Matrix, Matrix)> {
        self.dynamics.jacobians(x, u)
    }

    /// Checks `f(x_s, u_s) = x_s` within `tol` and that the pair lies in the
    /// interior of `Z`.
    pub fn check_equilibrium(&self, x_s: &Vector, u_s: &Vector, tol: f64) -> Result<()> {
        let residual = (self.step(x_s, u_s)? - x_s).amax();
        if residual > tol {
            return Err(Error::InvalidParameter(format!(
                "setpoint is not an equilibrium: residual {residual:.3e} > {tol:.1e}"
            )));
        }
        if !self.z_box.interior_contains(x_s, u_s) {
            return Err(Error::InvalidParameter(
                "setpoint must lie strictly inside the constraint box".into(),
            ));
        }
        Ok(())
    }
}

/// Jacobians of `f` at `(x, u)` by central finite differences.
///
/// Step per coordinate is `max(1e-6, 1e-6·|coordinate|)`; the quotient uses
/// the representable distance between the two perturbed points.
pub fn linearize(sys: &DiscreteSystem, x: &Vector, u: &Vector) -> Result<(Matrix, Matrix)> {
    check_dim("linearization state", sys.n(), x.len())?;
    check_dim("linearization input", sys.m(), u.len())?;
    central_differences(|x, u| sys.step(x, u), x, u)
}

fn central_differences<F>(f: F, x: &Vector, u: &Vector) -> Result<(Matrix, Matrix)>
where
    F: Fn(&Vector, &Vector) -> Result<Vector>,
{
    let n = x.len();
    let m = u.len();
    let mut a = Matrix::zeros(n, n);
    let mut b = Matrix::zeros(n, m);
    let eval = |x: &Vector, u: &Vector| -> Result<Vector> {
        let y = f(x, u).map_err(|e| Error::Linearization(e.to_string()))?;
        if !is_finite(&y) {
            return Err(Error::Linearization("non-finite perturbed evaluation".into()));
        }
        Ok(y)
    };
    for j in 0..n {
        let h = f64::max(1e-6, 1e-6 * x[j].abs());
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[j] += h;
        xm[j] -= h;
        let col = (eval(&xp, u)? - eval(&xm, u)?) / (xp[j] - xm[j]);
        a.set_column(j, &col);
    }
    for j in 0..m {
        let h = f64::max(1e-6, 1e-6 * u[j].abs());
        let (mut up, mut um) = (u.clone(), u.clone());
        up[j] += h;
        um[j] -= h;
        let col = (eval(x, &up)? - eval(x, &um)?) / (up[j] - um[j]);
        b.set_column(j, &col);
    }
    Ok((a, b))
}

#[derive(Debug, Clone)]
pub struct LinearDynamics {
    a: Matrix,
    b: Matrix,
}

impl LinearDynamics {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        check_dim("linear dynamics A columns", a.nrows(), a.ncols())?;
        check_dim("linear dynamics B rows", a.nrows(), b.nrows())?;
        Ok(Self { a, b })
    }
}

impl Dynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn step(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        Ok(&self.a * x + &self.b * u)
    }

    fn jacobians(&self, _x: &Vector, _u: &Vector) -> Result<(Matrix, Matrix)> {
        Ok((self.a.clone(), self.b.clone()))
    }
}

struct FnDynamics<F> {
    n: usize,
    m: usize,
    f: F,
}

impl<F> Dynamics for FnDynamics<F>
where
    F: Fn(&Vector, &Vector) -> Vector + Send + Sync,
{
    fn state_dim(&self) -> usize {
        self.n
    }

    fn input_dim(&self) -> usize {
        self.m
    }

    fn step(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        let y = (self.f)(x, u);
        check_dim("closure dynamics output", self.n, y.len())?;
        Ok(y)
    }
}

/// Physical constants of the quadruple-tank process (cm, cm², s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourTankParams {
    /// Tank cross-sections `A_i`.
    pub tank_areas: [f64; 4],
    /// Outlet cross-sections `a_i`.
    pub outlet_areas: [f64; 4],
    /// Valve splits `b_1, b_2`: share of each pump flow going to the lower tanks.
    pub valve_splits: [f64; 2],
    pub gravity: f64,
    pub sample_time: f64,
}

impl FourTankParams {
    pub fn validate(&self) -> Result<()> {
        let positive = self
            .tank_areas
            .iter()
            .chain(self.outlet_areas.iter())
            .chain(self.valve_splits.iter())
            .chain([self.gravity].iter())
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive {
            return Err(Error::InvalidParameter(
                "four-tank parameters must be finite and strictly positive".into(),
            ));
        }
        if self.valve_splits.iter().any(|b| *b >= 1.0) {
            return Err(Error::InvalidParameter(
                "valve splits must lie in (0, 1)".into(),
            ));
        }
        if !(self.sample_time.is_finite() && self.sample_time >= 0.0) {
            return Err(Error::InvalidParameter(
                "sampling time must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Continuous-time level dynamics `ẋ` of the four-tank process.
///
/// Tanks 3 and 4 drain into tanks 1 and 2; pump 1 feeds tanks 1 and 4,
/// pump 2 feeds tanks 2 and 3. Square roots are taken of `max(x_i, 0)`.
pub fn four_tank_vector_field(p: &FourTankParams, x: &Vector, u: &Vector) -> Result<Vector> {
    check_dim("four-tank state", 4, x.len())?;
    check_dim("four-tank input", 2, u.len())?;
    if !is_finite(x) || !is_finite(u) {
        return Err(Error::Domain("non-finite four-tank state or input".into()));
    }
    let q = outflows(p, x);
    let [a1, a2, a3, a4] = p.tank_areas;
    let [b1, b2] = p.valve_splits;
    Ok(Vector::from_vec(vec![
        (-q[0] + q[2] + b1 * u[0]) / a1,
        (-q[1] + q[3] + b2 * u[1]) / a2,
        (-q[2] + (1.0 - b2) * u[1]) / a3,
        (-q[3] + (1.0 - b1) * u[0]) / a4,
    ]))
}

/// Outflow `a_i √(2 g max(x_i, 0))` of each tank.
fn outflows(p: &FourTankParams, x: &Vector) -> [f64; 4] {
    std::array::from_fn(|i| p.outlet_areas[i] * (2.0 * p.gravity * x[i].max(0.0)).sqrt())
}

/// Derivative of the outflow of tank `i` w.r.t. its level; 0 at or below empty.
fn outflow_slope(p: &FourTankParams, x: &Vector, i: usize) -> f64 {
    if x[i] > 0.0 {
        p.outlet_areas[i] * p.gravity / (2.0 * p.gravity * x[i]).sqrt()
    } else {
        0.0
    }
}

/// Euler-discretized four-tank process with levels clamped at zero.
#[derive(Debug, Clone)]
pub struct FourTank {
    params: FourTankParams,
}

impl FourTank {
    pub fn new(params: FourTankParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &FourTankParams {
        &self.params
    }

    fn unclamped(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        Ok(x + self.params.sample_time * four_tank_vector_field(&self.params, x, u)?)
    }
}

impl Dynamics for FourTank {
    fn state_dim(&self) -> usize {
        4
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn step(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        Ok(self.unclamped(x, u)?.map(|v| v.max(0.0)))
    }

    fn jacobians(&self, x: &Vector, u: &Vector) -> Result<(Matrix, Matrix)> {
        let p = &self.params;
        let y = self.unclamped(x, u)?;
        let ts = p.sample_time;
        let [a1, a2, a3, a4] = p.tank_areas;
        let [b1, b2] = p.valve_splits;
        let s: [f64; 4] = std::array::from_fn(|i| outflow_slope(p, x, i));

        let mut a = Matrix::identity(4, 4);
        a[(0, 0)] -= ts * s[0] / a1;
        a[(0, 2)] += ts * s[2] / a1;
        a[(1, 1)] -= ts * s[1] / a2;
        a[(1, 3)] += ts * s[3] / a2;
        a[(2, 2)] -= ts * s[2] / a3;
        a[(3, 3)] -= ts * s[3] / a4;

        let mut b = Matrix::zeros(4, 2);
        b[(0, 0)] = ts * b1 / a1;
        b[(1, 1)] = ts * b2 / a2;
        b[(2, 1)] = ts * (1.0 - b2) / a3;
        b[(3, 0)] = ts * (1.0 - b1) / a4;

        for i in 0..4 {
            if y[i] < 0.0 {
                a.row_mut(i).fill(0.0);
                b.row_mut(i).fill(0.0);
            }
        }
        Ok((a, b))
    }
}

/// Euler discretization `x⁺ = max(x + T_s·ẋ, 0)` of the four-tank process.
pub fn euler_discretize(p: &FourTankParams, z_box: ConstraintBox) -> Result<DiscreteSystem> {
    DiscreteSystem::new(Arc::new(FourTank::new(p.clone())?), z_box)
}
