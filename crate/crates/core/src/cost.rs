//! Quadratic tracking stage cost.
//!
//! Everything is evaluated on the shifted coordinates `x − x_s`, `u − u_s`,
//! so setpoint tracking reduces to stabilizing the origin.

use crate::error::check_dim;
use crate::linalg::weighted_sq_norm;
use crate::model::ConstraintBox;
use crate::{Error, Result, Vector};

/// `ℓ(x, u) = ‖x − x_s‖²_Q + ‖u − u_s‖²_R` with diagonal `Q`, `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticStageCost {
    x_s: Vector,
    u_s: Vector,
    q_diag: Vector,
    r_diag: Vector,
}

impl QuadraticStageCost {
    pub fn new(x_s: Vector, u_s: Vector, q_diag: Vector, r_diag: Vector) -> Result<Self> {
        check_dim("state weight", x_s.len(), q_diag.len())?;
        check_dim("input weight", u_s.len(), r_diag.len())?;
        if q_diag
            .iter()
            .chain(r_diag.iter())
            .any(|w| !(w.is_finite() && *w > 0.0))
        {
            return Err(Error::InvalidParameter(
                "stage cost weights must be strictly positive".into(),
            ));
        }
        Ok(Self {
            x_s,
            u_s,
            q_diag,
            r_diag,
        })
    }

    pub fn x_s(&self) -> &Vector {
        &self.x_s
    }

    pub fn u_s(&self) -> &Vector {
        &self.u_s
    }

    pub fn q_diag(&self) -> &Vector {
        &self.q_diag
    }

    pub fn r_diag(&self) -> &Vector {
        &self.r_diag
    }

    pub fn state_dim(&self) -> usize {
        self.x_s.len()
    }

    pub fn input_dim(&self) -> usize {
        self.u_s.len()
    }

    pub fn stage_cost(&self, x: &Vector, u: &Vector) -> Result<f64> {
        check_dim("stage cost state", self.state_dim(), x.len())?;
        check_dim("stage cost input", self.input_dim(), u.len())?;
        Ok(self.state_part(x) + weighted_sq_norm(&(u - &self.u_s), &self.r_diag))
    }

    /// `ℓ_min(x) = inf_{u ∈ U} ℓ(x, u)`, closed form for a box `U`:
    /// the minimizer is `u_s` clipped to the box.
    pub fn stage_cost_min(&self, z_box: &ConstraintBox, x: &Vector) -> Result<f64> {
        check_dim("stage cost state", self.state_dim(), x.len())?;
        let clipped = z_box.project_input(&self.u_s);
        Ok(self.state_part(x) + weighted_sq_norm(&(clipped - &self.u_s), &self.r_diag))
    }

    /// `‖x − x_s‖²_Q`.
    pub(crate) fn state_part(&self, x: &Vector) -> f64 {
        weighted_sq_norm(&(x - &self.x_s), &self.q_diag)
    }

    /// Gradients `(∂ℓ/∂x, ∂ℓ/∂u)`.
    pub(crate) fn gradients(&self, x: &Vector, u: &Vector) -> (Vector, Vector) {
        let gx = (x - &self.x_s).component_mul(&self.q_diag) * 2.0;
        let gu = (u - &self.u_s).component_mul(&self.r_diag) * 2.0;
        (gx, gu)
    }

    pub fn q_min(&self) -> f64 {
        self.q_diag.min()
    }

    pub fn q_max(&self) -> f64 {
        self.q_diag.max()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tank_cost() -> QuadraticStageCost {
        QuadraticStageCost::new(
            Vector::from_vec(vec![14.0, 14.0, 14.2, 21.3]),
            Vector::from_vec(vec![43.0, 35.0]),
            Vector::from_vec(vec![1.0, 1.0, 1e-2, 1e-2]),
            Vector::from_vec(vec![1e-4, 1e-4]),
        )
        .unwrap()
    }

    fn tank_box() -> ConstraintBox {
        ConstraintBox::new(
            Vector::from_element(4, 0.0),
            Vector::from_element(4, 30.0),
            Vector::from_element(2, 0.0),
            Vector::from_element(2, 60.0),
        )
        .unwrap()
    }

    #[test]
    fn zero_at_setpoint() {
        let c = tank_cost();
        assert_eq!(c.stage_cost(c.x_s(), c.u_s()).unwrap(), 0.0);
        assert_eq!(c.stage_cost_min(&tank_box(), c.x_s()).unwrap(), 0.0);
    }

    #[test]
    fn unit_deviation_in_first_level() {
        let c = tank_cost();
        let x = c.x_s() + Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(c.stage_cost(&x, c.u_s()).unwrap(), 1.0);
    }

    #[test]
    fn mixed_state_and_input_deviation() {
        let c = tank_cost();
        let x = c.x_s() + Vector::from_vec(vec![0.0, 0.0, 10.0, 0.0]);
        let u = c.u_s() + Vector::from_vec(vec![100.0, 0.0]);
        assert!((c.stage_cost(&x, &u).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let c = tank_cost();
        assert!(c.stage_cost(&Vector::zeros(3), c.u_s()).is_err());
    }

    #[test]
    fn non_positive_weight_rejected() {
        assert!(QuadraticStageCost::new(
            Vector::zeros(1),
            Vector::zeros(1),
            Vector::from_element(1, 0.0),
            Vector::from_element(1, 1.0),
        )
        .is_err());
    }

    #[test]
    fn min_cost_with_interior_setpoint_is_state_part() {
        let c = tank_cost();
        let x = c.x_s() + Vector::from_vec(vec![0.5, -2.0, 3.0, 1.0]);
        let expected = 0.25 + 4.0 + 0.09 + 0.01;
        assert!((c.stage_cost_min(&tank_box(), &x).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn min_cost_with_infeasible_setpoint_uses_clip_distance() {
        let c = QuadraticStageCost::new(
            Vector::zeros(1),
            Vector::from_element(1, 2.0),
            Vector::from_element(1, 1.0),
            Vector::from_element(1, 1.0),
        )
        .unwrap();
        let z = ConstraintBox::new(
            Vector::from_element(1, -5.0),
            Vector::from_element(1, 5.0),
            Vector::from_element(1, 0.0),
            Vector::from_element(1, 1.0),
        )
        .unwrap();
        assert_eq!(c.stage_cost_min(&z, &Vector::zeros(1)).unwrap(), 1.0);
    }
}
