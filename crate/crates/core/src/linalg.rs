//! Small dense linear-algebra helpers shared across modules.

use crate::{Matrix, Vector};

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn is_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Weighted squared norm `Σ w_i v_i²` for a diagonal weight.
pub fn weighted_sq_norm(v: &Vector, diag: &Vector) -> f64 {
    v.iter().zip(diag.iter()).map(|(a, w)| w * a * a).sum()
}
