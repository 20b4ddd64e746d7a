//! Small dense-matrix helpers shared across the decomposition modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Largest entry magnitude of a complex matrix.
pub fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry magnitude of a complex vector.
pub fn max_abs_vec(v: &DVector<Complex64>) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max |a - b| / max(scale, floor)` over all entries.
pub fn rel_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, scale: f64) -> f64 {
    let denom = scale.max(1e-300);
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
        / denom
}

/// Promotes a real matrix to complex entries.
pub fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Frobenius-normalized residual `‖a − b‖_F / max(‖b‖_F, floor)`.
pub fn rel_residual(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let diff = a - b;
    diff.norm() / b.norm().max(1e-300)
}
