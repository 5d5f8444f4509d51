//! Convex bounds used to build each SCA subproblem. Every bound is tight at
//! its expansion point.

use num_complex::Complex64;

/// First-order lower bound of `|cᵀx|²` around `x_n`.
pub fn taylor_lb_quadratic(c: &[Complex64], x: &[f64], x_n: &[f64]) -> f64 {
    let z_n: Complex64 = c.iter().zip(x_n).map(|(c, &v)| c * v).sum();
    let step: Complex64 = c.iter().zip(x.iter().zip(x_n)).map(|(c, (&a, &b))| c * (a - b)).sum();
    z_n.norm_sqr() + 2.0 * (z_n.conj() * step).re
}

/// Linear coefficients `g` and constant `r` with
/// `taylor_lb_quadratic(c, x, x_n) = gᵀx + r`.
pub fn taylor_lb_affine(c: &[Complex64], x_n: &[f64]) -> (Vec<f64>, f64) {
    let z_n: Complex64 = c.iter().zip(x_n).map(|(c, &v)| c * v).sum();
    let g = c.iter().map(|c| 2.0 * (z_n.conj() * c).re).collect();
    (g, -z_n.norm_sqr())
}

/// Convex upper bound of `xy`.
pub fn bilinear_upper(x: f64, y: f64, x_n: f64, y_n: f64) -> f64 {
    let d_n = x_n - y_n;
    0.25 * ((x + y).powi(2) - 2.0 * d_n * (x - y) + d_n * d_n)
}

/// Concave lower bound of `xy`.
pub fn bilinear_lower(x: f64, y: f64, x_n: f64, y_n: f64) -> f64 {
    let s_n = x_n + y_n;
    0.25 * (2.0 * s_n * (x + y) - s_n * s_n - (x - y).powi(2))
}

/// Tangent of the concave `x(1 - x)` at `x_n`; never below it.
pub fn penalty_tangent(x: f64, x_n: f64) -> f64 {
    (1.0 - 2.0 * x_n) * x + x_n * x_n
}

/// Tangent of the convex `x²` at `x_n`; never above it.
pub fn square_tangent(x: f64, x_n: f64) -> f64 {
    2.0 * x_n * x - x_n * x_n
}
