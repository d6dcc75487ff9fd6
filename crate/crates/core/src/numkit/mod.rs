//! Dense linear algebra, special functions and seeded random numbers.

mod linalg;
mod matrix;
mod rng;

pub use linalg::{
    cholesky, cholesky_inverse, cholesky_jittered, cholesky_log_det, cholesky_solve, solve_triangular,
    solve_triangular_matrix, symmetric_eigenvalues,
};
pub use matrix::{dot, Matrix};
pub use rng::{derive_seed, streams, Rng};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

/// Logistic sigmoid, the derivative of softplus.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log density of `N(y; mean, var)`.
pub fn normal_log_pdf(y: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln()) - (y - mean).powi(2) / (2.0 * var)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation (divides by n).
pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}
