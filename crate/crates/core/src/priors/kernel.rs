//! Moment-matched covariance estimates from sampled deviations.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VipError};
use crate::numkit::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// `(1/S) Σ_s Δ_s(x_i) Δ_s(x_j)`.
    #[default]
    Mle,
    /// Inverse-Wishart posterior mean with `Ψ = ψ·δ`:
    /// `(Σ_s Δ_s(x_i) Δ_s(x_j) + ψ·[i = j]) / (ν + S − N − 1)`.
    Pm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default)]
    pub psi: f64,
    /// Degrees of freedom `ν`; `None` means `ν = N`, the number of evaluation points.
    #[serde(default)]
    pub nu: Option<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig::mle()
    }
}

impl KernelConfig {
    pub fn mle() -> Self {
        KernelConfig { estimator: Estimator::Mle, psi: 0.0, nu: None }
    }

    pub fn pm(psi: f64) -> Self {
        KernelConfig { estimator: Estimator::Pm, psi, nu: None }
    }

    /// Divisor applied to `Σ_s Δ_s Δ_s` for `s` draws on `n` points.
    pub fn denominator(&self, s: usize, n: usize) -> Result<f64> {
        match self.estimator {
            Estimator::Mle => Ok(s as f64),
            Estimator::Pm => {
                let nu = self.nu.unwrap_or(n as f64);
                let d = nu + s as f64 - n as f64 - 1.0;
                if d <= 0.0 {
                    Err(VipError::Parameter(format!("PM estimator denominator ν + S − N − 1 = {d} is not positive")))
                } else {
                    Ok(d)
                }
            }
        }
    }

    fn diagonal_term(&self) -> f64 {
        match self.estimator {
            Estimator::Mle => 0.0,
            Estimator::Pm => self.psi,
        }
    }
}

/// One entry of the estimated kernel from `S x N` deviations.
pub fn empirical_kernel(delta: &Matrix, i: usize, j: usize, cfg: &KernelConfig) -> Result<f64> {
    let (s, n) = delta.shape();
    if i >= n || j >= n {
        return Err(VipError::dim("empirical_kernel", format!("index ({i}, {j}) out of range for {n} points")));
    }
    let denom = cfg.denominator(s, n)?;
    let raw: f64 = (0..s).map(|k| delta[(k, i)] * delta[(k, j)]).sum();
    let diag = if i == j { cfg.diagonal_term() } else { 0.0 };
    Ok((raw + diag) / denom)
}

/// Full `N x N` kernel matrix from `S x N` deviations.
pub fn kernel_matrix(delta: &Matrix, cfg: &KernelConfig) -> Result<Matrix> {
    let (s, n) = delta.shape();
    let denom = cfg.denominator(s, n)?;
    let mut k = delta.t_matmul(delta)?;
    let diag = cfg.diagonal_term();
    for i in 0..n {
        k[(i, i)] += diag;
    }
    Ok(k.scale(1.0 / denom).symmetrize())
}
