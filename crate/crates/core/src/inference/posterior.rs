use serde::{Deserialize, Serialize};

use crate::error::{Result, VipError};
use crate::numkit::{cholesky, softplus, softplus_inv, Matrix};

/// Gaussian `q(a) = N(μ, L·Lᵀ)` over the `S` regression coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientPosterior {
    pub mu: Vec<f64>,
    /// Lower triangular with positive diagonal.
    pub chol_factor: Matrix,
}

impl CoefficientPosterior {
    /// The prior `N(0, I)`.
    pub fn standard(s: usize) -> Self {
        CoefficientPosterior { mu: vec![0.0; s], chol_factor: Matrix::identity(s) }
    }

    pub fn new(mu: Vec<f64>, chol_factor: Matrix) -> Result<Self> {
        let s = mu.len();
        if chol_factor.shape() != (s, s) {
            return Err(VipError::dim(
                "coefficient_posterior",
                format!("mean of length {s} with {}x{} factor", chol_factor.rows(), chol_factor.cols()),
            ));
        }
        Ok(CoefficientPosterior { mu, chol_factor })
    }

    /// Builds the posterior from a full covariance via Cholesky.
    pub fn from_covariance(mu: Vec<f64>, cov: &Matrix) -> Result<Self> {
        let l = cholesky(&cov.symmetrize())?;
        CoefficientPosterior::new(mu, l)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn covariance(&self) -> Matrix {
        self.chol_factor.matmul_t(&self.chol_factor).expect("square factor")
    }

    /// `φᵀμ`.
    pub fn mean_projection(&self, phi: &[f64]) -> f64 {
        crate::numkit::dot(phi, &self.mu)
    }

    /// `φᵀΣφ = ‖Lᵀφ‖²`.
    pub fn variance_projection(&self, phi: &[f64]) -> f64 {
        let l = &self.chol_factor;
        let s = self.dim();
        (0..s)
            .map(|j| {
                let c: f64 = (j..s).map(|i| l[(i, j)] * phi[i]).sum();
                c * c
            })
            .sum()
    }
}

/// Unconstrained parameterization of `q(a)` used during training: the
/// factor is `strict_lower(raw) + diag(softplus(diag(raw)))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalParams {
    /// `S x 1`.
    pub mu: Matrix,
    /// `S x S`; entries above the diagonal are ignored.
    pub raw_chol: Matrix,
}

impl VariationalParams {
    /// `μ = 0`, `L = I`.
    pub fn standard(s: usize) -> Self {
        let d = softplus_inv(1.0);
        let raw_chol = Matrix::from_fn(s, s, |i, j| if i == j { d } else { 0.0 });
        VariationalParams { mu: Matrix::zeros(s, 1), raw_chol }
    }

    pub fn dim(&self) -> usize {
        self.mu.rows()
    }

    pub fn posterior(&self) -> CoefficientPosterior {
        let raw = &self.raw_chol;
        let l = Matrix::from_fn(raw.rows(), raw.cols(), |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => raw[(i, j)],
            std::cmp::Ordering::Equal => softplus(raw[(i, j)]),
            std::cmp::Ordering::Less => 0.0,
        });
        CoefficientPosterior { mu: self.mu.as_slice().to_vec(), chol_factor: l }
    }

    pub fn from_posterior(q: &CoefficientPosterior) -> Result<Self> {
        let l = &q.chol_factor;
        if let Some(i) = (0..q.dim()).find(|&i| !(l[(i, i)] > 0.0)) {
            return Err(VipError::Parameter(format!("factor diagonal at {i} is not positive")));
        }
        let raw_chol = Matrix::from_fn(l.rows(), l.cols(), |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => l[(i, j)],
            std::cmp::Ordering::Equal => softplus_inv(l[(i, j)]),
            std::cmp::Ordering::Less => 0.0,
        });
        Ok(VariationalParams { mu: Matrix::column(&q.mu), raw_chol })
    }
}
