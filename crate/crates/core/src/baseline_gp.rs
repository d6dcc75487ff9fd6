//! Exact GP regression with an RBF kernel and zero mean, used as a
//! comparison baseline. Hyperparameters are chosen by grid search on the log
//! marginal likelihood.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VipError};
use crate::numkit::{cholesky, cholesky_jittered, cholesky_log_det, cholesky_solve, solve_triangular, solve_triangular_matrix, Matrix, LN_2PI};
use crate::predict::PredictiveDistribution;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbfKernel {
    pub lengthscale: f64,
    pub signal_variance: f64,
}

impl RbfKernel {
    pub fn new(lengthscale: f64, signal_variance: f64) -> Result<Self> {
        let k = RbfKernel { lengthscale, signal_variance };
        k.validate()?;
        Ok(k)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(VipError::Parameter(format!("lengthscale must be positive, got {}", self.lengthscale)));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(VipError::Parameter(format!("signal variance must be positive, got {}", self.signal_variance)));
        }
        Ok(())
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_variance * (-0.5 * d2 / (self.lengthscale * self.lengthscale)).exp()
    }

    /// Cross-covariance between the rows of `a` and `b`.
    pub fn cross(&self, a: &Matrix, b: &Matrix) -> Result<Matrix> {
        if a.cols() != b.cols() {
            return Err(VipError::dim("rbf_kernel", format!("{} vs {} input columns", a.cols(), b.cols())));
        }
        Ok(Matrix::from_fn(a.rows(), b.rows(), |i, j| self.eval(a.row_slice(i), b.row_slice(j))))
    }

    pub fn gram(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.cross(x, x)?.symmetrize())
    }
}

fn check_inputs(x: &Matrix, y: &[f64], sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0) {
        return Err(VipError::Parameter(format!("σ² must be positive, got {sigma2}")));
    }
    if x.rows() != y.len() {
        return Err(VipError::dim("gp", format!("{} input rows, {} targets", x.rows(), y.len())));
    }
    Ok(())
}

// Jitter only enters when the plain factorization fails.
fn factor(kernel: &RbfKernel, x: &Matrix, sigma2: f64) -> Result<Matrix> {
    let k = kernel.gram(x)?.add_diag(sigma2);
    cholesky(&k).or_else(|_| cholesky_jittered(&k, JITTER_START, JITTER_MAX))
}

/// Posterior predictive at `x_star` with full covariance.
pub fn gp_predict(kernel: &RbfKernel, x: &Matrix, y: &[f64], sigma2: f64, x_star: &Matrix) -> Result<PredictiveDistribution> {
    kernel.validate()?;
    check_inputs(x, y, sigma2)?;
    let k_ss = kernel.gram(x_star)?;
    if x.rows() == 0 {
        return PredictiveDistribution::new(vec![0.0; x_star.rows()], k_ss.diag(), sigma2, Some(k_ss));
    }
    let l = factor(kernel, x, sigma2)?;
    let k_fs = kernel.cross(x, x_star)?;
    let weights = cholesky_solve(&l, y)?;
    let mean = k_fs.transpose().matvec(&weights)?;
    let v = solve_triangular_matrix(&l, &k_fs, false)?;
    let cov = k_ss.sub(&v.t_matmul(&v)?)?.symmetrize();
    PredictiveDistribution::new(mean, cov.diag(), sigma2, Some(cov))
}

/// `log N(y; 0, K + σ²I)`.
pub fn gp_log_marginal(kernel: &RbfKernel, x: &Matrix, y: &[f64], sigma2: f64) -> Result<f64> {
    kernel.validate()?;
    check_inputs(x, y, sigma2)?;
    let l = factor(kernel, x, sigma2)?;
    let z = solve_triangular(&l, y, false)?;
    let quad: f64 = z.iter().map(|v| v * v).sum();
    Ok(-0.5 * (quad + cholesky_log_det(&l) + y.len() as f64 * LN_2PI))
}

/// Candidate values for [`gp_fit_grid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpGrid {
    pub lengthscale: Vec<f64>,
    pub signal_variance: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl Default for GpGrid {
    fn default() -> Self {
        GpGrid {
            lengthscale: vec![0.1, 0.25, 0.5, 1.0, 2.0, 4.0],
            signal_variance: vec![0.25, 0.5, 1.0, 2.0],
            sigma2: vec![0.001, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpFit {
    pub kernel: RbfKernel,
    pub sigma2: f64,
    pub log_marginal: f64,
}

/// Exhaustive search for the maximum marginal likelihood. Ties go to the
/// smallest lengthscale, then the smallest σ².
pub fn gp_fit_grid(x: &Matrix, y: &[f64], grid: &GpGrid) -> Result<GpFit> {
    if grid.lengthscale.is_empty() || grid.signal_variance.is_empty() || grid.sigma2.is_empty() {
        return Err(VipError::Parameter("every GP grid axis needs at least one value".into()));
    }
    let sorted = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (ls, sv, s2) = (sorted(&grid.lengthscale), sorted(&grid.signal_variance), sorted(&grid.sigma2));
    let mut best: Option<GpFit> = None;
    for &l in &ls {
        for &noise in &s2 {
            for &v in &sv {
                let kernel = RbfKernel::new(l, v)?;
                let lm = gp_log_marginal(&kernel, x, y, noise)?;
                // strict improvement keeps the earliest (smallest) cell on ties
                if best.map_or(true, |b| lm > b.log_marginal) {
                    best = Some(GpFit { kernel, sigma2: noise, log_marginal: lm });
                }
            }
        }
    }
    Ok(best.expect("non-empty grid"))
}
