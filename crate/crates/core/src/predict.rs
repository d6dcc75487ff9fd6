//! Posterior predictive distributions.
//!
//! The dense path conditions the empirical GP on the training targets with an
//! `N x N` Cholesky. The feature path works in the `S`-dimensional
//! coefficient space and costs `O(S³)` plus a linear pass over test points.
//! With the exact coefficient posterior and the MLE kernel the two agree.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VipError};
use crate::inference::{CoefficientPosterior, VariationalParams};
use crate::numkit::{
    cholesky, cholesky_inverse, cholesky_jittered, cholesky_solve, normal_log_pdf, solve_triangular_matrix, streams,
    Matrix, Rng,
};
use crate::priors::{kernel_matrix, Estimator, KernelConfig, PriorParams};

const VAR_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDistribution {
    pub mean: Vec<f64>,
    pub var_f: Vec<f64>,
    pub var_y: Vec<f64>,
    pub cov: Option<Matrix>,
}

impl PredictiveDistribution {
    /// Checks `var_f ≥ −1e-10`, clamps to zero and adds the noise.
    pub fn new(mean: Vec<f64>, var_f: Vec<f64>, sigma2: f64, cov: Option<Matrix>) -> Result<Self> {
        if mean.len() != var_f.len() {
            return Err(VipError::dim("predictive", format!("{} means, {} variances", mean.len(), var_f.len())));
        }
        if let Some(i) = var_f.iter().position(|v| !(*v >= -VAR_TOL)) {
            return Err(VipError::Contract(format!("negative predictive variance {} at point {i}", var_f[i])));
        }
        let var_f: Vec<f64> = var_f.into_iter().map(|v| v.max(0.0)).collect();
        let var_y = var_f.iter().map(|v| v + sigma2).collect();
        Ok(PredictiveDistribution { mean, var_f, var_y, cov })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// `S` sampled functions at a set of points, reduced to the moment-matched
/// mean `m*` and the deviations `Δ` (`S x N`).
#[derive(Clone, Debug, PartialEq)]
pub struct DrawSet {
    pub m_star: Vec<f64>,
    pub delta: Matrix,
}

impl DrawSet {
    /// From an `S x N` matrix of function values.
    pub fn from_values(values: &Matrix) -> Result<Self> {
        let (s, n) = values.shape();
        if s < 2 {
            return Err(VipError::Parameter(format!("need at least 2 function draws, got {s}")));
        }
        let m_star: Vec<f64> = (0..n).map(|j| (0..s).map(|k| values[(k, j)]).sum::<f64>() / s as f64).collect();
        let delta = Matrix::from_fn(s, n, |k, j| values[(k, j)] - m_star[j]);
        Ok(DrawSet { m_star, delta })
    }

    pub fn num_draws(&self) -> usize {
        self.delta.rows()
    }

    pub fn num_points(&self) -> usize {
        self.m_star.len()
    }

    /// Columns `start..end`.
    pub fn columns(&self, start: usize, end: usize) -> DrawSet {
        DrawSet { m_star: self.m_star[start..end].to_vec(), delta: self.delta.col_range(start, end) }
    }

    /// `B = Δᵀ/√S`, one feature row per point.
    pub fn features(&self) -> Matrix {
        self.delta.transpose().scale(1.0 / (self.num_draws() as f64).sqrt())
    }
}

/// The exact posterior of the coefficients in `y_c = B·a + ε`, `a ~ N(0, I)`:
/// `Σ = σ²(BᵀB + σ²I)⁻¹`, `μ = Σ·Bᵀ·y_c/σ²`.
pub fn exact_coefficient_posterior(b: &Matrix, y_centered: &[f64], sigma2: f64) -> Result<CoefficientPosterior> {
    if !(sigma2 > 0.0) {
        return Err(VipError::Parameter(format!("σ² must be positive, got {sigma2}")));
    }
    if b.rows() != y_centered.len() {
        return Err(VipError::dim("exact_coefficient_posterior", format!("{} feature rows, {} targets", b.rows(), y_centered.len())));
    }
    if !b.is_finite() {
        return Err(VipError::Parameter("features contain non-finite values".into()));
    }
    let a = b.t_matmul(b)?.add_diag(sigma2).symmetrize();
    let l = cholesky(&a)?;
    let bty = b.transpose().matvec(y_centered)?;
    let mu = cholesky_solve(&l, &bty)?;
    let cov = cholesky_inverse(&l)?.scale(sigma2);
    CoefficientPosterior::from_covariance(mu, &cov)
}

/// Dense GP predictive from deviations over the training and test points.
///
/// Both draw sets must come from the same `S` functions. The kernel is
/// built over the joint point set and sliced into blocks.
pub fn predict_dense(
    train: &DrawSet,
    y: &[f64],
    test: &DrawSet,
    sigma2: f64,
    kernel: &KernelConfig,
) -> Result<PredictiveDistribution> {
    if train.num_draws() != test.num_draws() {
        return Err(VipError::Contract(format!(
            "train draws have S = {}, test draws S = {}",
            train.num_draws(),
            test.num_draws()
        )));
    }
    if y.len() != train.num_points() {
        return Err(VipError::dim("predict_dense", format!("{} targets for {} training points", y.len(), train.num_points())));
    }
    if !(sigma2 > 0.0) {
        return Err(VipError::Parameter(format!("σ² must be positive, got {sigma2}")));
    }
    let (n, k) = (train.num_points(), test.num_points());
    let s = train.num_draws();
    let joint_delta = Matrix::from_fn(s, n + k, |r, c| if c < n { train.delta[(r, c)] } else { test.delta[(r, c - n)] });
    let joint = kernel_matrix(&joint_delta, kernel)?;
    let k_ss = Matrix::from_fn(k, k, |i, j| joint[(n + i, n + j)]);
    if n == 0 {
        let var_f = k_ss.diag();
        return PredictiveDistribution::new(test.m_star.clone(), var_f, sigma2, Some(k_ss));
    }
    let k_ff = Matrix::from_fn(n, n, |i, j| joint[(i, j)]).add_diag(sigma2);
    let k_fs = Matrix::from_fn(n, k, |i, j| joint[(i, n + j)]);
    let l = cholesky(&k_ff).or_else(|_| cholesky_jittered(&k_ff, 1e-10, 1e-6))?;
    let resid: Vec<f64> = y.iter().zip(&train.m_star).map(|(a, b)| a - b).collect();
    let weights = cholesky_solve(&l, &resid)?;
    let shift = k_fs.transpose().matvec(&weights)?;
    let mean = test.m_star.iter().zip(&shift).map(|(a, b)| a + b).collect();
    let v = solve_triangular_matrix(&l, &k_fs, false)?;
    let cov = k_ss.sub(&v.t_matmul(&v)?)?.symmetrize();
    PredictiveDistribution::new(mean, cov.diag(), sigma2, Some(cov))
}

/// Feature-space predictive: `mean = m* + φᵀμ`, `var_f = ‖Lᵀφ‖²`.
pub fn predict_features(test: &DrawSet, q: &CoefficientPosterior, sigma2: f64) -> Result<PredictiveDistribution> {
    if test.num_draws() != q.dim() {
        return Err(VipError::Contract(format!("test draws have S = {}, q has dimension {}", test.num_draws(), q.dim())));
    }
    let phi = test.features();
    let mut mean = Vec::with_capacity(test.num_points());
    let mut var_f = Vec::with_capacity(test.num_points());
    for (i, m) in test.m_star.iter().enumerate() {
        let p = phi.row_slice(i);
        mean.push(m + q.mean_projection(p));
        var_f.push(q.variance_projection(p));
    }
    PredictiveDistribution::new(mean, var_f, sigma2, None)
}

/// Test metrics on the original target scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub nll: f64,
    pub rmse: f64,
}

/// Average Gaussian NLL and RMSE. `target_std` rescales standardized
/// predictions back to the original units (pass 1 for none).
pub fn nll_rmse(pred: &PredictiveDistribution, y_true: &[f64], target_std: f64) -> Result<Metrics> {
    if pred.len() != y_true.len() {
        return Err(VipError::dim("nll_rmse", format!("{} predictions, {} targets", pred.len(), y_true.len())));
    }
    if y_true.is_empty() {
        return Err(VipError::Parameter("no test targets".into()));
    }
    if !(target_std > 0.0) {
        return Err(VipError::Parameter(format!("target std must be positive, got {target_std}")));
    }
    if let Some(i) = pred.var_y.iter().position(|v| !(*v > 0.0)) {
        return Err(VipError::Contract(format!("predictive variance {} at point {i} is not positive", pred.var_y[i])));
    }
    let n = y_true.len() as f64;
    let mut nll = 0.0;
    let mut se = 0.0;
    for ((y, m), v) in y_true.iter().zip(&pred.mean).zip(&pred.var_y) {
        nll -= normal_log_pdf(*y, *m, *v);
        se += (y - m) * (y - m);
    }
    Ok(Metrics { nll: nll / n + target_std.ln(), rmse: (se / n).sqrt() * target_std })
}

/// Which coefficient posterior pairs with the prediction-time draws.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMode {
    /// The trained `q(a)` with draws at the test points only.
    Learned,
    /// The exact posterior refitted on draws over train and test points.
    #[default]
    Exact,
}

impl CoefficientMode {
    /// `exact` up to 2000 training points, `learned` above.
    pub fn default_for(n_train: usize) -> Self {
        if n_train <= 2000 {
            CoefficientMode::Exact
        } else {
            CoefficientMode::Learned
        }
    }
}

/// Everything needed to predict from a trained prior.
pub struct Predictor<'a> {
    pub prior: &'a PriorParams,
    pub variational: &'a VariationalParams,
    pub sigma2: f64,
    pub kernel: KernelConfig,
    /// Seed of the dedicated prediction stream.
    pub seed: u64,
}

impl Predictor<'_> {
    fn draws(&self, x: &Matrix) -> Result<DrawSet> {
        let mut rng = Rng::new(self.seed, streams::PREDICT);
        DrawSet::from_values(&self.prior.sample_values(x, self.variational.dim(), &mut rng)?)
    }

    /// Predictive distribution at `x_test`. The exact mode needs the
    /// training set; a PM kernel there goes through the dense path.
    pub fn predict(
        &self,
        x_test: &Matrix,
        train: Option<(&Matrix, &[f64])>,
        mode: CoefficientMode,
    ) -> Result<PredictiveDistribution> {
        match mode {
            CoefficientMode::Learned => predict_features(&self.draws(x_test)?, &self.variational.posterior(), self.sigma2),
            CoefficientMode::Exact => {
                let (x_train, y_train) =
                    train.ok_or_else(|| VipError::Parameter("exact coefficient mode needs the training data".into()))?;
                let n = x_train.rows();
                let joint = self.draws(&x_train.vstack(x_test)?)?;
                let (tr, te) = (joint.columns(0, n), joint.columns(n, joint.num_points()));
                match self.kernel.estimator {
                    Estimator::Mle => {
                        let resid: Vec<f64> = y_train.iter().zip(&tr.m_star).map(|(a, b)| a - b).collect();
                        let q = exact_coefficient_posterior(&tr.features(), &resid, self.sigma2)?;
                        predict_features(&te, &q, self.sigma2)
                    }
                    Estimator::Pm => {
                        let mut p = predict_dense(&tr, y_train, &te, self.sigma2, &self.kernel)?;
                        p.cov = None;
                        Ok(p)
                    }
                }
            }
        }
    }
}
