//! The α-energy of the Bayesian linear regression surrogate.
//!
//! With features `φ(x)_s = Δ_s(x)/√S`, the surrogate likelihood is
//! `y ~ N(m*(x) + φ(x)ᵀa, σ²)`. Under `q(a) = N(μ, LLᵀ)` the mean
//! `m*(x) + φᵀa` is Gaussian with variance `s² = ‖Lᵀφ‖²`, so
//! `E_q[N(y; ·, σ²)^α]` has a closed form and no Monte Carlo over `a` is
//! needed.

use crate::autodiff::Var;
use crate::error::{Result, VipError};
use crate::numkit::{normal_log_pdf, LN_2PI};
use crate::priors::FunctionDraws;

use super::posterior::CoefficientPosterior;

fn residual_and_spread(y: f64, m: f64, phi: &[f64], q: &CoefficientPosterior) -> Result<(f64, f64)> {
    if phi.len() != q.dim() {
        return Err(VipError::dim("local_term", format!("φ has length {}, q has dimension {}", phi.len(), q.dim())));
    }
    Ok((y - m - q.mean_projection(phi), q.variance_projection(phi)))
}

/// `log E_q[N(y; m + φᵀa, σ²)^α]` for `α > 0`.
pub fn alpha_local_term(
    y: f64,
    m: f64,
    phi: &[f64],
    q: &CoefficientPosterior,
    alpha: f64,
    sigma2: f64,
) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(VipError::Contract(format!("alpha_local_term needs α > 0 (got {alpha}); use elbo_local_term")));
    }
    if !(sigma2 > 0.0) {
        return Err(VipError::Parameter(format!("σ² must be positive, got {sigma2}")));
    }
    let (r, s2) = residual_and_spread(y, m, phi, q)?;
    let v = s2 + sigma2 / alpha;
    // ½log(σ²/α) − ½log v, kept accurate for small α
    Ok(-0.5 * alpha * (LN_2PI + sigma2.ln()) - 0.5 * (alpha * s2 / sigma2).ln_1p() - r * r / (2.0 * v))
}

/// `E_q[log N(y; m + φᵀa, σ²)]`, the `α → 0` limit of the scaled α-term.
pub fn elbo_local_term(y: f64, m: f64, phi: &[f64], q: &CoefficientPosterior, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(VipError::Parameter(format!("σ² must be positive, got {sigma2}")));
    }
    let (r, s2) = residual_and_spread(y, m, phi, q)?;
    Ok(normal_log_pdf(r, 0.0, sigma2) - s2 / (2.0 * sigma2))
}

/// `KL[N(μ, LLᵀ) ‖ N(0, I)]`.
pub fn kl_to_standard_normal(q: &CoefficientPosterior) -> f64 {
    let l = &q.chol_factor;
    let s = q.dim();
    let mu2: f64 = q.mu.iter().map(|m| m * m).sum();
    let tr: f64 = l.as_slice().iter().map(|v| v * v).sum();
    let logdet: f64 = (0..s).map(|i| l[(i, i)].ln()).sum();
    0.5 * (mu2 + tr - s as f64 - 2.0 * logdet)
}

/// Tape handles for the variational distribution.
#[derive(Clone, Copy, Debug)]
pub struct QVars<'t> {
    /// `S x 1`.
    pub mu: Var<'t>,
    /// Lower-triangular factor `L`, `S x S`.
    pub chol: Var<'t>,
}

impl<'t> QVars<'t> {
    /// Maps an unconstrained `raw` matrix to the factor.
    pub fn from_raw(mu: Var<'t>, raw: Var<'t>) -> Result<Self> {
        Ok(QVars { mu, chol: raw.lower_softplus_diag()? })
    }
}

/// The pieces of the minimization loss `KL − data_term`.
#[derive(Clone, Copy, Debug)]
pub struct EnergyTerms<'t> {
    pub loss: Var<'t>,
    /// `(N/(αM)) Σ_m log E_q[q*(y_m)^α]`, or `(N/M) Σ_m E_q[log q*(y_m)]` at α = 0.
    pub data_term: Var<'t>,
    pub kl: Var<'t>,
}

/// KL of `q` to `N(0, I)` on the tape.
pub fn kl_var<'t>(q: &QVars<'t>) -> Result<Var<'t>> {
    let s = q.mu.shape().0 as f64;
    let mu2 = q.mu.square().sum();
    let tr = q.chol.square().sum();
    let logdet = q.chol.diag()?.log().sum();
    Ok(mu2.add(&tr)?.sub(&logdet.scale(2.0))?.shift(-s).scale(0.5))
}

/// Negated α-energy for one minibatch, ready for minimization.
///
/// `draws` must be evaluated at the batch inputs (one column per target in
/// `y`); `sigma2` is a 1x1 node.
pub fn alpha_energy_terms<'t>(
    y: &[f64],
    draws: &FunctionDraws<'t>,
    q: &QVars<'t>,
    sigma2: Var<'t>,
    alpha: f64,
    n_total: usize,
) -> Result<EnergyTerms<'t>> {
    let tape = draws.values.tape();
    let (s, m) = draws.delta.shape();
    if m != y.len() {
        return Err(VipError::dim("alpha_energy", format!("{m} draw columns for {} targets", y.len())));
    }
    if q.mu.shape() != (s, 1) {
        return Err(VipError::dim("alpha_energy", format!("q has dimension {}, draws have S = {s}", q.mu.shape().0)));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(VipError::Parameter(format!("α must lie in [0, 1], got {alpha}")));
    }
    let phi = draws.delta.transpose().scale(1.0 / (s as f64).sqrt());
    let yv = tape.constant(crate::numkit::Matrix::column(y));
    let resid = yv.sub(&draws.m_star.transpose())?.sub(&phi.matmul(&q.mu)?)?;
    let spread = phi.matmul(&q.chol)?.square().sum_cols();
    let resid2 = resid.square();
    let log_sigma2 = sigma2.log();
    let batch = m as f64;

    let data_term = if alpha > 0.0 {
        let v = spread.add(&sigma2.scale(1.0 / alpha))?;
        // per point: −½ log v − r²/(2v); constants collected below
        let per_point = v.log().scale(-0.5).sub(&resid2.div(&v)?.scale(0.5))?;
        let constant = log_sigma2
            .shift(LN_2PI)
            .scale(0.5 * (1.0 - alpha) * batch)
            .shift(-0.5 * alpha.ln() * batch - 0.5 * LN_2PI * batch);
        per_point.sum().add(&constant)?.scale(n_total as f64 / (alpha * batch))
    } else {
        let quad = resid2.add(&spread)?.sum().div(&sigma2)?.scale(-0.5);
        let norm = log_sigma2.shift(LN_2PI).scale(-0.5 * batch);
        quad.add(&norm)?.scale(n_total as f64 / batch)
    };
    let kl = kl_var(q)?;
    let loss = kl.sub(&data_term)?;
    Ok(EnergyTerms { loss, data_term, kl })
}

/// Loss node only; see [`alpha_energy_terms`].
pub fn alpha_energy<'t>(
    y: &[f64],
    draws: &FunctionDraws<'t>,
    q: &QVars<'t>,
    sigma2: Var<'t>,
    alpha: f64,
    n_total: usize,
) -> Result<Var<'t>> {
    Ok(alpha_energy_terms(y, draws, q, sigma2, alpha, n_total)?.loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Matrix;

    fn q2() -> CoefficientPosterior {
        CoefficientPosterior::new(
            vec![0.3, -0.7],
            Matrix::from_rows(&[vec![0.8, 0.0], vec![0.2, 0.5]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn alpha_one_is_exact_marginal() {
        let q = q2();
        let phi = [0.4, 1.1];
        let v = alpha_local_term(0.9, 0.1, &phi, &q, 1.0, 0.2).unwrap();
        let mean = 0.1 + q.mean_projection(&phi);
        let expected = normal_log_pdf(0.9, mean, 0.2 + q.variance_projection(&phi));
        assert!((v - expected).abs() < 1e-13);
    }

    #[test]
    fn degenerate_q_collapses_expectation() {
        let q = CoefficientPosterior::new(vec![0.3, -0.7], Matrix::zeros(2, 2)).unwrap();
        let phi = [0.4, 1.1];
        for alpha in [0.2, 0.5, 1.0] {
            let v = alpha_local_term(0.9, 0.1, &phi, &q, alpha, 0.2).unwrap();
            let expected = alpha * normal_log_pdf(0.9, 0.1 + q.mean_projection(&phi), 0.2);
            assert!((v - expected).abs() < 1e-12, "α = {alpha}");
        }
    }

    #[test]
    fn alpha_zero_is_a_contract_error() {
        assert!(matches!(alpha_local_term(0.0, 0.0, &[0.0, 0.0], &q2(), 0.0, 1.0), Err(VipError::Contract(_))));
    }

    #[test]
    fn elbo_examples() {
        let q0 = CoefficientPosterior::new(vec![0.0], Matrix::zeros(1, 1)).unwrap();
        let sigma2 = 1.0 / (2.0 * std::f64::consts::PI);
        assert!(elbo_local_term(1.0, 1.0, &[0.5], &q0, sigma2).unwrap().abs() < 1e-15);
        let v = elbo_local_term(2.0, 0.5, &[0.0, 0.0], &q2(), 0.3).unwrap();
        assert_eq!(v, normal_log_pdf(2.0, 0.5, 0.3));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_to_standard_normal(&CoefficientPosterior::standard(4)), 0.0);
        let q = CoefficientPosterior::new(vec![1.0, 0.0], Matrix::identity(2)).unwrap();
        assert_eq!(kl_to_standard_normal(&q), 0.5);
    }
}
