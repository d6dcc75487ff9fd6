use serde::{Deserialize, Serialize};

use crate::error::{Result, VipError};
use crate::numkit::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        AdamConfig { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(params: &mut [&mut Matrix], grads: &[Matrix], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() {
        return Err(VipError::dim("adam_step", format!("{} parameters, {} gradients", params.len(), grads.len())));
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        state.v = state.m.clone();
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[k].shape() != g.shape() {
            return Err(VipError::dim(
                "adam_step",
                format!("parameter {k} is {}x{}, gradient {}x{}", p.rows(), p.cols(), g.rows(), g.cols()),
            ));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[k].as_mut_slice();
        let v = state.v[k].as_mut_slice();
        for (i, (w, &gi)) in p.as_mut_slice().iter_mut().zip(g.as_slice()).enumerate() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
