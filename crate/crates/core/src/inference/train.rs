use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Result, VipError};
use crate::numkit::{streams, Matrix, Rng};
use crate::priors::{sample_functions, KernelConfig, PriorParams, PriorSpec};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::energy::{alpha_energy_terms, QVars};
use super::posterior::VariationalParams;

/// How the observation noise variance is handled during training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sigma2Mode {
    Fixed { value: f64 },
    /// Optimized jointly as `log σ²`.
    Learned {
        #[serde(default = "default_sigma2_init")]
        init: f64,
    },
    /// Candidate values searched on a validation split. A plain training run
    /// holds σ² at the middle candidate.
    Grid { values: Vec<f64> },
}

fn default_sigma2_init() -> f64 {
    0.1
}

impl Sigma2Mode {
    /// The grid used for real-data benchmarks, as multiples of `Var(y)`
    /// (which is 1 after standardization).
    pub fn default_grid() -> Self {
        Sigma2Mode::Grid { values: vec![0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0] }
    }

    pub fn initial_value(&self) -> Result<f64> {
        let v = match self {
            Sigma2Mode::Fixed { value } => *value,
            Sigma2Mode::Learned { init } => *init,
            Sigma2Mode::Grid { values } => {
                if values.is_empty() {
                    return Err(VipError::Parameter("σ² grid is empty".into()));
                }
                let mut sorted = values.clone();
                sorted.sort_by(f64::total_cmp);
                sorted[(sorted.len() - 1) / 2]
            }
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(VipError::Parameter(format!("σ² must be positive and finite, got {v}")));
        }
        Ok(v)
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, Sigma2Mode::Learned { .. })
    }
}

impl Default for Sigma2Mode {
    fn default() -> Self {
        Sigma2Mode::Learned { init: default_sigma2_init() }
    }
}

fn default_alpha() -> f64 {
    0.5
}
fn default_draws() -> usize {
    20
}
fn default_lr() -> f64 {
    0.01
}
fn default_epochs() -> usize {
    500
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Number of function draws `S` per iteration.
    #[serde(default = "default_draws")]
    pub num_draws: usize,
    /// Minibatch size; `None` means full batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub sigma2: Sigma2Mode,
    /// Kernel estimator used by the dense predictive path.
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub prior: PriorSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: default_alpha(),
            num_draws: default_draws(),
            batch_size: None,
            learning_rate: default_lr(),
            epochs: default_epochs(),
            sigma2: Sigma2Mode::default(),
            kernel: KernelConfig::default(),
            seed: 0,
            prior: PriorSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(VipError::Parameter(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.num_draws < 2 {
            return Err(VipError::Parameter(format!("num_draws must be at least 2, got {}", self.num_draws)));
        }
        if self.batch_size == Some(0) {
            return Err(VipError::Parameter("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(VipError::Parameter(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        self.sigma2.initial_value()?;
        if let Sigma2Mode::Grid { values } = &self.sigma2 {
            if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(VipError::Parameter(format!("σ² grid value {v} is not positive")));
            }
        }
        Ok(())
    }
}

/// Result of [`train`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub prior: PriorParams,
    pub variational: VariationalParams,
    pub sigma2: f64,
    /// Mean minibatch loss of each epoch.
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
}

fn nonfinite_term(loss: f64, data: f64, kl: f64) -> Option<&'static str> {
    if loss.is_finite() {
        None
    } else if !data.is_finite() {
        Some("data_term")
    } else if !kl.is_finite() {
        Some("kl")
    } else {
        Some("loss")
    }
}

/// Wake–sleep training by minibatch Adam on the α-energy.
///
/// Each iteration draws a fresh set of `S` functions on the minibatch,
/// moment-matches them, evaluates the closed-form energy and takes one Adam
/// step on the prior parameters, `μ`, the raw factor and (in learned mode)
/// `log σ²`. `x` and `y` are expected to be standardized.
pub fn train(x: &Matrix, y: &[f64], cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let n = x.rows();
    if n == 0 {
        return Err(VipError::Parameter("no training rows".into()));
    }
    if y.len() != n {
        return Err(VipError::dim("train", format!("{n} input rows, {} targets", y.len())));
    }
    let s = cfg.num_draws;
    let mut init_rng = Rng::new(cfg.seed, streams::INIT);
    let mut draw_rng = Rng::new(cfg.seed, streams::DRAWS);
    let mut shuffle_rng = Rng::new(cfg.seed, streams::SHUFFLE);

    let mut prior = cfg.prior.build(x.cols(), &mut init_rng)?;
    let mut q = VariationalParams::standard(s);
    let learned = cfg.sigma2.is_learned();
    let mut log_sigma2 = Matrix::scalar(cfg.sigma2.initial_value()?.ln());
    let adam_cfg = AdamConfig::new(cfg.learning_rate);
    let mut adam = AdamState::default();

    let batch = cfg.batch_size.unwrap_or(n).min(n);
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let mut iteration = 0;
    for _ in 0..cfg.epochs {
        let order = shuffle_rng.permutation(n);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for idx in order.chunks(batch) {
            let xb = x.select_rows(idx);
            let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let (loss, grads) = {
                let tape = Tape::new();
                let pv = prior.register(&tape, true);
                let mu = tape.var(q.mu.clone());
                let raw = tape.var(q.raw_chol.clone());
                let ls2 = if learned { tape.var(log_sigma2.clone()) } else { tape.constant(log_sigma2.clone()) };
                let draws = sample_functions(&pv, &xb, s, &mut draw_rng)?;
                let qv = QVars::from_raw(mu, raw)?;
                let terms = alpha_energy_terms(&yb, &draws, &qv, ls2.exp(), cfg.alpha, n)?;
                let loss = terms.loss.item();
                if let Some(term) = nonfinite_term(loss, terms.data_term.item(), terms.kl.item()) {
                    return Err(VipError::NonFinite { iteration, term: term.into() });
                }
                let g = tape.backward(terms.loss)?;
                let mut grads: Vec<Matrix> = pv.vars.iter().map(|v| g.get(*v)).collect();
                grads.push(g.get(mu));
                grads.push(g.get(raw));
                if learned {
                    grads.push(g.get(ls2));
                }
                if grads.iter().any(|m| !m.is_finite()) {
                    return Err(VipError::NonFinite { iteration, term: "gradient".into() });
                }
                (loss, grads)
            };
            let mut params = prior.tensors_mut();
            params.push(&mut q.mu);
            params.push(&mut q.raw_chol);
            if learned {
                params.push(&mut log_sigma2);
            }
            adam_step(&mut params, &grads, &mut adam, &adam_cfg)?;
            epoch_loss += loss;
            batches += 1;
            iteration += 1;
        }
        loss_trace.push(epoch_loss / batches as f64);
    }
    Ok(TrainedModel { prior, variational: q, sigma2: log_sigma2.item().exp(), loss_trace, iterations: iteration })
}
