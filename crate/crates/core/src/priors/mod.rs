//! Implicit function priors: `f_s(x) = g_θ(x, z_s)` with `z_s` drawn fresh
//! for every sampled function.
//!
//! Two families are provided. A Bayesian MLP draws every weight and bias
//! from its own Gaussian, `w = mean + exp(log_scale)·ε`, so `θ` is the set of
//! per-weight means and log-scales. A neural sampler feeds uniform noise
//! `z ~ U[-a, a]^d` alongside `x` into a deterministic MLP.
//!
//! Sampling is reparameterized: draws are recorded on an autodiff tape and
//! are differentiable with respect to `θ`.

mod kernel;

pub use kernel::{empirical_kernel, kernel_matrix, Estimator, KernelConfig};

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{stack_rows, Tape, Var};
use crate::error::{Result, VipError};
use crate::numkit::{Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Bnn,
    NeuralSampler,
}

/// Gaussian prior over one dense layer's weights (`in x out`) and biases (`1 x out`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnnLayer {
    pub weight_mean: Matrix,
    pub weight_log_scale: Matrix,
    pub bias_mean: Matrix,
    pub bias_log_scale: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PriorKind {
    Bnn { layers: Vec<BnnLayer> },
    NeuralSampler { layers: Vec<DenseLayer>, noise_dim: usize, noise_halfwidth: f64 },
}

/// Trainable parameters `θ` of an implicit process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub kind: PriorKind,
}

/// Architecture and initialization choices for building a [`PriorParams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub family: Family,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_noise_dim")]
    pub noise_dim: usize,
    #[serde(default = "default_halfwidth")]
    pub noise_halfwidth: f64,
    #[serde(default = "default_init_log_scale")]
    pub init_log_scale: f64,
}

fn default_hidden() -> Vec<usize> {
    vec![10, 10]
}
fn default_activation() -> Activation {
    Activation::Tanh
}
fn default_noise_dim() -> usize {
    10
}
fn default_halfwidth() -> f64 {
    1.0
}
fn default_init_log_scale() -> f64 {
    0.1f64.ln()
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            family: Family::Bnn,
            hidden: default_hidden(),
            activation: default_activation(),
            noise_dim: default_noise_dim(),
            noise_halfwidth: default_halfwidth(),
            init_log_scale: default_init_log_scale(),
        }
    }
}

impl PriorSpec {
    pub fn bnn(hidden: &[usize]) -> Self {
        PriorSpec { family: Family::Bnn, hidden: hidden.to_vec(), ..PriorSpec::default() }
    }

    pub fn neural_sampler(hidden: &[usize], noise_dim: usize) -> Self {
        PriorSpec { family: Family::NeuralSampler, hidden: hidden.to_vec(), noise_dim, ..PriorSpec::default() }
    }

    /// Initializes parameters for inputs of dimension `input_dim`. Means (or
    /// generator weights) are drawn from `N(0, 1/fan_in)`; log-scales start
    /// at `init_log_scale`; biases start at zero.
    pub fn build(&self, input_dim: usize, rng: &mut Rng) -> Result<PriorParams> {
        if input_dim == 0 {
            return Err(VipError::Parameter("input dimension must be positive".into()));
        }
        if !self.init_log_scale.is_finite() {
            return Err(VipError::Parameter("init_log_scale must be finite".into()));
        }
        let first = match self.family {
            Family::Bnn => input_dim,
            Family::NeuralSampler => input_dim + self.noise_dim,
        };
        let mut sizes = vec![first];
        sizes.extend(self.hidden.iter().copied());
        sizes.push(1);
        if sizes.iter().any(|&s| s == 0) {
            return Err(VipError::Parameter(format!("layer sizes must be positive, got {sizes:?}")));
        }
        let init_weight = |rng: &mut Rng, fan_in: usize, fan_out: usize| {
            let sd = (1.0 / fan_in as f64).sqrt();
            Matrix::from_vec(fan_in, fan_out, rng.standard_normal(fan_in * fan_out).into_iter().map(|z| z * sd).collect())
                .expect("sized")
        };
        let kind = match self.family {
            Family::Bnn => PriorKind::Bnn {
                layers: sizes
                    .windows(2)
                    .map(|w| BnnLayer {
                        weight_mean: init_weight(rng, w[0], w[1]),
                        weight_log_scale: Matrix::filled(w[0], w[1], self.init_log_scale),
                        bias_mean: Matrix::zeros(1, w[1]),
                        bias_log_scale: Matrix::filled(1, w[1], self.init_log_scale),
                    })
                    .collect(),
            },
            Family::NeuralSampler => {
                if !(self.noise_halfwidth >= 0.0) {
                    return Err(VipError::Parameter("noise_halfwidth must be non-negative".into()));
                }
                PriorKind::NeuralSampler {
                    layers: sizes
                        .windows(2)
                        .map(|w| DenseLayer { weight: init_weight(rng, w[0], w[1]), bias: Matrix::zeros(1, w[1]) })
                        .collect(),
                    noise_dim: self.noise_dim,
                    noise_halfwidth: self.noise_halfwidth,
                }
            }
        };
        Ok(PriorParams { layer_sizes: sizes, activation: self.activation, kind })
    }
}

impl PriorParams {
    pub fn family(&self) -> Family {
        match self.kind {
            PriorKind::Bnn { .. } => Family::Bnn,
            PriorKind::NeuralSampler { .. } => Family::NeuralSampler,
        }
    }

    /// Dimension of `x` the prior accepts.
    pub fn input_dim(&self) -> usize {
        match &self.kind {
            PriorKind::Bnn { .. } => self.layer_sizes[0],
            PriorKind::NeuralSampler { noise_dim, .. } => self.layer_sizes[0] - noise_dim,
        }
    }

    /// All trainable tensors in a fixed order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        match &self.kind {
            PriorKind::Bnn { layers } => layers
                .iter()
                .flat_map(|l| [&l.weight_mean, &l.weight_log_scale, &l.bias_mean, &l.bias_log_scale])
                .collect(),
            PriorKind::NeuralSampler { layers, .. } => layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        match &mut self.kind {
            PriorKind::Bnn { layers } => layers
                .iter_mut()
                .flat_map(|l| [&mut l.weight_mean, &mut l.weight_log_scale, &mut l.bias_mean, &mut l.bias_log_scale])
                .collect(),
            PriorKind::NeuralSampler { layers, .. } => {
                layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = &self.layer_sizes;
        if sizes.len() < 2 || *sizes.last().unwrap() != 1 {
            return Err(VipError::Parameter(format!("layer sizes {sizes:?} must end in 1")));
        }
        let check = |m: &Matrix, r: usize, c: usize, what: &str| {
            if m.shape() != (r, c) {
                Err(VipError::dim("prior", format!("{what} is {}x{}, expected {r}x{c}", m.rows(), m.cols())))
            } else {
                Ok(())
            }
        };
        match &self.kind {
            PriorKind::Bnn { layers } => {
                if layers.len() != sizes.len() - 1 {
                    return Err(VipError::Parameter("layer count does not match layer sizes".into()));
                }
                for (l, w) in layers.iter().zip(sizes.windows(2)) {
                    check(&l.weight_mean, w[0], w[1], "weight_mean")?;
                    check(&l.weight_log_scale, w[0], w[1], "weight_log_scale")?;
                    check(&l.bias_mean, 1, w[1], "bias_mean")?;
                    check(&l.bias_log_scale, 1, w[1], "bias_log_scale")?;
                    if l.weight_log_scale.as_slice().iter().chain(l.bias_log_scale.as_slice()).any(|v| v.is_nan()) {
                        return Err(VipError::Parameter("prior_log_scale contains NaN".into()));
                    }
                }
            }
            PriorKind::NeuralSampler { layers, noise_dim, noise_halfwidth } => {
                if layers.len() != sizes.len() - 1 {
                    return Err(VipError::Parameter("layer count does not match layer sizes".into()));
                }
                if sizes[0] <= *noise_dim {
                    return Err(VipError::Parameter("first layer must include the input and noise".into()));
                }
                if !(*noise_halfwidth >= 0.0) {
                    return Err(VipError::Parameter("noise_halfwidth must be non-negative".into()));
                }
                for (l, w) in layers.iter().zip(sizes.windows(2)) {
                    check(&l.weight, w[0], w[1], "weight")?;
                    check(&l.bias, 1, w[1], "bias")?;
                }
            }
        }
        Ok(())
    }

    /// Places every tensor on `tape`, as trainable leaves or as constants.
    pub fn register<'p, 't>(&'p self, tape: &'t Tape, trainable: bool) -> PriorVars<'p, 't> {
        let vars = self
            .tensors()
            .into_iter()
            .map(|m| if trainable { tape.var(m.clone()) } else { tape.constant(m.clone()) })
            .collect();
        PriorVars { params: self, tape, vars }
    }

    /// Forward-only sampling: the `S x N` matrix of function values.
    pub fn sample_values(&self, x: &Matrix, s: usize, rng: &mut Rng) -> Result<Matrix> {
        let tape = Tape::new();
        let vars = self.register(&tape, false);
        let draws = sample_functions(&vars, x, s, rng)?;
        Ok((*draws.values.value()).clone())
    }
}

/// A [`PriorParams`] whose tensors live on a tape.
pub struct PriorVars<'p, 't> {
    pub params: &'p PriorParams,
    pub tape: &'t Tape,
    /// Leaves in [`PriorParams::tensors`] order.
    pub vars: Vec<Var<'t>>,
}

/// `S` sampled functions evaluated on a batch, with the moment-matched mean
/// `m*` (`1 x N`) and deviations `Δ = F − m*` (`S x N`).
#[derive(Clone, Copy, Debug)]
pub struct FunctionDraws<'t> {
    pub values: Var<'t>,
    pub m_star: Var<'t>,
    pub delta: Var<'t>,
    pub draw_count: usize,
}

impl<'t> FunctionDraws<'t> {
    pub fn from_values(values: Var<'t>) -> Result<Self> {
        let s = values.shape().0;
        if s < 2 {
            return Err(VipError::Parameter(format!("need at least 2 function draws, got {s}")));
        }
        let m_star = values.mean_rows();
        let delta = values.broadcast_add_row(&m_star.neg())?;
        Ok(FunctionDraws { values, m_star, delta, draw_count: s })
    }

    pub fn deviations(&self) -> Rc<Matrix> {
        self.delta.value()
    }

    pub fn mean(&self) -> Rc<Matrix> {
        self.m_star.value()
    }
}

/// Draws `S` functions from the prior and evaluates them at every row of `x`.
pub fn sample_functions<'t>(prior: &PriorVars<'_, 't>, x: &Matrix, s: usize, rng: &mut Rng) -> Result<FunctionDraws<'t>> {
    if s < 2 {
        return Err(VipError::Parameter(format!("need at least 2 function draws, got {s}")));
    }
    if x.rows() == 0 {
        return Err(VipError::Parameter("no evaluation points".into()));
    }
    if !x.is_finite() {
        return Err(VipError::Parameter("inputs contain non-finite values".into()));
    }
    let params = prior.params;
    if x.cols() != params.input_dim() {
        return Err(VipError::dim(
            "sample_functions",
            format!("inputs have {} columns, prior expects {}", x.cols(), params.input_dim()),
        ));
    }
    let tape = prior.tape;
    let act = params.activation;
    let n_layers = params.layer_sizes.len() - 1;
    let apply = |h: Var<'t>, layer: usize| -> Var<'t> {
        if layer + 1 == n_layers {
            h
        } else {
            match act {
                Activation::Tanh => h.tanh(),
                Activation::Relu => h.relu(),
            }
        }
    };

    let mut rows = Vec::with_capacity(s);
    match &params.kind {
        PriorKind::Bnn { layers } => {
            let xv = tape.constant(x.clone());
            // exp(log_scale) is shared by all draws.
            let scales: Vec<(Var<'t>, Var<'t>)> =
                (0..layers.len()).map(|l| (prior.vars[4 * l + 1].exp(), prior.vars[4 * l + 3].exp())).collect();
            for _ in 0..s {
                let mut h = xv;
                for (l, layer) in layers.iter().enumerate() {
                    let (wr, wc) = layer.weight_mean.shape();
                    let eps_w = tape.constant(Matrix::from_vec(wr, wc, rng.standard_normal(wr * wc))?);
                    let eps_b = tape.constant(Matrix::from_vec(1, wc, rng.standard_normal(wc))?);
                    let w = prior.vars[4 * l].add(&scales[l].0.mul(&eps_w)?)?;
                    let b = prior.vars[4 * l + 2].add(&scales[l].1.mul(&eps_b)?)?;
                    h = apply(h.matmul(&w)?.broadcast_add_row(&b)?, l);
                }
                rows.push(h);
            }
        }
        PriorKind::NeuralSampler { layers, noise_dim, noise_halfwidth } => {
            let (n, d) = x.shape();
            for _ in 0..s {
                let z = if *noise_halfwidth > 0.0 {
                    rng.uniform(*noise_dim, -noise_halfwidth, *noise_halfwidth)?
                } else {
                    vec![0.0; *noise_dim]
                };
                let input = Matrix::from_fn(n, d + noise_dim, |i, j| if j < d { x[(i, j)] } else { z[j - d] });
                let mut h = tape.constant(input);
                for l in 0..layers.len() {
                    h = apply(h.matmul(&prior.vars[2 * l])?.broadcast_add_row(&prior.vars[2 * l + 1])?, l);
                }
                rows.push(h);
            }
        }
    }
    FunctionDraws::from_values(stack_rows(&rows)?)
}
