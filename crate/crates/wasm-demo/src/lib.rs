//! WebAssembly bindings for the browser demo in `www/`.

use wasm_bindgen::prelude::*;

use vip_core::bench::{fit, synth_toy, toy_grid, BenchConfig, NoiseLevel};
use vip_core::inference::{Sigma2Mode, TrainConfig};
use vip_core::numkit::streams;
use vip_core::predict::{CoefficientMode, DrawSet, Predictor};
use vip_core::priors::{kernel_matrix, KernelConfig, PriorSpec};
use vip_core::{Matrix, Rng};

const LO: f64 = -3.0;
const HI: f64 = 3.0;

/// A fitted toy model evaluated on an even grid over `[-3, 3]`.
#[wasm_bindgen]
pub struct ToyFit {
    train_x: Vec<f64>,
    train_y: Vec<f64>,
    grid: Vec<f64>,
    mean: Vec<f64>,
    std_y: Vec<f64>,
    sigma2: f64,
}

#[wasm_bindgen]
impl ToyFit {
    #[wasm_bindgen(getter)]
    pub fn train_x(&self) -> Vec<f64> {
        self.train_x.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn train_y(&self) -> Vec<f64> {
        self.train_y.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn grid(&self) -> Vec<f64> {
        self.grid.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn mean(&self) -> Vec<f64> {
        self.mean.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn std_y(&self) -> Vec<f64> {
        self.std_y.clone()
    }
    /// Noise variance in original units.
    #[wasm_bindgen(getter)]
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

pub fn run_toy_fit(n: usize, noise_std: f64, epochs: usize, alpha: f64, seed: u64, points: usize) -> vip_core::Result<ToyFit> {
    let data = synth_toy(n, seed, NoiseLevel::Std(noise_std))?;
    let cfg = BenchConfig {
        train: TrainConfig { alpha, epochs, sigma2: Sigma2Mode::Learned { init: 0.1 }, ..TrainConfig::default() },
        ..BenchConfig::default()
    };
    cfg.train.validate()?;
    let (model, stand, tcfg) = fit(&data, &cfg, seed)?;
    let grid = toy_grid(points, LO, HI).x;
    let p = Predictor {
        prior: &model.prior,
        variational: &model.variational,
        sigma2: model.sigma2,
        kernel: tcfg.kernel,
        seed: Rng::new(seed, streams::PREDICT).next_u64(),
    };
    let train = stand.dataset(&data)?;
    let pred = p.predict(&stand.inputs(&grid)?, Some((&train.x, &train.y)), CoefficientMode::Exact)?;
    let sd = stand.target_std;
    Ok(ToyFit {
        train_x: data.x.col_vec(0),
        train_y: data.y.clone(),
        grid: grid.col_vec(0),
        mean: stand.restore_targets(&pred.mean),
        std_y: pred.var_y.iter().map(|v| v.sqrt() * sd).collect(),
        sigma2: model.sigma2 * sd * sd,
    })
}

fn prior_spec(family: &str, hidden: usize) -> vip_core::Result<PriorSpec> {
    match family {
        "bnn" => Ok(PriorSpec::bnn(&[hidden, hidden])),
        "neural_sampler" => Ok(PriorSpec::neural_sampler(&[hidden, hidden], 5)),
        other => Err(vip_core::VipError::Parameter(format!("unknown prior family {other:?}"))),
    }
}

/// Function values of `draws` prior samples on the grid, row-major `draws x points`.
pub fn run_prior_draws(family: &str, hidden: usize, draws: usize, points: usize, seed: u64) -> vip_core::Result<Vec<f64>> {
    let prior = prior_spec(family, hidden)?.build(1, &mut Rng::new(seed, streams::INIT))?;
    let grid = toy_grid(points, LO, HI).x;
    Ok(prior.sample_values(&grid, draws, &mut Rng::new(seed, streams::DRAWS))?.into_vec())
}

/// Estimated kernel over the grid, row-major `points x points`. `psi > 0`
/// selects the inverse-Wishart posterior mean estimator.
pub fn run_kernel(family: &str, hidden: usize, draws: usize, points: usize, psi: f64, seed: u64) -> vip_core::Result<Vec<f64>> {
    let values = Matrix::from_vec(draws, points, run_prior_draws(family, hidden, draws, points, seed)?)?;
    let cfg = if psi > 0.0 { KernelConfig::pm(psi) } else { KernelConfig::mle() };
    Ok(kernel_matrix(&DrawSet::from_values(&values)?.delta, &cfg)?.into_vec())
}

fn js(e: vip_core::VipError) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn fit_toy(n: usize, noise_std: f64, epochs: usize, alpha: f64, seed: u64, points: usize) -> Result<ToyFit, JsError> {
    run_toy_fit(n, noise_std, epochs, alpha, seed, points).map_err(js)
}

#[wasm_bindgen]
pub fn prior_draws(family: &str, hidden: usize, draws: usize, points: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    run_prior_draws(family, hidden, draws, points, seed).map_err(js)
}

#[wasm_bindgen]
pub fn kernel(family: &str, hidden: usize, draws: usize, points: usize, psi: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    run_kernel(family, hidden, draws, points, psi, seed).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_fit_shapes() {
        let f = run_toy_fit(40, 0.1, 5, 0.5, 1, 25).unwrap();
        assert_eq!((f.train_x.len(), f.grid.len(), f.mean.len(), f.std_y.len()), (40, 25, 25, 25));
        assert!(f.std_y.iter().all(|s| *s > 0.0) && f.sigma2 > 0.0);
    }

    #[test]
    fn draws_and_kernel_shapes() {
        assert_eq!(run_prior_draws("bnn", 8, 6, 30, 2).unwrap().len(), 180);
        let k = run_kernel("neural_sampler", 8, 6, 10, 0.0, 2).unwrap();
        assert_eq!(k.len(), 100);
        assert_eq!(k[3 * 10 + 7], k[7 * 10 + 3]);
        assert!(run_kernel("bnn", 8, 6, 10, 0.5, 2).is_ok());
        assert!(run_prior_draws("lstm", 8, 6, 10, 2).is_err());
    }
}
