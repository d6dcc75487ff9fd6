use serde::{Deserialize, Serialize};

use crate::error::{Result, VipError};
use crate::inference::{train, Sigma2Mode, TrainConfig, TrainedModel};
use crate::numkit::{derive_seed, streams, Rng};
use crate::predict::{nll_rmse, CoefficientMode, Metrics, Predictor};

use super::data::{interp_split, split, synth_toy, toy_grid, Dataset, NoiseLevel, Standardization};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Toy,
    Uci,
    Interp,
}

impl std::str::FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "toy" => Ok(Protocol::Toy),
            "uci" => Ok(Protocol::Uci),
            "interp" => Ok(Protocol::Interp),
            other => Err(format!("unknown protocol {other:?} (expected toy, uci or interp)")),
        }
    }
}

fn default_n() -> usize {
    300
}
fn default_test_points() -> usize {
    1000
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub noise: NoiseLevel,
    #[serde(default = "default_test_points")]
    pub test_points: usize,
    #[serde(default = "default_true")]
    pub noiseless_test: bool,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig { n: default_n(), noise: NoiseLevel::default(), test_points: default_test_points(), noiseless_test: true }
    }
}

fn default_segments() -> usize {
    5
}
fn default_segment_len() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpConfig {
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default = "default_segment_len")]
    pub segment_len: usize,
}

impl Default for InterpConfig {
    fn default() -> Self {
        InterpConfig { segments: default_segments(), segment_len: default_segment_len() }
    }
}

fn default_train_frac() -> f64 {
    0.9
}
fn default_val_frac() -> f64 {
    0.2
}

/// Benchmark configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    /// Share of the training split held out for the σ² grid search.
    #[serde(default = "default_val_frac")]
    pub val_frac: f64,
    /// `None` picks by training-set size.
    #[serde(default)]
    pub coefficients: Option<CoefficientMode>,
    #[serde(default)]
    pub toy: ToyConfig,
    #[serde(default)]
    pub interp: InterpConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            train: TrainConfig::default(),
            train_frac: default_train_frac(),
            val_frac: default_val_frac(),
            coefficients: None,
            toy: ToyConfig::default(),
            interp: InterpConfig::default(),
        }
    }
}

/// Outcome of [`grid_search_sigma2`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridSearch {
    pub best: f64,
    /// `(σ², validation NLL)` per candidate, in ascending σ².
    pub scores: Vec<(f64, f64)>,
    pub model: TrainedModel,
}

/// Picks σ² from `grid` by validation NLL, then retrains on all of `data`.
///
/// One model is trained on the non-validation rows; for each candidate the
/// exact coefficient posterior is refitted on the same draws and scored.
/// Ties go to the smallest σ². `data` is expected to be standardized.
pub fn grid_search_sigma2(data: &Dataset, cfg: &TrainConfig, grid: &[f64], val_frac: f64, seed: u64) -> Result<GridSearch> {
    let mut values = grid.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    if values.is_empty() {
        return Err(VipError::Parameter("σ² grid is empty".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(VipError::Parameter(format!("σ² grid value {v} is not positive")));
    }
    let retrain = |best: f64| train(&data.x, &data.y, &TrainConfig { sigma2: Sigma2Mode::Fixed { value: best }, ..cfg.clone() });
    if values.len() == 1 {
        return Ok(GridSearch { best: values[0], scores: vec![(values[0], f64::NAN)], model: retrain(values[0])? });
    }
    let (fit_idx, val_idx) = split(data.len(), 1.0 - val_frac, seed)?;
    let (fit, val) = (data.subset(&fit_idx), data.subset(&val_idx));
    let initial = TrainConfig { sigma2: Sigma2Mode::Grid { values: values.clone() }, ..cfg.clone() };
    let first = train(&fit.x, &fit.y, &initial)?;
    let pred_seed = Rng::new(seed, streams::PREDICT).next_u64();
    let mut scores = Vec::with_capacity(values.len());
    for &s2 in &values {
        let p = Predictor {
            prior: &first.prior,
            variational: &first.variational,
            sigma2: s2,
            kernel: cfg.kernel,
            seed: pred_seed,
        };
        let pred = p.predict(&val.x, Some((&fit.x, &fit.y)), CoefficientMode::Exact)?;
        scores.push((s2, nll_rmse(&pred, &val.y, 1.0)?.nll));
    }
    let mut best = scores[0];
    for &c in &scores[1..] {
        if c.1 < best.1 {
            best = c;
        }
    }
    Ok(GridSearch { best: best.0, scores, model: retrain(best.0)? })
}

/// Standardizes on the training rows and fits, running the σ² grid search
/// when the config asks for one.
pub fn fit(train_raw: &Dataset, cfg: &BenchConfig, seed: u64) -> Result<(TrainedModel, Standardization, TrainConfig)> {
    let stand = Standardization::fit(train_raw)?;
    let data = stand.dataset(train_raw)?;
    let tcfg = TrainConfig { seed, ..cfg.train.clone() };
    let model = match &tcfg.sigma2 {
        Sigma2Mode::Grid { values } => grid_search_sigma2(&data, &tcfg, values, cfg.val_frac, seed)?.model,
        _ => train(&data.x, &data.y, &tcfg)?,
    };
    Ok((model, stand, tcfg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub sigma2: f64,
    pub nll: f64,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub protocol: Protocol,
    pub nll_mean: f64,
    pub nll_se: f64,
    pub rmse_mean: f64,
    pub rmse_se: f64,
    pub per_split: Vec<SplitResult>,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn evaluate(train_raw: &Dataset, test_raw: &Dataset, cfg: &BenchConfig, split_idx: usize, seed: u64) -> Result<SplitResult> {
    let (model, stand, tcfg) = fit(train_raw, cfg, seed)?;
    let mode = cfg.coefficients.unwrap_or(CoefficientMode::default_for(train_raw.len()));
    let xtr = stand.inputs(&train_raw.x)?;
    let ytr = stand.targets(&train_raw.y);
    let p = Predictor {
        prior: &model.prior,
        variational: &model.variational,
        sigma2: model.sigma2,
        kernel: tcfg.kernel,
        seed: Rng::new(seed, streams::PREDICT).next_u64(),
    };
    let pred = p.predict(&stand.inputs(&test_raw.x)?, Some((&xtr, &ytr)), mode)?;
    let Metrics { nll, rmse } = nll_rmse(&pred, &stand.targets(&test_raw.y), stand.target_std)?;
    Ok(SplitResult {
        split: split_idx,
        seed,
        n_train: train_raw.len(),
        n_test: test_raw.len(),
        sigma2: model.sigma2 * stand.target_std * stand.target_std,
        nll,
        rmse,
    })
}

fn run_split(protocol: Protocol, data: Option<&Dataset>, cfg: &BenchConfig, k: usize, seed: u64) -> Result<SplitResult> {
    let need = || data.ok_or_else(|| VipError::Parameter(format!("the {protocol:?} protocol needs a data file")));
    match protocol {
        Protocol::Toy => {
            let train_raw = synth_toy(cfg.toy.n, seed, cfg.toy.noise)?;
            let mut test = toy_grid(cfg.toy.test_points, -3.0, 3.0);
            if !cfg.toy.noiseless_test {
                let mut rng = Rng::new(derive_seed(seed, 1), streams::SYNTH);
                let sd = cfg.toy.noise.std();
                test.y.iter_mut().for_each(|y| *y += sd * rng.next_normal());
            }
            evaluate(&train_raw, &test, cfg, k, seed)
        }
        Protocol::Uci => {
            let d = need()?;
            let (tr, te) = split(d.len(), cfg.train_frac, seed)?;
            evaluate(&d.subset(&tr), &d.subset(&te), cfg, k, seed)
        }
        Protocol::Interp => {
            let d = need()?;
            let (tr, te) = interp_split(d.len(), cfg.interp.segments, cfg.interp.segment_len, seed)?;
            evaluate(&d.subset(&tr), &d.subset(&te), cfg, k, seed)
        }
    }
}

/// Runs `splits` independent repetitions and summarizes them. Each split
/// gets its own seed derived from `master_seed`; splits run in parallel and
/// are reported in index order.
pub fn run_protocol(protocol: Protocol, data: Option<&Dataset>, cfg: &BenchConfig, splits: usize, master_seed: u64) -> Result<Report> {
    if splits == 0 {
        return Err(VipError::Parameter("need at least one split".into()));
    }
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(splits);
    let mut results: Vec<Option<Result<SplitResult>>> = (0..splits).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                scope.spawn(move || {
                    (t..splits)
                        .step_by(threads)
                        .map(|k| (k, run_split(protocol, data, cfg, k, derive_seed(master_seed, k as u64))))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (k, r) in h.join().expect("split worker panicked") {
                results[k] = Some(r);
            }
        }
    });
    let per_split = results.into_iter().map(|r| r.expect("every split ran")).collect::<Result<Vec<_>>>()?;
    let (nll_mean, nll_se) = mean_se(&per_split.iter().map(|r| r.nll).collect::<Vec<_>>());
    let (rmse_mean, rmse_se) = mean_se(&per_split.iter().map(|r| r.rmse).collect::<Vec<_>>());
    Ok(Report { protocol, nll_mean, nll_se, rmse_mean, rmse_se, per_split })
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
