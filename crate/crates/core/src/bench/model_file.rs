use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VipError};
use crate::inference::{TrainConfig, TrainedModel, VariationalParams};
use crate::numkit::{derive_seed, Matrix};
use crate::predict::{CoefficientMode, PredictiveDistribution, Predictor};
use crate::priors::PriorParams;

use super::data::{Dataset, Standardization};

pub const FORMAT_VERSION: u64 = 1;

/// Training data below this size is stored in the model file so that the
/// exact coefficient mode can be used at prediction time.
pub const EMBED_LIMIT: usize = 2000;

/// Standardized training rows kept for exact-mode prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingRows {
    pub x: Matrix,
    pub y: Vec<f64>,
}

/// A trained model as persisted on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u64,
    pub prior: PriorParams,
    pub variational: VariationalParams,
    /// In standardized target units.
    pub sigma2: f64,
    pub prediction_seed: u64,
    pub standardization: Standardization,
    pub config: TrainConfig,
    pub training: Option<TrainingRows>,
}

impl ModelFile {
    /// `train_std` is the standardized training set the model was fitted on.
    pub fn new(model: TrainedModel, standardization: Standardization, config: TrainConfig, train_std: &Dataset) -> Self {
        let training = (train_std.len() <= EMBED_LIMIT)
            .then(|| TrainingRows { x: train_std.x.clone(), y: train_std.y.clone() });
        ModelFile {
            format_version: FORMAT_VERSION,
            prediction_seed: derive_seed(config.seed, 0x7072_6564),
            prior: model.prior,
            variational: model.variational,
            sigma2: model.sigma2,
            standardization,
            config,
            training,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(FORMAT_VERSION) => {}
            Some(v) => return Err(VipError::FormatVersion(v)),
            None => return Err(VipError::Data("model file has no integer format_version".into())),
        }
        let m: ModelFile = serde_json::from_value(value)?;
        m.prior.validate()?;
        if m.variational.raw_chol.shape() != (m.variational.dim(), m.variational.dim()) {
            return Err(VipError::Data("variational factor is not square".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        ModelFile::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn predictor(&self) -> Predictor<'_> {
        Predictor {
            prior: &self.prior,
            variational: &self.variational,
            sigma2: self.sigma2,
            kernel: self.config.kernel,
            seed: self.prediction_seed,
        }
    }

    /// The default coefficient mode for this model.
    pub fn default_mode(&self) -> CoefficientMode {
        match &self.training {
            Some(t) => CoefficientMode::default_for(t.y.len()),
            None => CoefficientMode::Learned,
        }
    }

    /// Predictive distribution in standardized units for raw inputs.
    pub fn predict_standardized(&self, x_raw: &Matrix, mode: CoefficientMode) -> Result<PredictiveDistribution> {
        let x = self.standardization.inputs(x_raw)?;
        let train = match mode {
            CoefficientMode::Exact => {
                let t = self.training.as_ref().ok_or_else(|| {
                    VipError::Parameter("model file holds no training rows; use the learned coefficient mode".into())
                })?;
                Some((&t.x, t.y.as_slice()))
            }
            CoefficientMode::Learned => None,
        };
        self.predictor().predict(&x, train, mode)
    }

    /// Predictive means and `var_y` in original units.
    pub fn predict(&self, x_raw: &Matrix, mode: CoefficientMode) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = self.predict_standardized(x_raw, mode)?;
        let s = &self.standardization;
        let mean = s.restore_targets(&p.mean);
        let var = p.var_y.iter().map(|v| v * s.target_std * s.target_std).collect();
        Ok((mean, var))
    }
}
