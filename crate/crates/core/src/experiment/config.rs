use super::Method;
use crate::ccnn::ModelSpec;
use crate::error::{Error, Result};
use crate::metrics::{CfarConfig, DEFAULT_MATCH_TOLERANCE};
use crate::mitigate::{ImatParams, DEFAULT_MAD_FACTOR, DEFAULT_RAMP_ALPHA};
use crate::sim::{DatasetOptions, RadarConfig, SnirMode};
use crate::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
    pub fixed_aoa: Option<f64>,
    pub snir_mode: SnirMode,
    pub overwrite: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetOptions::default();
        DatasetSection {
            n_train: d.n_train,
            n_val: d.n_val,
            n_test: d.n_test,
            seed: d.seed,
            fixed_aoa: d.fixed_aoa,
            snir_mode: d.snir_mode,
            overwrite: d.overwrite,
        }
    }
}

/// Either a preset name or a full specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Preset(String),
    Spec(ModelSpec),
}

impl Default for ModelChoice {
    fn default() -> Self {
        ModelChoice::Preset("ccnn3d-s".into())
    }
}

impl ModelChoice {
    pub fn resolve(&self) -> Result<ModelSpec> {
        let spec = match self {
            ModelChoice::Preset(name) => ModelSpec::preset(name)?,
            ModelChoice::Spec(spec) => spec.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parameters of the classical baselines and their corrupted-sample detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MitigationConfig {
    pub c_mad: f64,
    pub ramp_alpha: f64,
    pub imat_iters: usize,
    pub imat_beta0: f64,
    pub imat_decay: f64,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        let imat = ImatParams::default();
        MitigationConfig {
            c_mad: DEFAULT_MAD_FACTOR,
            ramp_alpha: DEFAULT_RAMP_ALPHA,
            imat_iters: imat.iters,
            imat_beta0: imat.beta0,
            imat_decay: imat.decay,
        }
    }
}

impl MitigationConfig {
    pub fn imat_params(&self) -> ImatParams {
        ImatParams {
            iters: self.imat_iters,
            beta0: self.imat_beta0,
            decay: self.imat_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub radar: RadarConfig,
    pub dataset: DatasetSection,
    pub model: ModelChoice,
    pub train: TrainConfig,
    /// Detector for ground-truth peaks and for scoring every method.
    pub cfar: CfarConfig,
    /// Chebyshev radius for matching detected to true peaks.
    pub match_tolerance: usize,
    pub mitigation: MitigationConfig,
    pub methods: Vec<Method>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            radar: RadarConfig::default(),
            dataset: DatasetSection::default(),
            model: ModelChoice::default(),
            train: TrainConfig::default(),
            cfar: CfarConfig::default(),
            match_tolerance: DEFAULT_MATCH_TOLERANCE,
            mitigation: MitigationConfig::default(),
            methods: Method::ALL.to_vec(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        self.cfar.validate()?;
        self.train.validate()?;
        self.model.resolve()?;
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods to evaluate".into()));
        }
        if !(self.mitigation.c_mad > 0.0) {
            return Err(Error::InvalidConfig(
                "mitigation.c_mad must be positive".into(),
            ));
        }
        if !(self.mitigation.ramp_alpha > 1.0) {
            return Err(Error::InvalidConfig(
                "mitigation.ramp_alpha must exceed 1".into(),
            ));
        }
        let imat = self.mitigation.imat_params();
        if imat.iters == 0 || !(imat.decay > 0.0 && imat.decay < 1.0) {
            return Err(Error::InvalidConfig(
                "IMAT needs iters ≥ 1 and decay in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn dataset_options(&self) -> DatasetOptions {
        let d = &self.dataset;
        DatasetOptions {
            n_train: d.n_train,
            n_val: d.n_val,
            n_test: d.n_test,
            seed: d.seed,
            fixed_aoa: d.fixed_aoa,
            snir_mode: d.snir_mode,
            cfar: self.cfar.clone(),
            overwrite: d.overwrite,
        }
    }

    /// Methods in report order, duplicates removed.
    pub fn ordered_methods(&self) -> Vec<Method> {
        Method::ALL
            .into_iter()
            .filter(|m| self.methods.contains(m))
            .collect()
    }
}
