use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vosa_core::aging::{AgingParams, AgingTarget, Stress};
use vosa_core::error_model::DEFAULT_LEVELS;
use vosa_core::optimizer::{EnergyParams, ObjectiveMode};
use vosa_core::sensitivity::{Method, SensitivityParams};
use vosa_core::systolic::SimMode;

use crate::fail::{Failure, Result};

/// Everything a run depends on. Missing fields take the defaults below, and
/// the resolved document is written next to every set of outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    pub dataset: Option<DatasetConfig>,
    /// Calibration CSV (`voltage,k,variance`); the bundled table when absent.
    pub variance_csv: Option<PathBuf>,
    pub levels: Vec<f64>,
    pub array_n: usize,
    /// Voltage-selection bits per weight word; derived from `levels` when absent.
    pub v_bits: Option<u32>,
    /// Allowed MSE increase, relative to the nominal baseline.
    pub mse_ub: Vec<f64>,
    pub objective_mode: ObjectiveMode,
    pub energy: EnergyConfig,
    pub sensitivity: SensitivityConfig,
    /// Samples of the calibration slice used for the baseline MSE.
    pub baseline_samples: usize,
    /// Samples used for simulation; the whole dataset when absent.
    pub eval_samples: Option<usize>,
    pub seed: u64,
    pub mode: SimMode,
    pub aging: Option<AgingConfig>,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            dataset: None,
            variance_csv: None,
            levels: DEFAULT_LEVELS.to_vec(),
            array_n: 16,
            v_bits: None,
            mse_ub: vec![0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0],
            objective_mode: ObjectiveMode::LinearV,
            energy: EnergyConfig::default(),
            sensitivity: SensitivityConfig::default(),
            baseline_samples: 500,
            eval_samples: None,
            seed: 0,
            mode: SimMode::Systolic,
            aging: None,
            out_dir: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConfig {
    pub v_nominal: f64,
    pub multiplier_share: f64,
    pub weight_by_fan_in: bool,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        let p = EnergyParams::<f64>::default();
        Self {
            v_nominal: p.v_nominal,
            multiplier_share: p.multiplier_share,
            weight_by_fan_in: p.weight_by_fan_in,
        }
    }
}

impl EnergyConfig {
    pub fn params(&self) -> EnergyParams<f64> {
        EnergyParams {
            v_nominal: self.v_nominal,
            multiplier_share: self.multiplier_share,
            weight_by_fan_in: self.weight_by_fan_in,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityConfig {
    pub method: Method,
    pub samples: usize,
    pub calibration_size: usize,
    pub pe_std: f64,
    pub relu_expected_gain: bool,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        let p = SensitivityParams::<f64>::default();
        Self {
            method: Method::Auto,
            samples: p.samples,
            calibration_size: p.calibration_size,
            pe_std: p.pe_std,
            relu_expected_gain: p.relu_expected_gain,
        }
    }
}

impl SensitivityConfig {
    pub fn params(&self, seed: u64) -> SensitivityParams<f64> {
        SensitivityParams {
            samples: self.samples,
            calibration_size: self.calibration_size,
            pe_std: self.pe_std,
            relu_expected_gain: self.relu_expected_gain,
            seed,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgingConfig {
    #[serde(default = "default_years")]
    pub years: f64,
    #[serde(default)]
    pub stress: Option<Stress<f64>>,
    /// Explicit parameters per device.
    #[serde(default)]
    pub pmos: Option<AgingParams<f64>>,
    #[serde(default)]
    pub nmos: Option<AgingParams<f64>>,
    /// Drift observations to fit `A` and `gamma`, per device.
    #[serde(default)]
    pub targets: Option<AgingTargets>,
}

fn default_years() -> f64 {
    10.0
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgingTargets {
    #[serde(default)]
    pub pmos: Vec<AgingTarget<f64>>,
    #[serde(default)]
    pub nmos: Vec<AgingTarget<f64>>,
}

impl RunConfig {
    /// Read a config file. Relative paths inside it are later resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Failure::config(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mse_ub.iter().any(|&b| !(b.is_finite() && b > 0.0)) {
            return Err(Failure::config(format!(
                "mse_ub values must be finite and > 0, got {:?}",
                self.mse_ub
            )));
        }
        if self.array_n == 0 {
            return Err(Failure::config("array_n must be positive"));
        }
        if self.baseline_samples < 2 {
            return Err(Failure::config("baseline_samples must be at least 2"));
        }
        if self.eval_samples.is_some_and(|n| n < 2) {
            return Err(Failure::config("eval_samples must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.energy.multiplier_share) {
            return Err(Failure::config("energy.multiplier_share must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Config paths are relative to the config file, not the working directory.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
