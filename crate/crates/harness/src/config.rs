//! Harness configuration file: one TOML document covering the plant, the
//! simulator, the controller, the optimizer budget, excitation for data
//! collection, and training hyperparameters.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use uwmpc_core::controller::{CostWeights, OptimizerConfig};
use uwmpc_core::dynamics::{DynamicsParams, SimConfig};
use uwmpc_core::nn::TrainingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerSection {
    pub weights: CostWeights<f64>,
    pub move_blocks: usize,
    pub antiwindup: f64,
    pub integral_continuation: bool,
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            weights: CostWeights::default_4dof(),
            move_blocks: 3,
            antiwindup: 0.1,
            integral_continuation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExcitationConfig {
    pub episodes: usize,
    pub episode_duration_s: f64,
    /// Command amplitude as a fraction of the torque box.
    pub amplitude_frac: f64,
    /// Hold length range for piecewise-constant episodes, s.
    pub hold_range_s: [f64; 2],
    pub sines_per_joint: usize,
    pub freq_range_hz: [f64; 2],
    /// Drop transitions during which a joint-limit clamp fired; the velocity
    /// discontinuity is not something the smooth model should learn.
    pub filter_clamped: bool,
    /// Weak spring pulling each joint toward mid-range during excitation so
    /// episodes explore the interior instead of parking on the limits,
    /// N m / rad.
    pub centering_stiffness: f64,
    /// Damping companion to the centering spring, N m s / rad.
    pub centering_damping: f64,
    /// Add the restoring torque to the excitation command (the arm is known
    /// exactly during data collection).
    pub gravity_comp: bool,
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        ExcitationConfig {
            episodes: 20,
            episode_duration_s: 30.0,
            amplitude_frac: 0.9,
            hold_range_s: [0.25, 1.0],
            sines_per_joint: 3,
            freq_range_hz: [0.1, 1.5],
            filter_clamped: true,
            centering_stiffness: 1.5,
            centering_damping: 0.3,
            gravity_comp: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub plant: DynamicsParams<f64>,
    pub sim: SimConfig<f64>,
    pub controller: ControllerSection,
    pub optimizer: OptimizerConfig<f64>,
    pub excitation: ExcitationConfig,
    pub training: TrainingConfig<f64>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            plant: DynamicsParams::default_4dof(),
            sim: SimConfig::default(),
            controller: ControllerSection::default(),
            optimizer: OptimizerConfig::default(),
            excitation: ExcitationConfig::default(),
            training: TrainingConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl HarnessConfig {
    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: HarnessConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.plant
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.sim
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.controller
            .weights
            .validate(self.plant.dof())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.training
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let e = &self.excitation;
        if e.episodes == 0 || e.episode_duration_s <= 0.0 {
            return Err(ConfigError::Invalid("excitation plan is empty".into()));
        }
        if !(e.amplitude_frac > 0.0 && e.amplitude_frac <= 1.0) {
            return Err(ConfigError::Invalid(
                "amplitude fraction must be in (0, 1]".into(),
            ));
        }
        if e.hold_range_s[0] <= 0.0 || e.hold_range_s[1] < e.hold_range_s[0] {
            return Err(ConfigError::Invalid("bad hold range".into()));
        }
        if e.freq_range_hz[0] <= 0.0 || e.freq_range_hz[1] < e.freq_range_hz[0] {
            return Err(ConfigError::Invalid("bad frequency range".into()));
        }
        Ok(())
    }

    /// Hash of the canonical TOML form; recorded in run manifests.
    pub fn hash(&self) -> String {
        let text = self.to_toml().unwrap_or_default();
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        format!("{:x}", h.finalize())
    }
}
