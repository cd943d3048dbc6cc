//! Experiment configuration file: every module block plus run settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;
use crate::glider::{GliderParams, STATE_DIM};
use crate::mppi::MppiConfig;
use crate::nmpc::{Planner, ScenarioConfig};
use crate::rollout::GliderModel;
use crate::synthesis::SynthesisConfig;
use crate::vpm::VpmConfig;

/// Initial-condition sweep over one state component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// 1-based state index, 1 = r_x … 7 = ω.
    pub state_index: usize,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            state_index: 5,
            min: 6.7,
            max: 7.3,
            points: 13,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub batch_sizes: Vec<usize>,
    /// Rollout length.
    pub steps: usize,
    /// Timed repetitions per batch size.
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            batch_sizes: vec![1, 128, 256, 512, 1024],
            steps: 80,
            repeats: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub vpm: VpmConfig,
    pub glider: GliderParams,
    pub mppi: MppiConfig,
    pub synthesis: SynthesisConfig,
    pub scenario: ScenarioConfig,
    pub sweep: SweepConfig,
    pub bench: BenchConfig,
    /// Trials per mode.
    pub trials: usize,
    /// Trial `i` uses seed `seed + i`; the offline plan uses `seed`.
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            vpm: VpmConfig::default(),
            glider: GliderParams::default(),
            mppi: MppiConfig::default(),
            synthesis: SynthesisConfig::default(),
            scenario: ScenarioConfig::default(),
            sweep: SweepConfig::default(),
            bench: BenchConfig::default(),
            trials: 10,
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates. Unknown keys are rejected with their path.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::invalid(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.vpm
            .validate()
            .map_err(|e| ConfigError::invalid("vpm", e.to_string()))?;
        self.glider
            .validate()
            .map_err(|(f, m)| ConfigError::invalid(format!("glider.{f}"), m))?;
        self.mppi
            .validate()
            .map_err(|e| ConfigError::invalid("mppi", e.to_string()))?;
        self.synthesis
            .validate()
            .map_err(|e| ConfigError::invalid("synthesis", e.to_string()))?;
        self.scenario
            .validate()
            .map_err(|(f, m)| ConfigError::invalid(format!("scenario.{f}"), m))?;
        if self.mppi.horizon <= self.scenario.projection_steps {
            return Err(ConfigError::invalid(
                "mppi.horizon",
                "must exceed scenario.projection_steps",
            ));
        }
        if self.trials == 0 {
            return Err(ConfigError::invalid("trials", "must be at least 1"));
        }
        let s = &self.sweep;
        if !(1..=STATE_DIM).contains(&s.state_index) {
            return Err(ConfigError::invalid("sweep.state_index", "must lie in 1..=7"));
        }
        if !(s.min.is_finite() && s.max.is_finite() && s.min <= s.max) {
            return Err(ConfigError::invalid("sweep.min", "need finite min <= max"));
        }
        if s.points == 0 {
            return Err(ConfigError::invalid("sweep.points", "must be at least 1"));
        }
        if self.bench.batch_sizes.is_empty() || self.bench.batch_sizes.contains(&0) {
            return Err(ConfigError::invalid(
                "bench.batch_sizes",
                "need one or more positive sizes",
            ));
        }
        if self.bench.repeats == 0 {
            return Err(ConfigError::invalid("bench.repeats", "must be at least 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn model(&self) -> GliderModel {
        GliderModel::new(self.glider.clone(), self.vpm.clone())
    }

    pub fn planner(&self) -> Planner {
        Planner {
            model: self.model(),
            mppi: self.mppi.clone(),
            synthesis: self.synthesis.clone(),
            projection_steps: self.scenario.projection_steps,
        }
    }
}
