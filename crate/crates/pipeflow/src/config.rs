//! Experiment configuration: a single JSON document with a strict schema.
//! Unknown keys are errors; every parameter is validated before any
//! computation starts.

use crate::dynamics::MapSystem;
use crate::network::NetworkParams;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// builtin map name: doubling, rotation, logistic, identity, henon
    pub name: String,
    /// named map parameters, e.g. {"alpha": 0.5} for the rotation
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverConfig {
    /// block length L; the alphabet is 2^L
    pub block_len: u32,
    /// suspension ceiling H
    pub ceiling: f64,
    /// switching window width in flow time
    pub window_width: f64,
    /// driver time per unit flow time
    pub t_speed: f64,
    /// lateral attraction rate past the window
    pub kappa: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipeflowConfig {
    /// number of sampled orbits
    pub orbits: usize,
    /// junction-to-junction steps per orbit
    pub steps: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    /// partition mesh
    pub mesh: f64,
    /// length of the sampling orbit used for the partition and matrix
    pub orbit_length: usize,
    /// Monte Carlo trials for the step-skew diagnostics
    pub stepskew_trials: usize,
    pub driver: DriverConfig,
    pub pipeflow: PipeflowConfig,
    /// longest cylinder word in the law comparison
    pub comparison_max_len: usize,
    /// shadowing tolerance; defaults to twice the mesh
    #[serde(default)]
    pub shadowing_delta: Option<f64>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.mesh <= 0.0 || !self.mesh.is_finite() {
            return fail(format!("mesh must be positive, got {}", self.mesh));
        }
        if self.orbit_length == 0 {
            return fail("orbit_length must be at least 1".into());
        }
        if self.stepskew_trials == 0 {
            return fail("stepskew_trials must be at least 1".into());
        }
        if !(1..=16).contains(&self.driver.block_len) {
            return fail(format!(
                "driver.block_len must lie in 1..=16, got {}",
                self.driver.block_len
            ));
        }
        if self.driver.ceiling <= 0.0 {
            return fail("driver.ceiling must be positive".into());
        }
        if self.driver.t_speed <= 0.0 {
            return fail("driver.t_speed must be positive".into());
        }
        // one symbol per unit flow time keeps consecutive windows on
        // disjoint tape blocks; the network construction relies on it
        if (self.driver.ceiling - self.driver.t_speed).abs() > 1e-12 {
            return fail(format!(
                "driver.ceiling must equal driver.t_speed ({} != {})",
                self.driver.ceiling, self.driver.t_speed
            ));
        }
        if !(self.driver.window_width > 0.0 && self.driver.window_width < 1.0) {
            return fail("driver.window_width must lie in (0, 1)".into());
        }
        if self.driver.kappa <= 0.0 {
            return fail("driver.kappa must be positive".into());
        }
        if self.pipeflow.orbits == 0 || self.pipeflow.steps == 0 {
            return fail("pipeflow.orbits and pipeflow.steps must be at least 1".into());
        }
        if self.comparison_max_len < 2 {
            return fail("comparison_max_len must be at least 2".into());
        }
        if let Some(delta) = self.shadowing_delta {
            if delta <= 0.0 {
                return fail("shadowing_delta must be positive".into());
            }
        }
        // resolves the map name and checks its parameters
        self.build_system()?;
        Ok(())
    }

    pub fn build_system(&self) -> Result<MapSystem> {
        MapSystem::by_name(&self.system.name, &self.system.params)
    }

    pub fn network_params(&self) -> NetworkParams {
        NetworkParams {
            window_width: self.driver.window_width,
            kappa: self.driver.kappa,
            t_speed: self.driver.t_speed,
            block_len: self.driver.block_len,
        }
    }

    pub fn shadowing_delta(&self) -> f64 {
        self.shadowing_delta.unwrap_or(2.0 * self.mesh)
    }
}

/// A ready-to-run doubling configuration, also serving as schema
/// documentation.
pub fn example_config() -> ExperimentConfig {
    ExperimentConfig {
        system: SystemConfig {
            name: "doubling".into(),
            params: BTreeMap::new(),
        },
        mesh: 0.125,
        orbit_length: 200_000,
        stepskew_trials: 100_000,
        driver: DriverConfig {
            block_len: 16,
            ceiling: 1.0,
            window_width: 0.01,
            t_speed: 1.0,
            kappa: 10.0,
        },
        pipeflow: PipeflowConfig {
            orbits: 100_000,
            steps: 4,
        },
        comparison_max_len: 4,
        shadowing_delta: None,
        seed: 1,
        out_dir: PathBuf::from("out"),
    }
}
