//! Run manifests: a JSON file naming the world and sensor spec files plus
//! every knob a pipeline run needs. Experiments are configurations; a
//! manifest pins one so the whole run can be reproduced from a single path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{ProcessNoise, StrategyConfig, StrategyMode, UkfParams};
use crate::matcher::IcpConfig;
use crate::metrics::{ValidityTol, VptGridSpec};
use crate::sim::{SensorSpec, WorldSpec};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("referenced path does not exist: {0}")]
    MissingPath(String),
}

/// Mode-independent filter tuning; combined with a mode to produce a
/// [`StrategyConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyTuning {
    pub gate_threshold: f64,
    pub process_noise: ProcessNoise,
    pub gps_sigma: f64,
    pub icp_position_sigma: f64,
    pub icp_heading_sigma: f64,
    pub gps_speed_threshold: f64,
    pub ukf: UkfParams,
}

impl Default for StrategyTuning {
    fn default() -> Self {
        let base = StrategyConfig::for_mode(StrategyMode::DeadReckoning);
        StrategyTuning {
            gate_threshold: base.gate_threshold,
            process_noise: base.process_noise,
            gps_sigma: base.gps_sigma,
            icp_position_sigma: base.icp_position_sigma,
            icp_heading_sigma: base.icp_heading_sigma,
            gps_speed_threshold: base.gps_speed_threshold,
            ukf: base.ukf,
        }
    }
}

impl StrategyTuning {
    pub fn config_for(&self, mode: StrategyMode) -> StrategyConfig {
        StrategyConfig {
            mode,
            gps_used_after_init: mode == StrategyMode::Gps,
            gate_threshold: self.gate_threshold,
            process_noise: self.process_noise,
            gps_sigma: self.gps_sigma,
            icp_position_sigma: self.icp_position_sigma,
            icp_heading_sigma: self.icp_heading_sigma,
            gps_speed_threshold: self.gps_speed_threshold,
            ukf: self.ukf,
        }
    }
}

/// Metric evaluation knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub grid: VptGridSpec,
    /// Heading slice for radius summaries (must sit on the grid).
    pub theta_slice: f64,
    pub validity_tol: ValidityTol,
    /// Aggregation window for the radius profile, meters.
    pub window: f64,
    /// Arc spacing between frames evaluated in the profile, meters.
    pub profile_stride: f64,
    pub pau_max_length: f64,
    pub pau_length_step: f64,
    pub pau_stride: f64,
    pub margin_step: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            grid: VptGridSpec {
                xy_step: 1.0,
                xy_extent: 4.0,
                heading_step: 0.1,
                heading_extent: 0.1,
            },
            theta_slice: 0.1,
            validity_tol: ValidityTol::default(),
            window: 6.0,
            profile_stride: 3.0,
            pau_max_length: 20.0,
            pau_length_step: 0.5,
            pau_stride: 0.5,
            margin_step: 1.0,
        }
    }
}

impl MetricsConfig {
    pub fn pau_lengths(&self) -> Vec<f64> {
        let mut lengths = Vec::new();
        let mut k = 1u64;
        loop {
            let l = k as f64 * self.pau_length_step;
            if l > self.pau_max_length + 1e-9 {
                break;
            }
            lengths.push(l);
            k += 1;
        }
        lengths
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// Path to the world spec JSON, relative to the manifest file.
    pub world_spec: PathBuf,
    /// Path to the sensor spec JSON, relative to the manifest file.
    pub sensor_spec: PathBuf,
    pub speed: f64,
    pub strategies: Vec<StrategyMode>,
    #[serde(default)]
    pub strategy: StrategyTuning,
    #[serde(default)]
    pub icp: IcpConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Run seed; overrides the seed stored in the world spec file.
    pub seed: u64,
}

/// A manifest with its referenced spec files loaded and the seed applied.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: RunManifest,
    pub world: WorldSpec,
    pub sensors: SensorSpec,
    /// Directory of the manifest file; relative paths resolve against it.
    pub base_dir: PathBuf,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|e| ManifestError::Read {
        path: path.display().to_string(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| ManifestError::Parse {
        path: path.display().to_string(),
        source: e,
    })
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<LoadedManifest, ManifestError> {
        let manifest: RunManifest = read_json(path)?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let world_path = base_dir.join(&manifest.world_spec);
        let sensor_path = base_dir.join(&manifest.sensor_spec);
        for p in [&world_path, &sensor_path] {
            if !p.exists() {
                return Err(ManifestError::MissingPath(p.display().to_string()));
            }
        }
        let mut world: WorldSpec = read_json(&world_path)?;
        let sensors: SensorSpec = read_json(&sensor_path)?;
        world.seed = manifest.seed;
        Ok(LoadedManifest {
            manifest,
            world,
            sensors,
            base_dir,
        })
    }

    /// Seed-overridden copy (`--seed`).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
