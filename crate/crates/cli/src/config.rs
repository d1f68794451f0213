//! Run configuration: one JSON document drives every command. Unknown
//! keys are rejected so typos fail loudly instead of silently falling
//! back to defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use densetact_core::net::NetConfig;
use densetact_core::sim::DatasetSpec;
use densetact_core::{LossSpec, SensorModel, TrainConfig};

use crate::error::CliError;

/// Everything a run can configure, with working desk-scale defaults; a
/// config file only needs the fields it wants to change.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sensor: SensorBlock,
    pub calibration: CalibrationBlock,
    pub dataset: DatasetSpec,
    pub training: TrainingBlock,
    pub prediction: PredictionBlock,
    pub evaluation: EvaluationBlock,
}

/// Which sensor geometry to run at: `desk` (64x64 crop, 9.4 mm max
/// depression) or `full` (the production-scale geometry).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorBlock {
    pub preset: String,
}

impl Default for SensorBlock {
    fn default() -> Self {
        SensorBlock {
            preset: "desk".to_string(),
        }
    }
}

impl SensorBlock {
    pub fn model(&self) -> Result<SensorModel, CliError> {
        match self.preset.as_str() {
            "desk" => Ok(SensorModel::desk_scale()),
            "full" => Ok(SensorModel::full_scale()),
            other => Err(CliError::usage(
                "sensor",
                "resolve-config",
                format!("unknown sensor preset {other:?} (expected \"desk\" or \"full\")"),
            )),
        }
    }
}

/// Calibration target handling. With `image` unset the synthetic
/// saw-tooth fixture is rendered in place of a photograph: `teeth` rings
/// with edges equally spaced out to `max_edge_radius_px`, one tooth per
/// `tooth_interval_deg` of surface angle.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationBlock {
    pub image: Option<PathBuf>,
    pub tooth_interval_deg: f64,
    pub teeth: usize,
    pub max_edge_radius_px: f64,
    /// Grid-search the GP length scale instead of using the default.
    pub grid_search: bool,
}

impl Default for CalibrationBlock {
    fn default() -> Self {
        CalibrationBlock {
            image: None,
            tooth_interval_deg: 10.0,
            teeth: 8,
            max_edge_radius_px: 30.0,
            grid_search: false,
        }
    }
}

/// Architecture, optimizer schedule, and loss weights.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingBlock {
    pub net: NetConfig,
    pub train: TrainConfig,
    pub loss: LossSpec,
}

/// Inference input; `image` must point at an RGB PNG matching the sensor
/// crop.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionBlock {
    pub image: Option<PathBuf>,
}

/// Evaluation mode and registration parameters. `dataset` mode scores
/// test-split predictions against their reference depth maps; `grasp`
/// mode registers synthetic sensor patches against an object model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationBlock {
    pub mode: String,
    pub max_iterations: usize,
    /// Correspondences beyond this many millimeters are ignored; unset
    /// picks 2% of the object's bounding-sphere radius.
    pub inlier_threshold_mm: Option<f64>,
    pub grasp: GraspFixtureBlock,
}

impl Default for EvaluationBlock {
    fn default() -> Self {
        EvaluationBlock {
            mode: "dataset".to_string(),
            max_iterations: 300,
            inlier_threshold_mm: None,
            grasp: GraspFixtureBlock::default(),
        }
    }
}

/// Synthetic grasp fixture: `sensors` patches of `points` points each,
/// sampled from a sphere at the sensor's rest radius, optionally
/// displaced by isotropic Gaussian noise of `noise_mm` total magnitude.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraspFixtureBlock {
    pub sensors: usize,
    pub points: usize,
    pub noise_mm: f64,
    pub seed: u64,
}

impl Default for GraspFixtureBlock {
    fn default() -> Self {
        GraspFixtureBlock {
            sensors: 2,
            points: 600,
            noise_mm: 0.0,
            seed: 17,
        }
    }
}

impl RunConfig {
    /// Loads the file when given, otherwise the built-in defaults.
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::usage(
                "config",
                "load",
                format!("cannot read {}: {e}", path.display()),
            )
        })?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::usage("config", "load", format!("{}: {e}", path.display()))
        })
    }

    /// Cheap semantic validation of everything checkable without I/O.
    pub fn validate(&self) -> Result<(), CliError> {
        self.sensor.model()?;
        let usage = |cause: String| CliError::usage("config", "validate", cause);
        self.training
            .train
            .validate()
            .map_err(|e| usage(e.to_string()))?;
        self.training
            .loss
            .validate()
            .map_err(|e| usage(e.to_string()))?;
        if !(self.calibration.tooth_interval_deg > 0.0) {
            return Err(usage(format!(
                "calibration.tooth_interval_deg must be positive, got {}",
                self.calibration.tooth_interval_deg
            )));
        }
        if self.calibration.teeth == 0 {
            return Err(usage("calibration.teeth must be positive".into()));
        }
        if !(self.calibration.max_edge_radius_px > 0.0) {
            return Err(usage(format!(
                "calibration.max_edge_radius_px must be positive, got {}",
                self.calibration.max_edge_radius_px
            )));
        }
        match self.evaluation.mode.as_str() {
            "dataset" | "grasp" => {}
            other => {
                return Err(usage(format!(
                    "evaluation.mode must be \"dataset\" or \"grasp\", got {other:?}"
                )))
            }
        }
        if self.evaluation.max_iterations == 0 {
            return Err(usage("evaluation.max_iterations must be positive".into()));
        }
        if let Some(t) = self.evaluation.inlier_threshold_mm {
            if !(t > 0.0) || !t.is_finite() {
                return Err(usage(format!(
                    "evaluation.inlier_threshold_mm must be positive, got {t}"
                )));
            }
        }
        if self.evaluation.grasp.sensors == 0 || self.evaluation.grasp.points == 0 {
            return Err(usage(
                "evaluation.grasp.sensors and .points must be positive".into(),
            ));
        }
        if !(self.evaluation.grasp.noise_mm >= 0.0) {
            return Err(usage(format!(
                "evaluation.grasp.noise_mm must be non-negative, got {}",
                self.evaluation.grasp.noise_mm
            )));
        }
        Ok(())
    }

    /// SHA-256 over the resolved JSON serialization; logged with every
    /// run so artifacts can be traced to an exact configuration.
    pub fn content_hash(&self) -> String {
        let payload = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(payload.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let config = RunConfig::default();
        config.validate().unwrap();
        assert_eq!(config.sensor.preset, "desk");
        assert_eq!(config.dataset.train_count, 180);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"datase": {}}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
        let nested = serde_json::from_str::<RunConfig>(
            r#"{"training": {"train": {"epoch": 3}}}"#,
        )
        .unwrap_err();
        assert!(nested.to_string().contains("unknown field"));
    }

    #[test]
    fn partial_overrides_keep_other_defaults() {
        let config: RunConfig =
            serde_json::from_str(r#"{"dataset": {"train_count": 6}}"#).unwrap();
        assert_eq!(config.dataset.train_count, 6);
        assert_eq!(config.dataset.test_count, 20);
        assert_eq!(config.training.train.epochs, 20);
    }

    #[test]
    fn bad_preset_fails_validation() {
        let config: RunConfig =
            serde_json::from_str(r#"{"sensor": {"preset": "pocket"}}"#).unwrap();
        assert_eq!(config.validate().unwrap_err().code(), 2);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.content_hash(), b.content_hash());
        b.dataset.seed = 99;
        assert_ne!(a.content_hash(), b.content_hash());
    }
}
