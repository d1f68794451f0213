//! Versioned calibration document: sensor geometry, GP training pairs and
//! hyperparameters, and a content hash guarding against silent corruption.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::sim::SensorImage;

use super::gp::{fit_gp, fit_gp_grid_search, GpCorrespondence, GpKernel};
use super::model::{SensorError, SensorModel};
use super::sawtooth::detect_sawtooth_edges;
use super::table::{build_correspondence_table, CorrespondenceTable};

const FORMAT: &str = "densetact-calibration";
const VERSION: u32 = 1;

/// GP state stored in the calibration file; the posterior is refit from
/// these pairs and hyperparameters on load, which reproduces the original
/// fit exactly because the fit is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpBlock {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub kernel: GpKernel,
    pub log_marginal_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub format: String,
    pub version: u32,
    pub sensor: SensorModel,
    pub gp: GpBlock,
    pub valid_pixels: u32,
    pub content_hash: String,
}

impl CalibrationFile {
    pub fn new(
        sensor: SensorModel,
        gp: &GpCorrespondence,
        valid_pixels: u32,
    ) -> CalibrationFile {
        let mut file = CalibrationFile {
            format: FORMAT.to_string(),
            version: VERSION,
            sensor,
            gp: GpBlock {
                inputs: gp.training_inputs().to_vec(),
                targets: gp.training_targets().to_vec(),
                kernel: *gp.kernel(),
                log_marginal_likelihood: gp.log_marginal_likelihood(),
            },
            valid_pixels,
            content_hash: String::new(),
        };
        file.content_hash = file.compute_hash();
        file
    }

    /// SHA-256 of the JSON serialization with an empty hash field.
    fn compute_hash(&self) -> String {
        let mut unhashed = self.clone();
        unhashed.content_hash = String::new();
        let payload = serde_json::to_string(&unhashed).expect("calibration serializes");
        let digest = Sha256::digest(payload.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), SensorError> {
        let payload = serde_json::to_string_pretty(self)?;
        std::fs::write(path, payload)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CalibrationFile, SensorError> {
        let payload = std::fs::read_to_string(path)?;
        let file: CalibrationFile = serde_json::from_str(&payload)?;
        if file.format != FORMAT {
            return Err(SensorError::CalibrationFormat {
                found: file.format,
                expected: FORMAT.to_string(),
            });
        }
        if file.version != VERSION {
            return Err(SensorError::CalibrationVersion {
                found: file.version,
                expected: VERSION,
            });
        }
        let computed = file.compute_hash();
        if computed != file.content_hash {
            return Err(SensorError::HashMismatch {
                stored: file.content_hash,
                computed,
            });
        }
        file.sensor.validate()?;
        Ok(file)
    }

    /// Refits the stored GP; deterministic, so predictions match the fit
    /// that produced this file bit for bit.
    pub fn correspondence(&self) -> Result<GpCorrespondence, SensorError> {
        let samples: Vec<(f64, f64)> = self
            .gp
            .inputs
            .iter()
            .copied()
            .zip(self.gp.targets.iter().copied())
            .collect();
        fit_gp(&samples, Some(self.gp.kernel))
    }
}

/// Full calibration flow: detect saw-tooth edges in the target image, pair
/// each edge with its projected surface radius R0 sin(theta), fit the GP
/// (optionally grid-searching the length scale), and build the per-pixel
/// table.
pub fn calibrate_from_image(
    image: &SensorImage,
    model: &SensorModel,
    tooth_interval_deg: f64,
    grid_search: bool,
) -> Result<(CalibrationFile, GpCorrespondence, CorrespondenceTable), SensorError> {
    let edges = detect_sawtooth_edges(image, model, tooth_interval_deg)?;
    let samples: Vec<(f64, f64)> = edges
        .into_iter()
        .map(|(r, theta)| (r, model.hemisphere_radius * theta.sin()))
        .collect();
    let gp = if grid_search {
        fit_gp_grid_search(&samples)?
    } else {
        fit_gp(&samples, None)?
    };
    let table = build_correspondence_table(model, &gp);
    let file = CalibrationFile::new(model.clone(), &gp, table.valid_count());
    Ok((file, gp, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::sawtooth::{equidistant_edge_radii, render_sawtooth_image};

    fn desk_calibration() -> (CalibrationFile, GpCorrespondence, CorrespondenceTable) {
        let model = SensorModel::desk_scale();
        let image = render_sawtooth_image(&model, &equidistant_edge_radii(30.0, 8), None);
        calibrate_from_image(&image, &model, 10.0, false).unwrap()
    }

    #[test]
    fn desk_fixture_calibrates_end_to_end() {
        let (file, gp, table) = desk_calibration();
        assert_eq!(file.valid_pixels, table.valid_count());
        assert!(file.gp.log_marginal_likelihood.is_finite());
        // Teeth at 10 degree steps reach 80 degrees at the 30 px rim.
        let rim = gp.predict(30.0);
        let want = 25.0 * 80.0f64.to_radians().sin();
        assert!((rim - want).abs() < 0.2, "rim = {rim}, want = {want}");
        let expected = std::f64::consts::PI * 30.0 * 30.0;
        let count = table.valid_count() as f64;
        assert!((count - expected).abs() / expected < 0.02, "count = {count}");
    }

    #[test]
    fn save_load_round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("calibration.json");
        let (file, _, table) = desk_calibration();
        file.save(&path).unwrap();
        let back = CalibrationFile::load(&path).unwrap();
        assert_eq!(back, file);

        let rebuilt = build_correspondence_table(&back.sensor, &back.correspondence().unwrap());
        assert_eq!(rebuilt, table);
    }

    #[test]
    fn tampered_file_fails_the_hash_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("calibration.json");
        let (file, _, _) = desk_calibration();
        let mut tampered = file.clone();
        tampered.valid_pixels += 1;
        tampered.save(&path).unwrap();
        assert!(matches!(
            CalibrationFile::load(&path),
            Err(SensorError::HashMismatch { .. })
        ));
    }

    #[test]
    fn repeated_calibration_is_bit_identical() {
        let (a, _, _) = desk_calibration();
        let (b, _, _) = desk_calibration();
        assert_eq!(a, b);
        assert_eq!(a.content_hash, b.content_hash);
    }

    #[test]
    fn wrong_format_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("calibration.json");
        let (mut file, _, _) = desk_calibration();
        file.format = "something-else".to_string();
        file.content_hash = file.compute_hash();
        file.save(&path).unwrap();
        assert!(matches!(
            CalibrationFile::load(&path),
            Err(SensorError::CalibrationFormat { .. })
        ));
    }
}
