//! Depth-error statistics between predicted and reference depth maps.

use serde::Serialize;

use crate::sensor::{CorrespondenceTable, DepthMap};

use super::CloudError;

/// Repeatability floor of the reference depth maps, mm; errors below this
/// are indistinguishable from measurement noise.
pub const GROUND_TRUTH_PRECISION_MM: f64 = 0.1096;

/// Per-image depth error.
#[derive(Debug, Clone, Serialize)]
pub struct ImageErrorRow {
    pub index: usize,
    pub mean_l1_mm: f64,
    pub mse_mm2: f64,
}

/// Depth-error summary over a set of prediction/reference pairs.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorStats {
    pub per_image: Vec<ImageErrorRow>,
    /// Mean of the per-image L1 means, mm.
    pub mean_l1_mm: f64,
    /// Sample standard deviation of the per-image L1 means, mm.
    pub std_l1_mm: f64,
    /// Min, lower quartile, median, upper quartile, max of the per-image
    /// L1 means, mm.
    pub quantiles_mm: [f64; 5],
    /// Echoes [`GROUND_TRUTH_PRECISION_MM`] so exports carry the floor.
    pub precision_floor_mm: f64,
}

impl ErrorStats {
    /// One CSV row per image.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,mean_l1_mm,mse_mm2\n");
        for row in &self.per_image {
            out.push_str(&format!(
                "{},{},{}\n",
                row.index, row.mean_l1_mm, row.mse_mm2
            ));
        }
        out
    }
}

/// Compare each prediction against its reference over the valid pixels of
/// the correspondence table.
///
/// All maps must match the table's crop size and share a depth scale.
pub fn error_statistics(
    predictions: &[DepthMap],
    truths: &[DepthMap],
    table: &CorrespondenceTable,
) -> Result<ErrorStats, CloudError> {
    if predictions.len() != truths.len() {
        return Err(CloudError::LengthMismatch {
            left: predictions.len(),
            right: truths.len(),
        });
    }
    if predictions.is_empty() {
        return Err(CloudError::Parameter {
            reason: "at least one prediction/reference pair is required".into(),
        });
    }
    if table.valid_count() == 0 {
        return Err(CloudError::EmptyCloud);
    }
    let mut per_image = Vec::with_capacity(predictions.len());
    for (index, (pred, truth)) in predictions.iter().zip(truths).enumerate() {
        for (what, map) in [("prediction", pred), ("reference", truth)] {
            if map.width() != table.width() || map.height() != table.height() {
                return Err(CloudError::GeometryMismatch {
                    want: format!("{}x{} crop", table.width(), table.height()),
                    got: format!("{}x{} {what} {index}", map.width(), map.height()),
                });
            }
        }
        if pred.max_depression() != truth.max_depression() {
            return Err(CloudError::GeometryMismatch {
                want: format!("depth scale {} mm", truth.max_depression()),
                got: format!("depth scale {} mm in prediction {index}", pred.max_depression()),
            });
        }
        let mut abs_sum = 0.0;
        let mut sq_sum = 0.0;
        let mut count = 0u32;
        for (x, y, _, _) in table.valid_pixels() {
            let diff = pred.decode(x, y) - truth.decode(x, y);
            abs_sum += diff.abs();
            sq_sum += diff * diff;
            count += 1;
        }
        per_image.push(ImageErrorRow {
            index,
            mean_l1_mm: abs_sum / count as f64,
            mse_mm2: sq_sum / count as f64,
        });
    }
    let means: Vec<f64> = per_image.iter().map(|r| r.mean_l1_mm).collect();
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let std = if means.len() < 2 {
        0.0
    } else {
        (means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    let mut sorted = means;
    sorted.sort_by(|a, b| a.total_cmp(b));
    let quantiles_mm = [
        quantile(&sorted, 0.0),
        quantile(&sorted, 0.25),
        quantile(&sorted, 0.5),
        quantile(&sorted, 0.75),
        quantile(&sorted, 1.0),
    ];
    Ok(ErrorStats {
        per_image,
        mean_l1_mm: mean,
        std_l1_mm: std,
        quantiles_mm,
        precision_floor_mm: GROUND_TRUTH_PRECISION_MM,
    })
}

/// Linear-interpolation quantile of an ascending slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::{build_correspondence_table, fit_gp, SensorModel};

    fn desk_table() -> (SensorModel, CorrespondenceTable) {
        let model = SensorModel::desk_scale();
        let samples: Vec<(f64, f64)> = (0..=40).map(|i| (i as f64, 0.55 * i as f64)).collect();
        let gp = fit_gp(&samples, None).unwrap();
        let table = build_correspondence_table(&model, &gp);
        (model, table)
    }

    fn constant_map(model: &SensorModel, code: u8) -> DepthMap {
        let mut map = DepthMap::zeros(model.image_width, model.image_height, model.max_depression);
        for y in 0..map.height() {
            for x in 0..map.width() {
                map.set_code(x, y, code);
            }
        }
        map
    }

    #[test]
    fn identical_maps_have_zero_error() {
        let (model, table) = desk_table();
        let maps = vec![constant_map(&model, 40), constant_map(&model, 0)];
        let stats = error_statistics(&maps, &maps.clone(), &table).unwrap();
        assert_eq!(stats.mean_l1_mm, 0.0);
        assert_eq!(stats.std_l1_mm, 0.0);
        assert_eq!(stats.quantiles_mm, [0.0; 5]);
        assert_eq!(stats.per_image.len(), 2);
        assert!(stats.per_image.iter().all(|r| r.mse_mm2 == 0.0));
        assert_eq!(stats.precision_floor_mm, GROUND_TRUTH_PRECISION_MM);
    }

    #[test]
    fn one_code_offset_maps_to_the_code_scale_in_millimeters() {
        let (model, table) = desk_table();
        let pred = vec![constant_map(&model, 1)];
        let truth = vec![constant_map(&model, 0)];
        let stats = error_statistics(&pred, &truth, &table).unwrap();
        let scale = model.max_depression / 255.0;
        assert!((stats.mean_l1_mm - scale).abs() < 1e-12);
        assert!((stats.per_image[0].mse_mm2 - scale * scale).abs() < 1e-12);
    }

    #[test]
    fn quantiles_interpolate_over_per_image_means() {
        let (model, table) = desk_table();
        let pred: Vec<DepthMap> = (0..5).map(|k| constant_map(&model, k)).collect();
        let truth: Vec<DepthMap> = (0..5).map(|_| constant_map(&model, 0)).collect();
        let stats = error_statistics(&pred, &truth, &table).unwrap();
        let scale = model.max_depression / 255.0;
        for (i, q) in stats.quantiles_mm.iter().enumerate() {
            assert!((q - i as f64 * scale).abs() < 1e-12, "quantile {i} = {q}");
        }
        assert!((stats.mean_l1_mm - 2.0 * scale).abs() < 1e-12);
    }

    #[test]
    fn mismatches_are_rejected() {
        let (model, table) = desk_table();
        let good = constant_map(&model, 0);
        assert!(matches!(
            error_statistics(&[good.clone()], &[], &table),
            Err(CloudError::LengthMismatch { left: 1, right: 0 })
        ));
        assert!(matches!(
            error_statistics(&[], &[], &table),
            Err(CloudError::Parameter { .. })
        ));
        let small = DepthMap::zeros(8, 8, model.max_depression);
        assert!(matches!(
            error_statistics(&[small], &[good.clone()], &table),
            Err(CloudError::GeometryMismatch { .. })
        ));
        let rescaled = DepthMap::zeros(model.image_width, model.image_height, 25.0);
        assert!(matches!(
            error_statistics(&[rescaled], &[good], &table),
            Err(CloudError::GeometryMismatch { .. })
        ));
    }

    #[test]
    fn csv_has_a_header_and_one_row_per_image() {
        let (model, table) = desk_table();
        let maps = vec![constant_map(&model, 3); 3];
        let stats = error_statistics(&maps, &maps.clone(), &table).unwrap();
        let csv = stats.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "image,mean_l1_mm,mse_mm2");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,"));
    }
}
