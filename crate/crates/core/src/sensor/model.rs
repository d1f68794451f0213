//! Fixed sensor geometry and 8-bit depression quantization.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from sensor-geometry construction, calibration, and calibration
/// file I/O.
#[derive(Debug, Error)]
pub enum SensorError {
    #[error("max depression {max_depression} mm must lie strictly between 0 and the hemisphere radius {hemisphere_radius} mm")]
    DepressionRange {
        max_depression: f64,
        hemisphere_radius: f64,
    },
    #[error("center ({u_c}, {v_c}) lies outside the {width}x{height} pixel grid")]
    CenterOutsideImage {
        u_c: f64,
        v_c: f64,
        width: u32,
        height: u32,
    },
    #[error("sensor geometry fields must be finite and positive")]
    BadGeometry,
    #[error("depression {value} mm lies outside [0, {max}] mm")]
    DepthOutOfRange { value: f64, max: f64 },
    #[error("depth map needs {expected} codes for {width}x{height}, got {got}")]
    CodeCountMismatch {
        width: u32,
        height: u32,
        expected: usize,
        got: usize,
    },
    #[error("need at least {min} calibration samples, got {got}")]
    TooFewSamples { got: usize, min: usize },
    #[error("calibration sample ({r}, {y}) is not finite")]
    NonFiniteSample { r: f64, y: f64 },
    #[error("conflicting targets at radius {r} px: {a} and {b} mm differ beyond {tolerance} mm (3 sigma_n)")]
    InconsistentSamples {
        r: f64,
        a: f64,
        b: f64,
        tolerance: f64,
    },
    #[error("kernel matrix is not positive definite; try a noise level above {noise_std}")]
    NotPositiveDefinite { noise_std: f64 },
    #[error("kernel hyperparameters must be finite with positive length scale and non-negative deviations")]
    BadKernel,
    #[error("found {found} saw-tooth edges, need at least {min}")]
    TooFewEdges { found: usize, min: usize },
    #[error("saw-tooth edge radii stop increasing at edge {index}")]
    NonMonotoneEdges { index: usize },
    #[error("correspondence sidecar starts with {found:?}, expected \"DTCT\"")]
    SidecarMagic { found: [u8; 4] },
    #[error("correspondence sidecar version {found} is not supported (expected {expected})")]
    SidecarVersion { found: u32, expected: u32 },
    #[error("correspondence sidecar holds {found} bytes, expected {expected}")]
    SidecarLength { found: usize, expected: usize },
    #[error("calibration file format {found:?} is not {expected:?}")]
    CalibrationFormat { found: String, expected: String },
    #[error("calibration file version {found} is not supported (expected {expected})")]
    CalibrationVersion { found: u32, expected: u32 },
    #[error("calibration content hash mismatch: stored {stored}, recomputed {computed}")]
    HashMismatch { stored: String, computed: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Fixed geometry of one sensor: hemispherical elastomer of radius
/// `hemisphere_radius` viewed from the origin, depressions bounded by
/// `max_depression`, imaged onto a square crop centered on
/// (`center_u`, `center_v`).
///
/// All lengths are millimeters; pixel centers sit at integer coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorModel {
    pub hemisphere_radius: f64,
    pub sensor_height: f64,
    pub max_depression: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub center_u: f64,
    pub center_v: f64,
    pub crop_size: u32,
}

impl SensorModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        hemisphere_radius: f64,
        sensor_height: f64,
        max_depression: f64,
        image_width: u32,
        image_height: u32,
        center_u: f64,
        center_v: f64,
        crop_size: u32,
    ) -> Result<SensorModel, SensorError> {
        let model = SensorModel {
            hemisphere_radius,
            sensor_height,
            max_depression,
            image_width,
            image_height,
            center_u,
            center_v,
            crop_size,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        let finite = self.hemisphere_radius.is_finite()
            && self.sensor_height.is_finite()
            && self.max_depression.is_finite()
            && self.center_u.is_finite()
            && self.center_v.is_finite();
        if !finite
            || self.hemisphere_radius <= 0.0
            || self.sensor_height <= 0.0
            || self.image_width == 0
            || self.image_height == 0
            || self.crop_size == 0
        {
            return Err(SensorError::BadGeometry);
        }
        if self.max_depression <= 0.0 || self.max_depression >= self.hemisphere_radius {
            return Err(SensorError::DepressionRange {
                max_depression: self.max_depression,
                hemisphere_radius: self.hemisphere_radius,
            });
        }
        let inside = self.center_u >= 0.0
            && self.center_u <= (self.image_width - 1) as f64
            && self.center_v >= 0.0
            && self.center_v <= (self.image_height - 1) as f64;
        if !inside {
            return Err(SensorError::CenterOutsideImage {
                u_c: self.center_u,
                v_c: self.center_v,
                width: self.image_width,
                height: self.image_height,
            });
        }
        Ok(())
    }

    /// Full-resolution sensor: 570x570 crop of a 25 mm hemisphere.
    pub fn full_scale() -> SensorModel {
        SensorModel {
            hemisphere_radius: 25.0,
            sensor_height: 35.0,
            max_depression: 9.4,
            image_width: 570,
            image_height: 570,
            center_u: 284.5,
            center_v: 284.5,
            crop_size: 570,
        }
    }

    /// Down-scaled sensor used throughout the test suite: the same physical
    /// geometry imaged onto a 64x64 crop.
    pub fn desk_scale() -> SensorModel {
        SensorModel {
            hemisphere_radius: 25.0,
            sensor_height: 35.0,
            max_depression: 9.4,
            image_width: 64,
            image_height: 64,
            center_u: 31.5,
            center_v: 31.5,
            crop_size: 64,
        }
    }

    /// Millimeters of depression per 8-bit code unit.
    pub fn code_scale(&self) -> f64 {
        self.max_depression / 255.0
    }

    /// Quantizes a depression in [0, max_depression] to an 8-bit code,
    /// rounding half up.
    pub fn encode_depth(&self, d: f64) -> Result<u8, SensorError> {
        if !d.is_finite() || d < 0.0 || d > self.max_depression {
            return Err(SensorError::DepthOutOfRange {
                value: d,
                max: self.max_depression,
            });
        }
        Ok((d / self.max_depression * 255.0).round() as u8)
    }

    /// Millimeters of depression encoded by a code unit.
    pub fn decode_depth(&self, code: u8) -> f64 {
        code as f64 * self.max_depression / 255.0
    }

    /// Distance of a sub-pixel coordinate from the image center.
    pub fn pixel_radius(&self, u: f64, v: f64) -> f64 {
        (u - self.center_u).hypot(v - self.center_v)
    }
}

/// Per-pixel 8-bit depression codes: 0 is the undeformed surface, 255 a
/// depression of `max_depression` millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    codes: Vec<u8>,
    max_depression: f64,
}

impl DepthMap {
    pub fn new(
        width: u32,
        height: u32,
        codes: Vec<u8>,
        max_depression: f64,
    ) -> Result<DepthMap, SensorError> {
        let expected = width as usize * height as usize;
        if codes.len() != expected {
            return Err(SensorError::CodeCountMismatch {
                width,
                height,
                expected,
                got: codes.len(),
            });
        }
        if !max_depression.is_finite() || max_depression <= 0.0 {
            return Err(SensorError::BadGeometry);
        }
        Ok(DepthMap {
            width,
            height,
            codes,
            max_depression,
        })
    }

    pub fn zeros(width: u32, height: u32, max_depression: f64) -> DepthMap {
        DepthMap {
            width,
            height,
            codes: vec![0; width as usize * height as usize],
            max_depression,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn max_depression(&self) -> f64 {
        self.max_depression
    }

    /// Millimeters per code unit.
    pub fn scale(&self) -> f64 {
        self.max_depression / 255.0
    }

    pub fn code(&self, x: u32, y: u32) -> u8 {
        self.codes[y as usize * self.width as usize + x as usize]
    }

    pub fn set_code(&mut self, x: u32, y: u32, code: u8) {
        self.codes[y as usize * self.width as usize + x as usize] = code;
    }

    /// Depression in millimeters at a pixel.
    pub fn decode(&self, x: u32, y: u32) -> f64 {
        self.code(x, y) as f64 * self.max_depression / 255.0
    }

    pub fn write_png(&self, path: &Path) -> Result<(), SensorError> {
        let buffer = ::image::GrayImage::from_raw(self.width, self.height, self.codes.clone())
            .expect("raw buffer length matches dimensions");
        buffer
            .save_with_format(path, ::image::ImageFormat::Png)
            .map_err(|e| SensorError::Io(std::io::Error::other(e)))?;
        Ok(())
    }

    /// Reads an 8-bit grayscale PNG; `max_depression` comes from the
    /// metadata stored alongside the image.
    pub fn read_png(path: &Path, max_depression: f64) -> Result<DepthMap, SensorError> {
        let decoded =
            ::image::open(path).map_err(|e| SensorError::Io(std::io::Error::other(e)))?;
        let gray = decoded.into_luma8();
        DepthMap::new(gray.width(), gray.height(), gray.into_raw(), max_depression)
    }
}
