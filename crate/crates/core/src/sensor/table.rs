//! Per-pixel fisheye correspondence: image coordinates to spherical
//! surface coordinates (theta from the optical axis, psi around it).

use std::path::Path;

use nalgebra::Vector3;

use super::gp::GpCorrespondence;
use super::model::{SensorError, SensorModel};

/// Tolerated overshoot of f(r) / R0 beyond 1 before a pixel is invalid.
pub const RATIO_SLACK: f64 = 1e-6;

const SIDECAR_MAGIC: [u8; 4] = *b"DTCT";
const SIDECAR_VERSION: u32 = 1;
const SIDECAR_HEADER: usize = 16;
const SIDECAR_PIXEL: usize = 9;

/// Maps a sub-pixel coordinate to spherical surface coordinates, or `None`
/// when the pixel is the center singularity, beyond the calibrated radius,
/// or maps past the hemisphere rim.
pub fn pixel_to_spherical(
    model: &SensorModel,
    gp: &GpCorrespondence,
    u: f64,
    v: f64,
) -> Option<(f64, f64)> {
    let du = u - model.center_u;
    let dv = v - model.center_v;
    let r = du.hypot(dv);
    if r <= 0.0 || r > gp.max_radius() {
        return None;
    }
    let ratio = gp.predict(r) / model.hemisphere_radius;
    if ratio > 1.0 + RATIO_SLACK {
        return None;
    }
    let theta = ratio.clamp(0.0, 1.0).asin();
    let psi = dv.atan2(du);
    Some((theta, psi))
}

/// Dense correspondence over the full crop. Angles are stored as f32, the
/// same precision the sidecar file holds, so a cached table reproduces the
/// freshly built one bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceTable {
    width: u32,
    height: u32,
    theta: Vec<f32>,
    psi: Vec<f32>,
    valid: Vec<bool>,
    valid_count: u32,
}

/// Evaluates the correspondence at every pixel center of the model's crop.
///
/// Angles are stored at f32 precision; rounding toward the open bounds is
/// capped so stored values keep 0 <= theta < pi/2 and -pi < psi <= pi.
pub fn build_correspondence_table(
    model: &SensorModel,
    gp: &GpCorrespondence,
) -> CorrespondenceTable {
    let theta_cap = (std::f64::consts::FRAC_PI_2 as f32).next_down();
    let psi_cap = (std::f64::consts::PI as f32).next_down();
    let (width, height) = (model.image_width, model.image_height);
    let n = width as usize * height as usize;
    let mut theta = vec![0.0f32; n];
    let mut psi = vec![0.0f32; n];
    let mut valid = vec![false; n];
    let mut valid_count = 0u32;
    for y in 0..height {
        for x in 0..width {
            let i = y as usize * width as usize + x as usize;
            if let Some((t, p)) = pixel_to_spherical(model, gp, x as f64, y as f64) {
                theta[i] = (t as f32).clamp(0.0, theta_cap);
                psi[i] = (p as f32).clamp(-psi_cap, psi_cap);
                valid[i] = true;
                valid_count += 1;
            }
        }
    }
    CorrespondenceTable {
        width,
        height,
        theta,
        psi,
        valid,
        valid_count,
    }
}

impl CorrespondenceTable {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn valid_count(&self) -> u32 {
        self.valid_count
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn is_valid(&self, x: u32, y: u32) -> bool {
        self.valid[self.index(x, y)]
    }

    /// (theta, psi) at a valid pixel.
    pub fn spherical(&self, x: u32, y: u32) -> Option<(f64, f64)> {
        let i = self.index(x, y);
        self.valid[i].then(|| (self.theta[i] as f64, self.psi[i] as f64))
    }

    /// Unit ray direction from the sensor origin through a valid pixel.
    pub fn direction(&self, x: u32, y: u32) -> Option<Vector3<f64>> {
        self.spherical(x, y).map(|(theta, psi)| {
            Vector3::new(
                theta.sin() * psi.cos(),
                theta.sin() * psi.sin(),
                theta.cos(),
            )
        })
    }

    /// Iterates over valid pixels as (x, y, theta, psi).
    pub fn valid_pixels(&self) -> impl Iterator<Item = (u32, u32, f64, f64)> + '_ {
        (0..self.height).flat_map(move |y| {
            (0..self.width).filter_map(move |x| {
                self.spherical(x, y).map(|(t, p)| (x, y, t, p))
            })
        })
    }

    /// Writes the binary sidecar: "DTCT", u32 version, u32 width, u32
    /// height, then f32 theta, f32 psi, u8 valid per pixel, little endian.
    pub fn write_sidecar(&self, path: &Path) -> Result<(), SensorError> {
        let n = self.width as usize * self.height as usize;
        let mut bytes = Vec::with_capacity(SIDECAR_HEADER + n * SIDECAR_PIXEL);
        bytes.extend_from_slice(&SIDECAR_MAGIC);
        bytes.extend_from_slice(&SIDECAR_VERSION.to_le_bytes());
        bytes.extend_from_slice(&self.width.to_le_bytes());
        bytes.extend_from_slice(&self.height.to_le_bytes());
        for i in 0..n {
            bytes.extend_from_slice(&self.theta[i].to_le_bytes());
            bytes.extend_from_slice(&self.psi[i].to_le_bytes());
            bytes.push(self.valid[i] as u8);
        }
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn read_sidecar(path: &Path) -> Result<CorrespondenceTable, SensorError> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < SIDECAR_HEADER {
            return Err(SensorError::SidecarLength {
                found: bytes.len(),
                expected: SIDECAR_HEADER,
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != SIDECAR_MAGIC {
            return Err(SensorError::SidecarMagic { found: magic });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != SIDECAR_VERSION {
            return Err(SensorError::SidecarVersion {
                found: version,
                expected: SIDECAR_VERSION,
            });
        }
        let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
        let n = width as usize * height as usize;
        let expected = SIDECAR_HEADER + n * SIDECAR_PIXEL;
        if bytes.len() != expected {
            return Err(SensorError::SidecarLength {
                found: bytes.len(),
                expected,
            });
        }
        let mut theta = vec![0.0f32; n];
        let mut psi = vec![0.0f32; n];
        let mut valid = vec![false; n];
        let mut valid_count = 0u32;
        for i in 0..n {
            let at = SIDECAR_HEADER + i * SIDECAR_PIXEL;
            theta[i] = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
            psi[i] = f32::from_le_bytes(bytes[at + 4..at + 8].try_into().unwrap());
            valid[i] = bytes[at + 8] != 0;
            valid_count += valid[i] as u32;
        }
        Ok(CorrespondenceTable {
            width,
            height,
            theta,
            psi,
            valid,
            valid_count,
        })
    }
}
