//! Photometric rendering of the sensor interior.
//!
//! Three colored point lights sit on a ring near the elastomer base, 120
//! degrees apart, shining up into the dome. Each valid pixel shades the
//! pressed surface point along its viewing ray with a Lambertian term, a
//! Blinn-Phong specular lobe, and distance falloff; a white ambient floor
//! keeps the whole aperture visible. There is no occlusion between the
//! surface and the lights.

use nalgebra::{Point3, Vector3};

use super::raycast::{depth_from_trace, trace_scene};
use super::scene::PressScene;
use super::{SensorImage, SimError};
use crate::sensor::{CorrespondenceTable, DepthMap, SensorModel};

/// White ambient floor added to every lit channel.
pub const AMBIENT: f64 = 0.10;
/// Specular weight relative to the diffuse term.
const SPECULAR_STRENGTH: f64 = 0.35;
/// Blinn-Phong exponent.
const SHININESS: i32 = 16;

/// A point light in the sensor frame.
#[derive(Debug, Clone)]
pub struct Light {
    pub position: Point3<f64>,
    /// Linear RGB emission color.
    pub color: [f64; 3],
    pub intensity: f64,
    /// Distance at which falloff halves the contribution, millimeters.
    pub falloff_mm: f64,
}

/// The stock illuminator: pure red, green, and blue point lights spaced
/// exactly 120 degrees apart on a ring around the lower half of the
/// dome. The ring height is chosen so pressing straight down the optical
/// axis visibly changes center-pixel intensity (diffuse and falloff
/// would nearly cancel for lights at the very base).
pub fn default_lights(model: &SensorModel) -> [Light; 3] {
    let r0 = model.hemisphere_radius;
    let ring = 0.8 * r0;
    let height = 0.5 * r0;
    let colors = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    std::array::from_fn(|k| {
        let azimuth = (120.0 * k as f64).to_radians();
        Light {
            position: Point3::new(ring * azimuth.cos(), ring * azimuth.sin(), height),
            color: colors[k],
            intensity: 1.0,
            falloff_mm: r0,
        }
    })
}

/// Shades one surface point. `point` is on the pressed surface in the
/// sensor frame and `normal` is unit length, facing the camera origin.
///
/// This is the continuous photometric field: rendering only samples it at
/// pixel ray intersections, so symmetry properties of a light arrangement
/// can be checked here without pixel-grid resampling.
pub fn shade_point(point: Point3<f64>, normal: Vector3<f64>, lights: &[Light]) -> [f64; 3] {
    let view = -point.coords.normalize();
    let mut out = [AMBIENT; 3];
    for light in lights {
        let to_light = light.position - point;
        let dist = to_light.norm();
        let l = to_light / dist;
        let diffuse = normal.dot(&l).max(0.0);
        let falloff = light.falloff_mm * light.falloff_mm
            / (light.falloff_mm * light.falloff_mm + dist * dist);
        let half = l + view;
        let specular = if half.norm() > 1e-12 {
            normal.dot(&half.normalize()).max(0.0).powi(SHININESS)
        } else {
            0.0
        };
        let level = light.intensity * falloff * (diffuse + SPECULAR_STRENGTH * specular);
        for c in 0..3 {
            out[c] += light.color[c] * level;
        }
    }
    for c in &mut out {
        *c = c.clamp(0.0, 1.0);
    }
    out
}

/// Renders the sensor's interior view of a scene. Pixels outside the
/// calibrated aperture stay black.
pub fn render_sensor_image(
    scene: &PressScene,
    table: &CorrespondenceTable,
    model: &SensorModel,
    lights: &[Light],
) -> SensorImage {
    let traced = trace_scene(scene, table, model);
    let mut image = SensorImage::zeros(table.width(), table.height());
    for px in &traced {
        let point = Point3::from(px.direction * px.r_ray);
        let rgb = shade_point(point, px.normal, lights);
        image.set(px.x, px.y, [rgb[0] as f32, rgb[1] as f32, rgb[2] as f32]);
    }
    image
}

/// One traced pass producing both the rendered image and its
/// ground-truth depth label; the pair generator's inner loop.
pub fn simulate_record(
    scene: &PressScene,
    table: &CorrespondenceTable,
    model: &SensorModel,
    lights: &[Light],
) -> Result<(SensorImage, DepthMap), SimError> {
    let traced = trace_scene(scene, table, model);
    let depth = depth_from_trace(&traced, model, table)?;
    let mut image = SensorImage::zeros(table.width(), table.height());
    for px in &traced {
        let point = Point3::from(px.direction * px.r_ray);
        let rgb = shade_point(point, px.normal, lights);
        image.set(px.x, px.y, [rgb[0] as f32, rgb[1] as f32, rgb[2] as f32]);
    }
    Ok((image, depth))
}
