//! Ground-truth depth and surface normals by ray casting a press scene.
//!
//! Every valid pixel owns a viewing ray from the camera origin through its
//! calibrated `(theta, psi)` direction. The pressed surface along that ray
//! sits at `R_ray = min(nearest scene hit, R0)`: hits beyond the rest
//! radius and outright misses both mean the elastomer is undeformed
//! there, so the rest hemisphere itself is the analytic fallback — no
//! rest mesh is ever cast against.

use nalgebra::{Point3, Vector3};

use super::scene::PressScene;
use super::SimError;
use crate::mesh::Ray;
use crate::sensor::{CorrespondenceTable, DepthMap, SensorModel};

/// Slack above the quantization ceiling before a press counts as a
/// geometry error rather than saturation, millimeters.
const OVER_PRESS_SLACK_MM: f64 = 0.1;

/// Per-pixel unit surface normals over the sensor crop, in the sensor
/// frame, oriented back toward the camera origin.
pub struct SurfaceNormalMap {
    width: u32,
    height: u32,
    normals: Vec<Vector3<f64>>,
    valid: Vec<bool>,
}

impl SurfaceNormalMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Normal at a pixel, or `None` outside the calibrated aperture.
    pub fn get(&self, x: u32, y: u32) -> Option<Vector3<f64>> {
        let i = (y * self.width + x) as usize;
        self.valid[i].then(|| self.normals[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// One traced pixel: where the pressed surface sits along the ray and its
/// orientation there.
pub(super) struct TracedPixel {
    pub x: u32,
    pub y: u32,
    /// Unit viewing direction.
    pub direction: Vector3<f64>,
    /// Distance from the origin to the pressed surface, `<= R0`.
    pub r_ray: f64,
    /// Unit normal oriented toward the origin.
    pub normal: Vector3<f64>,
}

/// Casts one ray per valid pixel and resolves the pressed surface.
pub(super) fn trace_scene(
    scene: &PressScene,
    table: &CorrespondenceTable,
    model: &SensorModel,
) -> Vec<TracedPixel> {
    let r0 = model.hemisphere_radius;
    let mut traced = Vec::with_capacity(table.valid_count() as usize);
    for (x, y, theta, psi) in table.valid_pixels() {
        let direction = Vector3::new(
            theta.sin() * psi.cos(),
            theta.sin() * psi.sin(),
            theta.cos(),
        );
        let ray = Ray::new(Point3::origin(), direction);
        let (r_ray, normal) = match scene.cast(&ray) {
            Some((mi, hit)) if hit.t < r0 => (hit.t, scene.hit_normal(mi, &hit, &ray)),
            _ => (r0, -direction),
        };
        traced.push(TracedPixel {
            x,
            y,
            direction,
            r_ray,
            normal,
        });
    }
    traced
}

/// Quantized ground-truth depression map for a scene.
///
/// Depression is `R0 - R_ray`, clamped to `[0, max_depression]`. A pixel
/// pressed deeper than `max_depression + 0.1 mm` is a scene geometry
/// error and is reported with its location; presses within the slack
/// saturate at the deepest code instead. Pixels outside the aperture
/// encode zero.
pub fn ground_truth_depth(
    scene: &PressScene,
    table: &CorrespondenceTable,
    model: &SensorModel,
) -> Result<DepthMap, SimError> {
    depth_from_trace(&trace_scene(scene, table, model), model, table)
}

pub(super) fn depth_from_trace(
    traced: &[TracedPixel],
    model: &SensorModel,
    table: &CorrespondenceTable,
) -> Result<DepthMap, SimError> {
    let limit = model.max_depression;
    let mut worst: Option<(u32, u32, f64)> = None;
    let mut map = DepthMap::zeros(table.width(), table.height(), limit);
    for px in traced {
        let depression = model.hemisphere_radius - px.r_ray;
        if depression > limit && depression > worst.map_or(limit, |(_, _, d)| d) {
            worst = Some((px.x, px.y, depression));
        }
        let code = model
            .encode_depth(depression.clamp(0.0, limit))
            .expect("clamped depression is in range");
        map.set_code(px.x, px.y, code);
    }
    if let Some((x, y, max_depression)) = worst {
        if max_depression > limit + OVER_PRESS_SLACK_MM {
            return Err(SimError::OverPress {
                x,
                y,
                max_depression,
                limit,
            });
        }
    }
    Ok(map)
}

/// Per-pixel surface normals for a scene. Saturated presses still have
/// well-defined orientations, so this never fails.
pub fn surface_normals(
    scene: &PressScene,
    table: &CorrespondenceTable,
    model: &SensorModel,
) -> SurfaceNormalMap {
    let (width, height) = (table.width(), table.height());
    let mut normals = vec![Vector3::zeros(); (width * height) as usize];
    let mut valid = vec![false; (width * height) as usize];
    for px in trace_scene(scene, table, model) {
        let i = (px.y * width + px.x) as usize;
        normals[i] = px.normal;
        valid[i] = true;
    }
    SurfaceNormalMap {
        width,
        height,
        normals,
        valid,
    }
}
