//! Press-scene composition.
//!
//! A scene is a set of rigid meshes posed in the sensor frame. The pressed
//! surface seen by the camera is the nearest mesh hit along each viewing
//! ray, clamped to the rest hemisphere: rays that miss every mesh (or only
//! hit beyond the rest radius) fall back to the undeformed surface.
//!
//! Scenes mirror the physical rig: a printed hemispherical *indicator*
//! shell with through-holes is pressed onto the sensor, and an *indenter*
//! tip is pressed deeper through one hole. The rig orients parts with
//! three rotation stages: A about the x axis, B about the optical (z)
//! axis, C about the y axis, composed as `Rz(B) * Rx(A) * Ry(C)`.

use nalgebra::{Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::cloud::RigidPose;
use crate::mesh::{shapes, BvhIndex, Ray, RayHit, TriangleMesh};
use crate::sensor::SensorModel;

/// Rotation from the rig's stage angles `[A, B, C]` in degrees:
/// `Rz(B) * Rx(A) * Ry(C)`.
pub fn axis_rotation(angles_deg: [f64; 3]) -> Rotation3<f64> {
    let [a, b, c] = angles_deg;
    Rotation3::from_axis_angle(&Vector3::z_axis(), b.to_radians())
        * Rotation3::from_axis_angle(&Vector3::x_axis(), a.to_radians())
        * Rotation3::from_axis_angle(&Vector3::y_axis(), c.to_radians())
}

/// A through-hole in an indicator shell, given in the shell's local frame
/// as a cone of directions around `(polar_deg, azimuth_deg)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hole {
    /// Angle from the optical axis, degrees.
    pub polar_deg: f64,
    /// Angle around the optical axis, degrees.
    pub azimuth_deg: f64,
    /// Angular radius of the hole, degrees.
    pub half_angle_deg: f64,
}

impl Hole {
    pub fn direction(&self) -> Vector3<f64> {
        let theta = self.polar_deg.to_radians();
        let psi = self.azimuth_deg.to_radians();
        Vector3::new(
            theta.sin() * psi.cos(),
            theta.sin() * psi.sin(),
            theta.cos(),
        )
    }
}

/// A hemispherical indicator shell with one or two through-holes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndicatorSpec {
    pub id: u32,
    pub holes: Vec<Hole>,
}

impl IndicatorSpec {
    /// Shell geometry at the given radius (rest radius minus press depth).
    pub fn shell_mesh(&self, radius: f64) -> TriangleMesh {
        let holes: Vec<(Vector3<f64>, f64)> = self
            .holes
            .iter()
            .map(|h| (h.direction(), h.half_angle_deg.to_radians()))
            .collect();
        shapes::holed_sphere(radius, 4, &holes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndenterKind {
    Sphere,
    Cone,
    Cylinder,
    Ridge,
}

/// An indenter tip pressed through an indicator hole.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndenterSpec {
    pub id: u32,
    pub kind: IndenterKind,
    /// Characteristic width of the tip (sphere radius, cone base radius,
    /// cylinder radius, ridge half-width), millimeters.
    pub size_mm: f64,
}

/// Body length of cone/cylinder/ridge indenters behind the tip. Long
/// enough that the far end always sits outside the rest hemisphere.
const INDENTER_BODY_MM: f64 = 6.0;

impl IndenterSpec {
    /// Tip geometry in a canonical frame: the contact tip at the origin,
    /// the body extending along +z (away from the camera once placed).
    pub fn tip_mesh(&self) -> TriangleMesh {
        match self.kind {
            IndenterKind::Sphere => shapes::icosphere(self.size_mm, 3)
                .translated(Vector3::new(0.0, 0.0, self.size_mm)),
            IndenterKind::Cone => shapes::cone(self.size_mm, INDENTER_BODY_MM, 48),
            IndenterKind::Cylinder => shapes::cylinder(self.size_mm, INDENTER_BODY_MM, 48),
            IndenterKind::Ridge => shapes::ridge(4.0 * self.size_mm, self.size_mm, INDENTER_BODY_MM),
        }
    }
}

/// Pose placing a canonical tip mesh so its contact point sits at
/// `tip_radius` millimeters from the origin along `direction`, body
/// pointing outward.
pub fn indenter_pose(direction: Vector3<f64>, tip_radius: f64) -> RigidPose {
    let dir = Unit::new_normalize(direction);
    let rotation = Rotation3::rotation_between(&Vector3::z(), &dir)
        .unwrap_or_else(|| Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI));
    RigidPose::new(rotation.into_inner(), dir.into_inner() * tip_radius)
        .expect("rotation_between yields a proper rotation")
}

/// Fixed library of indicator shells. Hole layouts vary in latitude,
/// azimuth, size, and count so ids are visually distinct.
pub fn indicator_catalog(count: usize) -> Vec<IndicatorSpec> {
    (0..count)
        .map(|i| {
            let polar = 18.0 + 8.0 * (i % 4) as f64;
            let azimuth = (i as f64 * 67.0) % 360.0;
            let half_angle = 13.0 + 2.5 * (i % 3) as f64;
            let mut holes = vec![Hole {
                polar_deg: polar,
                azimuth_deg: azimuth,
                half_angle_deg: half_angle,
            }];
            if i % 2 == 1 {
                holes.push(Hole {
                    polar_deg: polar + 14.0,
                    azimuth_deg: azimuth + 150.0,
                    half_angle_deg: 12.0,
                });
            }
            IndicatorSpec {
                id: i as u32,
                holes,
            }
        })
        .collect()
}

/// Fixed library of indenter tips cycling through the four shapes at
/// increasing sizes.
pub fn indenter_catalog(count: usize) -> Vec<IndenterSpec> {
    let kinds = [
        IndenterKind::Sphere,
        IndenterKind::Cone,
        IndenterKind::Cylinder,
        IndenterKind::Ridge,
    ];
    (0..count)
        .map(|i| IndenterSpec {
            id: i as u32,
            kind: kinds[i % kinds.len()],
            size_mm: 2.0 + 0.5 * (i / kinds.len()) as f64 + 0.25 * (i % 2) as f64,
        })
        .collect()
}

/// Per-record press parameters: stage angles and press depths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PressPose {
    /// Rig stage angles `[A, B, C]`, degrees.
    pub axis_angles_deg: [f64; 3],
    /// How deep the indicator shell is pressed, millimeters.
    pub shell_press_mm: f64,
    /// How deep the indenter tip is pressed, millimeters.
    pub tip_press_mm: f64,
}

/// Builds the two-mesh scene for one press: the rotated indicator shell
/// plus the indenter tip pressed along the shell's first hole.
pub fn press_scene(
    model: &SensorModel,
    indicator: &IndicatorSpec,
    indenter: &IndenterSpec,
    pose: &PressPose,
) -> Result<PressScene, SimError> {
    let r0 = model.hemisphere_radius;
    let rig = axis_rotation(pose.axis_angles_deg);
    let shell = indicator.shell_mesh(r0 - pose.shell_press_mm);
    let shell_pose = RigidPose::new(rig.into_inner(), Vector3::zeros())?;

    let hole = indicator.holes.first().ok_or(SimError::Manifest {
        reason: format!("indicator {} has no holes to press through", indicator.id),
    })?;
    let press_dir = rig * hole.direction();
    let tip_pose = indenter_pose(press_dir, r0 - pose.tip_press_mm);

    PressScene::new(
        vec![(shell, shell_pose), (indenter.tip_mesh(), tip_pose)],
        pose.axis_angles_deg,
    )
}

/// A set of posed meshes in the sensor frame, indexed for ray casting.
pub struct PressScene {
    indexes: Vec<BvhIndex>,
    axis_angles_deg: [f64; 3],
}

impl PressScene {
    /// Poses each mesh into the sensor frame and builds its ray index.
    /// Scenes must hold at least one mesh; "no contact" is expressed by
    /// placing meshes outside the rest hemisphere, not by emptiness.
    pub fn new(
        meshes: Vec<(TriangleMesh, RigidPose)>,
        axis_angles_deg: [f64; 3],
    ) -> Result<PressScene, SimError> {
        if meshes.is_empty() {
            return Err(SimError::EmptyScene);
        }
        let indexes = meshes
            .into_iter()
            .map(|(mesh, pose)| {
                let posed = mesh.rotated(&pose.rotation3()).translated(pose.translation());
                BvhIndex::build(posed)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PressScene {
            indexes,
            axis_angles_deg,
        })
    }

    pub fn mesh_count(&self) -> usize {
        self.indexes.len()
    }

    pub fn axis_angles_deg(&self) -> [f64; 3] {
        self.axis_angles_deg
    }

    /// Nearest hit across all meshes: smallest `t`, ties to the lower
    /// mesh index.
    pub fn cast(&self, ray: &Ray) -> Option<(usize, RayHit)> {
        let mut best: Option<(usize, RayHit)> = None;
        for (mi, index) in self.indexes.iter().enumerate() {
            if let Some(hit) = index.cast_ray(ray) {
                let closer = match &best {
                    Some((_, b)) => hit.t < b.t,
                    None => true,
                };
                if closer {
                    best = Some((mi, hit));
                }
            }
        }
        best
    }

    /// Face normal of a previous [`cast`](Self::cast) result, oriented to
    /// point back toward the sensor origin.
    pub fn hit_normal(&self, mesh_index: usize, hit: &RayHit, ray: &Ray) -> Vector3<f64> {
        let n = self.indexes[mesh_index].mesh().normals()[hit.face as usize];
        if n.dot(&ray.direction) > 0.0 {
            -n
        } else {
            n
        }
    }
}
