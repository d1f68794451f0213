//! Point clouds in millimeters and the depth-map-to-cloud projection.

use nalgebra::Point3;

use crate::sensor::{CorrespondenceTable, DepthMap, SensorModel};

use super::{CloudError, RigidPose};

/// An unordered set of 3D points (mm), optionally colored.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
    colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    /// Validates that every coordinate is finite.
    pub fn new(points: Vec<Point3<f64>>) -> Result<PointCloud, CloudError> {
        for (index, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(CloudError::NonFinitePoint { index });
            }
        }
        Ok(PointCloud {
            points,
            colors: None,
        })
    }

    /// Attaches one RGB color per point.
    pub fn with_colors(self, colors: Vec<[u8; 3]>) -> Result<PointCloud, CloudError> {
        if colors.len() != self.points.len() {
            return Err(CloudError::LengthMismatch {
                left: self.points.len(),
                right: colors.len(),
            });
        }
        Ok(PointCloud {
            colors: Some(colors),
            ..self
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn colors(&self) -> Option<&[[u8; 3]]> {
        self.colors.as_deref()
    }

    /// Applies a rigid transform to every point.
    pub fn transformed(&self, pose: &RigidPose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.apply(*p)).collect(),
            colors: self.colors.clone(),
        }
    }

    /// Centroid of the cloud.
    pub fn centroid(&self) -> Result<Point3<f64>, CloudError> {
        if self.points.is_empty() {
            return Err(CloudError::EmptyCloud);
        }
        let sum = self
            .points
            .iter()
            .fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.coords);
        Ok(Point3::from(sum / self.points.len() as f64))
    }

    /// Radius of the centroid-centered bounding sphere, used to scale
    /// default inlier thresholds.
    pub fn bounding_sphere_radius(&self) -> Result<f64, CloudError> {
        let c = self.centroid()?;
        Ok(self
            .points
            .iter()
            .map(|p| (p - c).norm())
            .fold(0.0, f64::max))
    }
}

/// Projects a depth map through the calibration table: each valid pixel's
/// surface point sits at radius `R0 - depression` along the pixel's
/// spherical direction. Point count equals the table's valid-pixel count.
pub fn depth_to_pointcloud(
    depth: &DepthMap,
    table: &CorrespondenceTable,
    model: &SensorModel,
) -> Result<PointCloud, CloudError> {
    if depth.width() != table.width() || depth.height() != table.height() {
        return Err(CloudError::GeometryMismatch {
            want: format!("{}x{} table", table.width(), table.height()),
            got: format!("{}x{} depth map", depth.width(), depth.height()),
        });
    }
    let r0 = model.hemisphere_radius;
    let mut points = Vec::with_capacity(table.valid_count() as usize);
    for (x, y, _theta, _psi) in table.valid_pixels() {
        let dir = table
            .direction(x, y)
            .expect("valid_pixels yields only valid pixels");
        let r_ray = r0 - depth.decode(x, y);
        points.push(Point3::from(dir * r_ray));
    }
    PointCloud::new(points)
}
