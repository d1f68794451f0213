//! Point-cloud reconstruction and rigid registration: depth maps project
//! to 3D surface points, point-to-point ICP tracks poses against object
//! models, and error statistics summarize prediction quality.

mod grasp;
mod icp;
mod kdtree;
mod ply;
mod points;
mod pose;
mod stats;

pub use grasp::{
    evaluate_grasp, sample_mesh_surface, GraspEvaluation, GraspSensor, GraspSummary, ObjectModel,
    REFERENCE_FITNESS, REFERENCE_RMSE_MM,
};
pub use icp::{default_inlier_threshold, icp_point_to_point, rigid_fit, RegistrationResult};
pub use kdtree::NeighborIndex;
pub use ply::{ply_string, write_ply};
pub use points::{depth_to_pointcloud, PointCloud};
pub use pose::RigidPose;
pub use stats::{error_statistics, ErrorStats, ImageErrorRow, GROUND_TRUTH_PRECISION_MM};

use thiserror::Error;

/// Errors from point-cloud construction and registration.
#[derive(Debug, Error)]
pub enum CloudError {
    /// A rotation matrix failed the orthonormality check.
    #[error(
        "invalid rigid pose: |R^T R - I| = {ortho_error:.3e}, det = {det:.6} \
         (expected orthonormal with det +1)"
    )]
    InvalidPose { ortho_error: f64, det: f64 },
    /// An operation that needs points received an empty cloud.
    #[error("point cloud is empty")]
    EmptyCloud,
    /// A point is NaN or infinite.
    #[error("non-finite coordinates at point {index}")]
    NonFinitePoint { index: usize },
    /// Paired-point alignment was given mismatched point counts.
    #[error("point sets differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    /// Depth maps and calibration tables disagree about the crop size.
    #[error("depth geometry {got} does not match {want}")]
    GeometryMismatch { want: String, got: String },
    /// A registration parameter is out of range.
    #[error("invalid registration parameter: {reason}")]
    Parameter { reason: String },
    /// Registration collapsed to fewer than three usable correspondences.
    /// Carries the last pose estimate so callers can still inspect it.
    #[error("registration degenerated to {found} correspondences (need at least 3)")]
    DegenerateCorrespondences { found: usize, last_pose: RigidPose },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
