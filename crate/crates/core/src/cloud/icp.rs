//! Point-to-point iterative closest point registration with a closed-form
//! SVD rigid fit.

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::kdtree::NeighborIndex;
use super::points::PointCloud;
use super::{CloudError, RigidPose};

/// Convergence: stop when inlier RMSE improves by less than this many mm.
const MIN_IMPROVEMENT_MM: f64 = 1e-7;

/// Outcome of a registration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Maps source-cloud coordinates into the target frame (includes the
    /// initial guess).
    pub pose: RigidPose,
    /// Inlier correspondences / source point count, in [0, 1].
    pub fitness: f64,
    /// Root-mean-square distance over inlier correspondences, mm.
    pub inlier_rmse_mm: f64,
    /// Fit-and-apply iterations executed.
    pub iterations: usize,
    /// Inlier correspondence count at the final pose.
    pub correspondences: usize,
    /// Inlier RMSE after the initial guess and after each accepted
    /// iteration; non-increasing by construction.
    pub rmse_history: Vec<f64>,
}

/// Default inlier threshold: 2% of the target's bounding-sphere radius.
pub fn default_inlier_threshold(target: &PointCloud) -> Result<f64, CloudError> {
    Ok(0.02 * target.bounding_sphere_radius()?)
}

/// Least-squares rigid transform mapping `source` onto `target`
/// (Kabsch/Umeyama): SVD of the cross-covariance with a determinant
/// correction so reflections are never returned.
pub fn rigid_fit(
    source: &[Point3<f64>],
    target: &[Point3<f64>],
) -> Result<RigidPose, CloudError> {
    if source.len() != target.len() {
        return Err(CloudError::LengthMismatch {
            left: source.len(),
            right: target.len(),
        });
    }
    if source.len() < 3 {
        return Err(CloudError::DegenerateCorrespondences {
            found: source.len(),
            last_pose: RigidPose::identity(),
        });
    }
    let n = source.len() as f64;
    let cs = source.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let ct = target.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut h = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        h += (s.coords - cs) * (t.coords - ct).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").transpose();
    let mut d = Matrix3::identity();
    // Singular values come out sorted descending, so flipping the last
    // column flips the smallest singular direction.
    d[(2, 2)] = (v * u.transpose()).determinant().signum();
    let rotation = v * d * u.transpose();
    let translation = ct - rotation * cs;
    RigidPose::new(rotation, translation)
}

/// Classic point-to-point ICP: nearest-neighbor correspondences within
/// `inlier_threshold` mm feed a closed-form rigid fit, iterated until the
/// inlier RMSE improves by less than 1e-7 mm, an iteration would increase
/// it (the update is then discarded), or `max_iterations` is reached.
///
/// The returned pose composes the initial guess, so it maps raw source
/// coordinates into the target frame.
pub fn icp_point_to_point(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidPose,
    max_iterations: usize,
    inlier_threshold: f64,
) -> Result<RegistrationResult, CloudError> {
    if source.is_empty() || target.is_empty() {
        return Err(CloudError::EmptyCloud);
    }
    if max_iterations < 1 {
        return Err(CloudError::Parameter {
            reason: "max_iterations must be at least 1".into(),
        });
    }
    if !(inlier_threshold > 0.0) || !inlier_threshold.is_finite() {
        return Err(CloudError::Parameter {
            reason: format!("inlier threshold must be positive, got {inlier_threshold}"),
        });
    }
    let index = NeighborIndex::build(target.points())?;
    let threshold_sq = inlier_threshold * inlier_threshold;

    // Source index, target index, squared distance for inliers at a pose.
    let measure = |pose: &RigidPose| -> (Vec<(usize, usize)>, f64) {
        let mut pairs = Vec::new();
        let mut sum = 0.0;
        for (si, p) in source.points().iter().enumerate() {
            let moved = pose.apply(*p);
            let (ti, d2) = index.nearest(&moved);
            if d2 <= threshold_sq {
                pairs.push((si, ti));
                sum += d2;
            }
        }
        let rmse = if pairs.is_empty() {
            f64::INFINITY
        } else {
            (sum / pairs.len() as f64).sqrt()
        };
        (pairs, rmse)
    };

    let mut pose = init.clone();
    let (mut pairs, mut rmse) = measure(&pose);
    if pairs.len() < 3 {
        return Err(CloudError::DegenerateCorrespondences {
            found: pairs.len(),
            last_pose: pose,
        });
    }
    let mut history = vec![rmse];
    let mut iterations = 0;
    while iterations < max_iterations {
        let moved: Vec<Point3<f64>> = pairs
            .iter()
            .map(|&(si, _)| pose.apply(source.points()[si]))
            .collect();
        let matched: Vec<Point3<f64>> =
            pairs.iter().map(|&(_, ti)| target.points()[ti]).collect();
        let delta = rigid_fit(&moved, &matched)?;
        let candidate = delta.compose(&pose);
        let (new_pairs, new_rmse) = measure(&candidate);
        iterations += 1;
        if new_pairs.len() < 3 {
            return Err(CloudError::DegenerateCorrespondences {
                found: new_pairs.len(),
                last_pose: pose,
            });
        }
        if new_rmse > rmse {
            // The correspondence switch made things worse; keep the
            // previous pose so the reported RMSE sequence never rises.
            break;
        }
        let improvement = rmse - new_rmse;
        pose = candidate;
        pairs = new_pairs;
        rmse = new_rmse;
        history.push(rmse);
        if improvement < MIN_IMPROVEMENT_MM {
            break;
        }
    }
    Ok(RegistrationResult {
        fitness: pairs.len() as f64 / source.len() as f64,
        inlier_rmse_mm: rmse,
        iterations,
        correspondences: pairs.len(),
        rmse_history: history,
        pose,
    })
}
