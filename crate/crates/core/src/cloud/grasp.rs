//! Grasp-pose evaluation: register each sensor's contact patch against an
//! object model and summarize the registration quality.

use std::path::Path;

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::mesh::TriangleMesh;

use super::icp::{default_inlier_threshold, icp_point_to_point, RegistrationResult};
use super::points::PointCloud;
use super::{CloudError, RigidPose};

/// Fitness of a healthy desk-scale registration; reported next to measured
/// statistics so regressions stand out.
pub const REFERENCE_FITNESS: f64 = 0.597;

/// Inlier RMSE of a healthy desk-scale registration, mm.
pub const REFERENCE_RMSE_MM: f64 = 0.037184;

/// One tactile sensor's contribution to a grasp evaluation.
#[derive(Debug, Clone)]
pub struct GraspSensor {
    /// Contact patch in the sensor's own frame.
    pub cloud: PointCloud,
    /// Maps sensor coordinates into the object/world frame.
    pub mounting: RigidPose,
    /// Initial registration guess applied on top of the mounting.
    pub init: RigidPose,
}

/// Geometry the sensor patches are registered against.
pub enum ObjectModel<'a> {
    /// Sample `samples` points from the surface, area-weighted, with a
    /// seeded generator.
    Mesh {
        mesh: &'a TriangleMesh,
        samples: usize,
        seed: u64,
    },
    Cloud(&'a PointCloud),
}

/// Aggregate registration statistics over the successful trials.
///
/// Means and standard deviations are NaN when every trial failed.
#[derive(Debug, Clone, Serialize)]
pub struct GraspSummary {
    pub trials: usize,
    pub failures: usize,
    pub mean_fitness: f64,
    pub std_fitness: f64,
    pub mean_rmse_mm: f64,
    pub std_rmse_mm: f64,
    pub reference_fitness: f64,
    pub reference_rmse_mm: f64,
}

/// Per-sensor registration outcomes plus the aggregate summary.
#[derive(Debug)]
pub struct GraspEvaluation {
    pub trials: Vec<Result<RegistrationResult, CloudError>>,
    pub summary: GraspSummary,
}

impl GraspEvaluation {
    /// JSON document with the summary and one entry per trial; failed
    /// trials carry an `error` message, non-finite summary fields become
    /// null.
    pub fn to_json(&self) -> Value {
        let num = |x: f64| {
            serde_json::Number::from_f64(x)
                .map(Value::Number)
                .unwrap_or(Value::Null)
        };
        let trials: Vec<Value> = self
            .trials
            .iter()
            .map(|t| match t {
                Ok(r) => serde_json::to_value(r).expect("finite registration result"),
                Err(e) => json!({ "error": e.to_string() }),
            })
            .collect();
        json!({
            "summary": {
                "trials": self.summary.trials,
                "failures": self.summary.failures,
                "mean_fitness": num(self.summary.mean_fitness),
                "std_fitness": num(self.summary.std_fitness),
                "mean_rmse_mm": num(self.summary.mean_rmse_mm),
                "std_rmse_mm": num(self.summary.std_rmse_mm),
                "reference_fitness": self.summary.reference_fitness,
                "reference_rmse_mm": self.summary.reference_rmse_mm,
            },
            "trials": trials,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<(), CloudError> {
        let mut text = serde_json::to_string_pretty(&self.to_json()).expect("valid json");
        text.push('\n');
        std::fs::write(path, text).map_err(CloudError::Io)
    }
}

/// Area-weighted surface sampling with a seeded generator; degenerate
/// faces carry zero weight.
pub fn sample_mesh_surface(
    mesh: &TriangleMesh,
    count: usize,
    seed: u64,
) -> Result<PointCloud, CloudError> {
    if count == 0 {
        return Err(CloudError::Parameter {
            reason: "sample count must be positive".into(),
        });
    }
    let mut cumulative = Vec::with_capacity(mesh.face_count());
    let mut total = 0.0;
    for fi in 0..mesh.face_count() {
        let [a, b, c] = mesh.triangle(fi);
        total += 0.5 * (b - a).cross(&(c - a)).norm();
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(CloudError::EmptyCloud);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count)
        .map(|_| {
            let r = rng.gen_range(0.0..total);
            let fi = cumulative.partition_point(|&edge| edge <= r);
            let [a, b, c] = mesh.triangle(fi.min(mesh.face_count() - 1));
            let mut u: f64 = rng.gen();
            let mut v: f64 = rng.gen();
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            a + (b - a) * u + (c - a) * v
        })
        .collect::<Vec<Point3<f64>>>();
    PointCloud::new(points)
}

/// Register every sensor patch against the object model and summarize.
///
/// Each sensor's patch is first mapped through its mounting pose; its
/// `init` pose seeds the registration. `inlier_threshold` of None picks
/// the default (2% of the object's bounding-sphere radius). Individual
/// registration failures are recorded, not fatal.
pub fn evaluate_grasp(
    sensors: &[GraspSensor],
    object: &ObjectModel<'_>,
    max_iterations: usize,
    inlier_threshold: Option<f64>,
) -> Result<GraspEvaluation, CloudError> {
    if sensors.is_empty() {
        return Err(CloudError::Parameter {
            reason: "at least one sensor is required".into(),
        });
    }
    let object_cloud = match object {
        ObjectModel::Mesh {
            mesh,
            samples,
            seed,
        } => sample_mesh_surface(mesh, *samples, *seed)?,
        ObjectModel::Cloud(cloud) => (*cloud).clone(),
    };
    let threshold = match inlier_threshold {
        Some(t) => t,
        None => default_inlier_threshold(&object_cloud)?,
    };
    let trials: Vec<Result<RegistrationResult, CloudError>> = sensors
        .iter()
        .map(|sensor| {
            let source = sensor.cloud.transformed(&sensor.mounting);
            icp_point_to_point(&source, &object_cloud, &sensor.init, max_iterations, threshold)
        })
        .collect();

    let fitness: Vec<f64> = trials
        .iter()
        .filter_map(|t| t.as_ref().ok().map(|r| r.fitness))
        .collect();
    let rmse: Vec<f64> = trials
        .iter()
        .filter_map(|t| t.as_ref().ok().map(|r| r.inlier_rmse_mm))
        .collect();
    let (mean_fitness, std_fitness) = mean_std(&fitness);
    let (mean_rmse_mm, std_rmse_mm) = mean_std(&rmse);
    let summary = GraspSummary {
        trials: trials.len(),
        failures: trials.len() - fitness.len(),
        mean_fitness,
        std_fitness,
        mean_rmse_mm,
        std_rmse_mm,
        reference_fitness: REFERENCE_FITNESS,
        reference_rmse_mm: REFERENCE_RMSE_MM,
    };
    Ok(GraspEvaluation { trials, summary })
}

/// Mean and sample standard deviation; (NaN, NaN) for empty input, zero
/// deviation for a single value.
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
