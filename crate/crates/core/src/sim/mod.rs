//! Scene composition, ray-cast depth labeling, photometric rendering, and
//! dataset generation.

mod dataset;
mod image;
mod raycast;
mod render;
mod scene;

pub use self::image::SensorImage;
pub use dataset::{
    generate_dataset, load_manifest, load_record, DatasetSpec, Manifest, RecordEntry, RecordMeta,
    Split, MANIFEST_FORMAT, MANIFEST_VERSION,
};
pub use raycast::{ground_truth_depth, surface_normals, SurfaceNormalMap};
pub use render::{default_lights, render_sensor_image, shade_point, simulate_record, Light};
pub use scene::{
    axis_rotation, indenter_pose, indicator_catalog, indenter_catalog, press_scene, Hole,
    IndenterKind, IndenterSpec, IndicatorSpec, PressPose, PressScene,
};

use thiserror::Error;

/// Errors from scene composition, rendering, and dataset I/O.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("image data holds {got} values, expected {expected} for {width}x{height}x3")]
    ImageLength {
        width: u32,
        height: u32,
        expected: usize,
        got: usize,
    },
    #[error("image value {value} at index {index} is not finite or lies outside [0, 1]")]
    ImageValue { index: usize, value: f32 },
    #[error("image dimensions {width}x{height} must both be positive")]
    EmptyImage { width: u32, height: u32 },
    #[error("{path} is not an 8-bit RGB image")]
    NotRgb8 { path: String },
    #[error("press scene holds no meshes")]
    EmptyScene,
    #[error("depression {max_depression} mm at pixel ({x}, {y}) exceeds the {limit} mm limit")]
    OverPress {
        x: u32,
        y: u32,
        max_depression: f64,
        limit: f64,
    },
    #[error("dataset manifest: {reason}")]
    Manifest { reason: String },
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error(transparent)]
    Pose(#[from] crate::cloud::CloudError),
    #[error(transparent)]
    Sensor(#[from] crate::sensor::SensorError),
    #[error(transparent)]
    Png(#[from] ::image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
