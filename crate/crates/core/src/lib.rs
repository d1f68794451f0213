//! Simulation, calibration, and depth reconstruction for a hemispherical
//! vision-based tactile sensor.
//!
//! The pipeline runs end to end at desk scale:
//!
//! 1. [`mesh`] parses STL geometry and answers nearest-hit ray queries
//!    through a BVH.
//! 2. [`sensor`] owns the sensor geometry: the GP-calibrated fisheye
//!    correspondence between image pixels and spherical surface
//!    coordinates, and 8-bit depth quantization.
//! 3. [`sim`] composes press scenes from procedural indicator/indenter
//!    meshes, labels them with ray-cast ground-truth depth, and renders
//!    synthetic interior sensor images under a three-light photometric
//!    model.
//! 4. [`net`] trains a compact encoder-decoder to predict per-pixel radial
//!    depth from a single sensor image.
//! 5. [`cloud`] reconstructs point clouds from depth maps, registers them
//!    with point-to-point ICP, and computes evaluation statistics.
//!
//! All coordinates are millimeters. The sensor frame has the camera at the
//! origin looking along +z; image columns (`u`) map to +x and rows (`v`)
//! to +y.

pub mod cloud;
pub mod mesh;
pub mod net;
pub mod sensor;
pub mod sim;

pub use cloud::RigidPose;
pub use mesh::{BvhIndex, Ray, TriangleMesh};
pub use net::{LossSpec, ReconNet, TrainConfig};
pub use sensor::{CorrespondenceTable, DepthMap, GpCorrespondence, SensorModel};
pub use sim::SensorImage;
