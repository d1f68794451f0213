//! Sensor geometry: the fisheye pixel-to-sphere correspondence, its
//! GP-regression calibration, and 8-bit depression quantization.

mod calibration;
mod gp;
mod model;
mod sawtooth;
mod table;

pub use calibration::{calibrate_from_image, CalibrationFile, GpBlock};
pub use gp::{fit_gp, fit_gp_grid_search, GpCorrespondence, GpKernel};
pub use model::{DepthMap, SensorError, SensorModel};
pub use sawtooth::{detect_sawtooth_edges, equidistant_edge_radii, render_sawtooth_image};
pub use table::{build_correspondence_table, pixel_to_spherical, CorrespondenceTable};
