//! Triangle meshes, STL parsing, and BVH-accelerated ray casting.

mod bvh;
pub mod shapes;
mod stl;
mod types;

pub use bvh::{cast_ray_brute_force, BvhIndex, RayHit, INTERSECT_EPSILON};
pub use stl::{parse_stl, write_ascii_stl, write_binary_stl};
pub use types::{MeshError, Ray, TriangleMesh};
