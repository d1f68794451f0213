//! Core mesh and ray types.

use nalgebra::{Point3, Unit, Vector3};
use thiserror::Error;

/// Errors from mesh construction, STL parsing, and BVH building.
#[derive(Debug, Error)]
pub enum MeshError {
    #[error("STL payload truncated at byte offset {offset}: {context}")]
    Truncated { offset: usize, context: String },
    #[error("STL parse error at byte offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("non-finite coordinate in facet {facet}")]
    NonFiniteCoordinate { facet: usize },
    #[error("face {face} references vertex {index} but mesh has {vertex_count} vertices")]
    IndexOutOfBounds {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("mesh is empty")]
    EmptyMesh,
}

/// Indexed triangle surface in millimeters.
///
/// Vertices are deduplicated on parse (bitwise-equal positions merged) and
/// per-face unit normals are derived from the winding order. Degenerate
/// zero-area faces are dropped at construction; `degenerate_count` records
/// how many.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    normals: Vec<Vector3<f64>>,
    degenerate_count: usize,
}

impl TriangleMesh {
    /// Builds a mesh from vertices and faces, validating indices and
    /// coordinates. Zero-area faces are dropped, not rejected.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        for (fi, v) in vertices.iter().enumerate() {
            if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(MeshError::NonFiniteCoordinate { facet: fi });
            }
        }
        let n = vertices.len();
        let mut kept_faces = Vec::with_capacity(faces.len());
        let mut normals = Vec::with_capacity(faces.len());
        let mut degenerate_count = 0usize;
        for (fi, f) in faces.iter().enumerate() {
            for &idx in f {
                if idx as usize >= n {
                    return Err(MeshError::IndexOutOfBounds {
                        face: fi,
                        index: idx as usize,
                        vertex_count: n,
                    });
                }
            }
            let a = vertices[f[0] as usize];
            let b = vertices[f[1] as usize];
            let c = vertices[f[2] as usize];
            let cross = (b - a).cross(&(c - a));
            let norm = cross.norm();
            if norm == 0.0 {
                degenerate_count += 1;
                continue;
            }
            kept_faces.push(*f);
            normals.push(cross / norm);
        }
        Ok(TriangleMesh {
            vertices,
            faces: kept_faces,
            normals,
            degenerate_count,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// Unit face normals, one per kept face.
    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Number of zero-area faces dropped at construction.
    pub fn degenerate_count(&self) -> usize {
        self.degenerate_count
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Corner positions of face `fi`.
    pub fn triangle(&self, fi: usize) -> [Point3<f64>; 3] {
        let f = self.faces[fi];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    /// Translates every vertex by `offset`.
    pub fn translated(&self, offset: Vector3<f64>) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
            faces: self.faces.clone(),
            normals: self.normals.clone(),
            degenerate_count: self.degenerate_count,
        }
    }

    /// Applies a rotation about the origin to every vertex and normal.
    pub fn rotated(&self, rotation: &nalgebra::Rotation3<f64>) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| rotation * v).collect(),
            faces: self.faces.clone(),
            normals: self.normals.iter().map(|n| rotation * n).collect(),
            degenerate_count: self.degenerate_count,
        }
    }
}

/// A ray with unit direction, origin in millimeters.
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    /// Normalizes `direction`; panics on a zero vector.
    pub fn new(origin: Point3<f64>, direction: Vector3<f64>) -> Ray {
        Ray {
            origin,
            direction: Unit::new_normalize(direction).into_inner(),
        }
    }

    pub fn point_at(&self, t: f64) -> Point3<f64> {
        self.origin + self.direction * t
    }
}
