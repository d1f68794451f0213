//! Procedural mesh primitives used for press scenes and test fixtures.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::types::TriangleMesh;

/// Subdivided icosahedron projected onto a sphere of `radius`.
///
/// Face count is `20 * 4^subdivisions`; level 2 gives the classic
/// 320-facet, 162-vertex sphere.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = vec![
        Vector3::new(-1.0, phi, 0.0),
        Vector3::new(1.0, phi, 0.0),
        Vector3::new(-1.0, -phi, 0.0),
        Vector3::new(1.0, -phi, 0.0),
        Vector3::new(0.0, -1.0, phi),
        Vector3::new(0.0, 1.0, phi),
        Vector3::new(0.0, -1.0, -phi),
        Vector3::new(0.0, 1.0, -phi),
        Vector3::new(phi, 0.0, -1.0),
        Vector3::new(phi, 0.0, 1.0),
        Vector3::new(-phi, 0.0, -1.0),
        Vector3::new(-phi, 0.0, 1.0),
    ]
    .into_iter()
    .map(|v| v.normalize())
    .collect();

    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint_cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mids = [0u32; 3];
            for i in 0..3 {
                let (a, b) = (f[i], f[(i + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mids[i] = *midpoint_cache.entry(key).or_insert_with(|| {
                    let m = ((vertices[a as usize] + vertices[b as usize]) / 2.0).normalize();
                    vertices.push(m);
                    (vertices.len() - 1) as u32
                });
            }
            next_faces.push([f[0], mids[0], mids[2]]);
            next_faces.push([f[1], mids[1], mids[0]]);
            next_faces.push([f[2], mids[2], mids[1]]);
            next_faces.push([mids[0], mids[1], mids[2]]);
        }
        faces = next_faces;
    }

    let points = vertices
        .into_iter()
        .map(|v| Point3::from(v * radius))
        .collect();
    TriangleMesh::new(points, faces).expect("icosphere construction is valid")
}

/// Closed cone with apex at the origin pointing along -z and a disk base at
/// `z = height`; used as an indenter tip (apex presses into the surface).
pub fn cone(base_radius: f64, height: f64, segments: u32) -> TriangleMesh {
    let segments = segments.max(3);
    let mut vertices = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, height)];
    for i in 0..segments {
        let a = 2.0 * std::f64::consts::PI * i as f64 / segments as f64;
        vertices.push(Point3::new(
            base_radius * a.cos(),
            base_radius * a.sin(),
            height,
        ));
    }
    let mut faces = Vec::new();
    for i in 0..segments {
        let cur = 2 + i;
        let next = 2 + (i + 1) % segments;
        // side: apex -> rim, wound so normals face outward (away from axis)
        faces.push([0, next, cur]);
        // base cap
        faces.push([1, cur, next]);
    }
    TriangleMesh::new(vertices, faces).expect("cone construction is valid")
}

/// Closed cylinder with its flat near cap at `z = 0` and far cap at
/// `z = height`, axis along +z.
pub fn cylinder(radius: f64, height: f64, segments: u32) -> TriangleMesh {
    let segments = segments.max(3);
    let mut vertices = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, height)];
    for i in 0..segments {
        let a = 2.0 * std::f64::consts::PI * i as f64 / segments as f64;
        let (x, y) = (radius * a.cos(), radius * a.sin());
        vertices.push(Point3::new(x, y, 0.0));
        vertices.push(Point3::new(x, y, height));
    }
    let mut faces = Vec::new();
    for i in 0..segments {
        let lo_cur = 2 + 2 * i;
        let hi_cur = lo_cur + 1;
        let lo_next = 2 + 2 * ((i + 1) % segments);
        let hi_next = lo_next + 1;
        faces.push([0, lo_next, lo_cur]); // near cap, normal -z
        faces.push([1, hi_cur, hi_next]); // far cap, normal +z
        faces.push([lo_cur, lo_next, hi_next]);
        faces.push([lo_cur, hi_next, hi_cur]);
    }
    TriangleMesh::new(vertices, faces).expect("cylinder construction is valid")
}

/// Closed triangular-prism ridge: a wedge whose sharp edge runs along x at
/// `z = 0`, flaring to a `width`-wide base at `z = height`.
pub fn ridge(length: f64, width: f64, height: f64) -> TriangleMesh {
    let hl = length / 2.0;
    let hw = width / 2.0;
    let vertices = vec![
        Point3::new(-hl, 0.0, 0.0),     // 0 edge -x
        Point3::new(hl, 0.0, 0.0),      // 1 edge +x
        Point3::new(-hl, -hw, height),  // 2 base
        Point3::new(hl, -hw, height),   // 3
        Point3::new(hl, hw, height),    // 4
        Point3::new(-hl, hw, height),   // 5
    ];
    let faces = vec![
        [0, 1, 3],
        [0, 3, 2], // slope -y
        [0, 4, 1],
        [0, 5, 4], // slope +y
        [2, 3, 4],
        [2, 4, 5], // base
        [0, 2, 5], // end -x
        [1, 4, 3], // end +x
    ];
    TriangleMesh::new(vertices, faces).expect("ridge construction is valid")
}

/// Icosphere shell with cone-shaped holes cut around the given directions.
///
/// Faces whose centroid direction lies within `half_angle` radians of a
/// hole axis are removed. This is the indicator shape: a hemispherical
/// shell that covers the whole aperture except where an indenter pokes
/// through.
pub fn holed_sphere(
    radius: f64,
    subdivisions: u32,
    holes: &[(Vector3<f64>, f64)],
) -> TriangleMesh {
    let sphere = icosphere(radius, subdivisions);
    let mut faces = Vec::new();
    for fi in 0..sphere.face_count() {
        let [a, b, c] = sphere.triangle(fi);
        let centroid = (a.coords + b.coords + c.coords) / 3.0;
        let dir = centroid.normalize();
        let in_hole = holes
            .iter()
            .any(|(axis, half_angle)| dir.dot(&axis.normalize()).acos() < *half_angle);
        if !in_hole {
            faces.push(sphere.faces()[fi]);
        }
    }
    TriangleMesh::new(sphere.vertices().to_vec(), faces).expect("holed sphere is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        let s = icosphere(1.0, 0);
        assert_eq!(s.face_count(), 20);
        assert_eq!(s.vertex_count(), 12);
        let s2 = icosphere(1.0, 2);
        assert_eq!(s2.face_count(), 320);
        assert_eq!(s2.vertex_count(), 162);
    }

    #[test]
    fn icosphere_vertices_on_sphere() {
        let s = icosphere(25.0, 3);
        for v in s.vertices() {
            assert!((v.coords.norm() - 25.0).abs() < 1e-9);
        }
    }

    #[test]
    fn primitives_are_valid_meshes() {
        assert!(cone(3.0, 6.0, 24).face_count() > 0);
        assert!(cylinder(2.0, 8.0, 24).face_count() > 0);
        assert!(ridge(10.0, 2.0, 5.0).face_count() > 0);
    }

    #[test]
    fn holed_sphere_removes_faces_near_axis() {
        let full = icosphere(10.0, 3);
        let holed = holed_sphere(10.0, 3, &[(Vector3::new(0.0, 0.0, 1.0), 0.3)]);
        assert!(holed.face_count() < full.face_count());
        for fi in 0..holed.face_count() {
            let [a, b, c] = holed.triangle(fi);
            let dir = ((a.coords + b.coords + c.coords) / 3.0).normalize();
            assert!(dir.dot(&Vector3::new(0.0, 0.0, 1.0)).acos() >= 0.3);
        }
    }
}
