//! STL reading and writing, binary and ASCII.
//!
//! Binary layout: 80-byte header, u32 facet count, then 50-byte records
//! (normal + 3 vertices as f32 little-endian triples, u16 attribute).
//! Vertices that are bitwise-equal across facets are merged.

use std::collections::HashMap;

use nalgebra::Point3;

use super::types::{MeshError, TriangleMesh};

/// Parses a binary or ASCII STL payload into a deduplicated mesh.
///
/// The format is sniffed: payloads starting with `solid` that contain a
/// `facet` keyword are treated as ASCII, everything else as binary.
pub fn parse_stl(bytes: &[u8]) -> Result<TriangleMesh, MeshError> {
    if looks_ascii(bytes) {
        parse_ascii(bytes)
    } else {
        parse_binary(bytes)
    }
}

fn looks_ascii(bytes: &[u8]) -> bool {
    let head = &bytes[..bytes.len().min(512)];
    let Ok(text) = std::str::from_utf8(head) else {
        return false;
    };
    // Binary files may also start with "solid" in the 80-byte header, so
    // require an actual facet (or an empty ASCII solid) to call it text.
    let trimmed = text.trim_start();
    trimmed.starts_with("solid") && (text.contains("facet") || text.contains("endsolid"))
}

struct VertexPool {
    vertices: Vec<Point3<f64>>,
    // Keyed on the raw f32 bits so dedup is exact, not tolerance-based.
    index: HashMap<[u32; 3], u32>,
}

impl VertexPool {
    fn new() -> Self {
        VertexPool {
            vertices: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn intern(&mut self, raw: [f32; 3]) -> u32 {
        let key = [raw[0].to_bits(), raw[1].to_bits(), raw[2].to_bits()];
        *self.index.entry(key).or_insert_with(|| {
            let id = self.vertices.len() as u32;
            self.vertices
                .push(Point3::new(raw[0] as f64, raw[1] as f64, raw[2] as f64));
            id
        })
    }
}

fn parse_binary(bytes: &[u8]) -> Result<TriangleMesh, MeshError> {
    if bytes.len() < 84 {
        return Err(MeshError::Truncated {
            offset: bytes.len(),
            context: "binary STL needs an 80-byte header and a u32 facet count".into(),
        });
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let expected = 84 + count * 50;
    if bytes.len() < expected {
        return Err(MeshError::Truncated {
            offset: bytes.len(),
            context: format!("expected {expected} bytes for {count} facets"),
        });
    }

    let mut pool = VertexPool::new();
    let mut faces = Vec::with_capacity(count);
    for fi in 0..count {
        let rec = &bytes[84 + fi * 50..84 + fi * 50 + 50];
        let mut ids = [0u32; 3];
        for (vi, id) in ids.iter_mut().enumerate() {
            let mut raw = [0f32; 3];
            for (ci, r) in raw.iter_mut().enumerate() {
                let at = 12 + vi * 12 + ci * 4;
                *r = f32::from_le_bytes(rec[at..at + 4].try_into().unwrap());
                if !r.is_finite() {
                    return Err(MeshError::NonFiniteCoordinate { facet: fi });
                }
            }
            *id = pool.intern(raw);
        }
        faces.push(ids);
    }
    TriangleMesh::new(pool.vertices, faces)
}

fn parse_ascii(bytes: &[u8]) -> Result<TriangleMesh, MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|e| MeshError::Parse {
        offset: e.valid_up_to(),
        message: "invalid UTF-8 in ASCII STL".into(),
    })?;

    let mut pool = VertexPool::new();
    let mut faces = Vec::new();
    let mut pending: Vec<u32> = Vec::with_capacity(3);
    let mut facet_index = 0usize;
    let mut offset = 0usize;
    let mut seen_endsolid = false;

    for line in text.lines() {
        let line_offset = offset;
        offset += line.len() + 1;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("vertex") => {
                let mut raw = [0f32; 3];
                for r in raw.iter_mut() {
                    let tok = tokens.next().ok_or_else(|| MeshError::Parse {
                        offset: line_offset,
                        message: "vertex line with fewer than 3 coordinates".into(),
                    })?;
                    *r = tok.parse::<f32>().map_err(|_| MeshError::Parse {
                        offset: line_offset,
                        message: format!("bad coordinate {tok:?}"),
                    })?;
                    if !r.is_finite() {
                        return Err(MeshError::NonFiniteCoordinate { facet: facet_index });
                    }
                }
                pending.push(pool.intern(raw));
            }
            Some("endfacet") => {
                if pending.len() != 3 {
                    return Err(MeshError::Parse {
                        offset: line_offset,
                        message: format!("facet with {} vertices", pending.len()),
                    });
                }
                faces.push([pending[0], pending[1], pending[2]]);
                pending.clear();
                facet_index += 1;
            }
            Some("endsolid") => seen_endsolid = true,
            _ => {}
        }
    }
    if !pending.is_empty() || !seen_endsolid {
        return Err(MeshError::Truncated {
            offset: bytes.len(),
            context: "ASCII STL ended before endsolid".into(),
        });
    }
    TriangleMesh::new(pool.vertices, faces)
}

/// Encodes a mesh as binary STL.
pub fn write_binary_stl(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(84 + mesh.face_count() * 50);
    out.extend_from_slice(&[0u8; 80]);
    out.extend_from_slice(&(mesh.face_count() as u32).to_le_bytes());
    for fi in 0..mesh.face_count() {
        let n = mesh.normals()[fi];
        for c in [n.x, n.y, n.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        for v in mesh.triangle(fi) {
            for c in [v.x, v.y, v.z] {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}

/// Encodes a mesh as ASCII STL.
pub fn write_ascii_stl(mesh: &TriangleMesh, name: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!("solid {name}\n"));
    for fi in 0..mesh.face_count() {
        let n = mesh.normals()[fi];
        out.push_str(&format!("  facet normal {} {} {}\n", n.x, n.y, n.z));
        out.push_str("    outer loop\n");
        for v in mesh.triangle(fi) {
            out.push_str(&format!("      vertex {} {} {}\n", v.x, v.y, v.z));
        }
        out.push_str("    endloop\n  endfacet\n");
    }
    out.push_str(&format!("endsolid {name}\n"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes::icosphere;
    use nalgebra::Vector3;

    const SINGLE_FACET: &str = "solid tri\n  facet normal 0 0 1\n    outer loop\n      vertex 0 0 0\n      vertex 1 0 0\n      vertex 0 1 0\n    endloop\n  endfacet\nendsolid tri\n";

    #[test]
    fn ascii_single_facet() {
        let mesh = parse_stl(SINGLE_FACET.as_bytes()).unwrap();
        assert_eq!(mesh.vertex_count(), 3);
        assert_eq!(mesh.face_count(), 1);
        assert!((mesh.normals()[0] - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn binary_icosphere_round_trip_dedups_vertices() {
        // A twice-subdivided icosphere has 320 faces and 162 unique
        // vertices; the binary STL stores each vertex once per facet.
        let sphere = icosphere(25.0, 2);
        assert_eq!(sphere.face_count(), 320);
        let bytes = write_binary_stl(&sphere);
        let parsed = parse_stl(&bytes).unwrap();
        assert_eq!(parsed.face_count(), 320);
        assert_eq!(parsed.vertex_count(), 162);
    }

    #[test]
    fn brute_force_unique_vertex_census_matches_dedup() {
        // Independent census: collect every facet corner from the raw STL
        // payload and count distinct bit patterns.
        let sphere = icosphere(10.0, 2);
        let bytes = write_binary_stl(&sphere);
        let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        let mut seen = std::collections::HashSet::new();
        for fi in 0..count {
            let rec = &bytes[84 + fi * 50..84 + fi * 50 + 50];
            for vi in 0..3 {
                let at = 12 + vi * 12;
                seen.insert(rec[at..at + 12].to_vec());
            }
        }
        let parsed = parse_stl(&bytes).unwrap();
        assert_eq!(parsed.vertex_count(), seen.len());
    }

    #[test]
    fn empty_binary_stl_is_valid_and_empty() {
        let mut bytes = vec![0u8; 80];
        bytes.extend_from_slice(&0u32.to_le_bytes());
        let mesh = parse_stl(&bytes).unwrap();
        assert_eq!(mesh.face_count(), 0);
        assert!(mesh.is_empty());
    }

    #[test]
    fn truncated_binary_names_offset() {
        let sphere = icosphere(10.0, 1);
        let bytes = write_binary_stl(&sphere);
        let cut = bytes.len() - 13;
        match parse_stl(&bytes[..cut]) {
            Err(MeshError::Truncated { offset, .. }) => assert_eq!(offset, cut),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_coordinate_is_rejected() {
        let mut bytes = vec![0u8; 80];
        bytes.extend_from_slice(&1u32.to_le_bytes());
        let mut rec = Vec::new();
        for _ in 0..3 {
            rec.extend_from_slice(&0f32.to_le_bytes());
        }
        rec.extend_from_slice(&f32::NAN.to_le_bytes());
        while rec.len() < 48 {
            rec.extend_from_slice(&1f32.to_le_bytes());
        }
        rec.extend_from_slice(&0u16.to_le_bytes());
        bytes.extend_from_slice(&rec);
        assert!(matches!(
            parse_stl(&bytes),
            Err(MeshError::NonFiniteCoordinate { facet: 0 })
        ));
    }

    #[test]
    fn ascii_round_trip() {
        let sphere = icosphere(5.0, 1);
        let text = write_ascii_stl(&sphere, "ico");
        let parsed = parse_stl(text.as_bytes()).unwrap();
        assert_eq!(parsed.face_count(), sphere.face_count());
        assert_eq!(parsed.vertex_count(), sphere.vertex_count());
    }
}
