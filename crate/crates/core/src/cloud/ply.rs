//! ASCII PLY export for point clouds.

use std::path::Path;

use super::points::PointCloud;
use super::CloudError;

/// Serializes the cloud as ASCII PLY: double-precision coordinates, plus
/// uchar red/green/blue when the cloud carries colors.
pub fn ply_string(cloud: &PointCloud) -> String {
    let mut out = String::from("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.colors().is_some() {
        out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    out.push_str("end_header\n");
    match cloud.colors() {
        Some(colors) => {
            for (p, c) in cloud.points().iter().zip(colors) {
                out.push_str(&format!(
                    "{} {} {} {} {} {}\n",
                    p.x, p.y, p.z, c[0], c[1], c[2]
                ));
            }
        }
        None => {
            for p in cloud.points() {
                out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
            }
        }
    }
    out
}

pub fn write_ply(cloud: &PointCloud, path: &Path) -> Result<(), CloudError> {
    std::fs::write(path, ply_string(cloud)).map_err(CloudError::Io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    #[test]
    fn plain_cloud_header_and_rows() {
        let cloud = PointCloud::new(vec![
            Point3::new(0.0, 1.5, -2.0),
            Point3::new(0.25, 0.0, 9.4),
        ])
        .unwrap();
        let text = ply_string(&cloud);
        let expected = "ply\n\
                        format ascii 1.0\n\
                        element vertex 2\n\
                        property double x\n\
                        property double y\n\
                        property double z\n\
                        end_header\n\
                        0 1.5 -2\n\
                        0.25 0 9.4\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn colored_cloud_declares_color_properties() {
        let cloud = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)])
            .unwrap()
            .with_colors(vec![[255, 0, 128]])
            .unwrap();
        let text = ply_string(&cloud);
        assert!(text.contains("property uchar red\nproperty uchar green\nproperty uchar blue\n"));
        assert!(text.ends_with("1 2 3 255 0 128\n"));
    }

    #[test]
    fn file_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.ply");
        let cloud = PointCloud::new(vec![Point3::new(0.1, 0.2, 0.3)]).unwrap();
        write_ply(&cloud, &path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert_eq!(body, ply_string(&cloud));
    }
}
