//! Mesh and point-cloud primitives.

mod chamfer;
mod fps;
mod obj;
mod sample;
pub mod synthetic;
pub mod vec3;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

pub use chamfer::{chamfer_distance, chamfer_with_grad, ChamferGrad};
pub use fps::{farthest_point_sample, farthest_point_sample_from, farthest_point_indices};
pub use obj::{load_obj, parse_obj, save_obj, write_obj};
pub use sample::{sample_surface, sample_surface_faces};
pub use synthetic::{generate_synthetic_family, Family, Landmark, SyntheticShape};

/// Triangle surface. Construct through [`Mesh::new`] to get the index checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::EmptyMesh("vertices"));
        }
        if faces.is_empty() {
            return Err(Error::EmptyMesh("faces"));
        }
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i >= vertices.len() {
                    return Err(Error::IndexOutOfRange {
                        face: fi,
                        index: i,
                        count: vertices.len(),
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateFace(fi));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * vec3::norm(vec3::cross(vec3::sub(b, a), vec3::sub(c, a)))
    }

    /// Unsigned distance from `p` to the nearest point on the surface.
    pub fn distance_to_surface(&self, p: Vec3) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                vec3::point_triangle_distance(p, a, b, c)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Same faces, new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Dimension(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Ok(Self {
            vertices,
            faces: self.faces.clone(),
        })
    }
}

/// Ordered set of 3D points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Dimension("point cloud has non-finite coordinates".into()));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.points).expect("points serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::new(serde_json::from_str(s)?)
    }
}

/// Maps original coordinates into the unit box: `normalized = scale * v + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitBoxTransform {
    pub scale: f64,
    pub translation: Vec3,
}

impl UnitBoxTransform {
    pub const IDENTITY: Self = Self {
        scale: 1.0,
        translation: [0.0; 3],
    };

    pub fn apply(&self, p: Vec3) -> Vec3 {
        vec3::add(vec3::scale(p, self.scale), self.translation)
    }

    pub fn invert(&self, p: Vec3) -> Vec3 {
        vec3::scale(vec3::sub(p, self.translation), 1.0 / self.scale)
    }
}

/// Center at the bounding-box center and scale uniformly so the longest
/// axis has length 1.
pub fn normalize_unit_box(mesh: &Mesh) -> Result<(Mesh, UnitBoxTransform)> {
    if mesh.vertices.is_empty() {
        return Err(Error::EmptyMesh("vertices"));
    }
    let (lo, hi) = vec3::bounds(&mesh.vertices);
    let extent = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
    if extent <= 0.0 || !extent.is_finite() {
        return Err(Error::ZeroExtent);
    }
    let scale = 1.0 / extent;
    let center = vec3::scale(vec3::add(lo, hi), 0.5);
    let transform = UnitBoxTransform {
        scale,
        translation: vec3::scale(center, -scale),
    };
    let vertices = mesh.vertices.iter().map(|&v| transform.apply(v)).collect();
    Ok((
        Mesh {
            vertices,
            faces: mesh.faces.clone(),
        },
        transform,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(lo: f64, hi: f64) -> Mesh {
        let mut v = Vec::new();
        for &x in &[lo, hi] {
            for &y in &[lo, hi] {
                for &z in &[lo, hi] {
                    v.push([x, y, z]);
                }
            }
        }
        let f = vec![
            [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5], [0, 4, 5], [0, 5, 1],
            [2, 3, 7], [2, 7, 6], [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
        ];
        Mesh::new(v, f).unwrap()
    }

    #[test]
    fn normalize_cube() {
        let (m, t) = normalize_unit_box(&cube(-2.0, 2.0)).unwrap();
        assert_eq!(m.vertices[0], [-0.5, -0.5, -0.5]);
        assert_eq!(m.vertices[7], [0.5, 0.5, 0.5]);
        assert_eq!(t.scale, 0.25);
    }

    #[test]
    fn normalized_mesh_gets_identity_transform() {
        let (_, t) = normalize_unit_box(&cube(-0.5, 0.5)).unwrap();
        assert_eq!(t, UnitBoxTransform::IDENTITY);
    }

    #[test]
    fn anisotropic_segment_uses_uniform_scale() {
        let m = Mesh::new(vec![[0.0, 0.0, 0.0], [4.0, 1.0, 0.0], [2.0, 0.5, 0.0]], vec![[0, 1, 2]])
            .unwrap();
        let (n, t) = normalize_unit_box(&m).unwrap();
        let (lo, hi) = vec3::bounds(&n.vertices);
        assert!((hi[0] - lo[0] - 1.0).abs() < 1e-15);
        assert!((hi[1] - lo[1] - 0.25).abs() < 1e-15);
        for v in &m.vertices {
            let back = t.invert(t.apply(*v));
            assert!(vec3::dist(back, *v) < 1e-12);
        }
    }

    #[test]
    fn zero_extent_rejected() {
        let m = Mesh {
            vertices: vec![[1.0, 1.0, 1.0]; 3],
            faces: vec![[0, 1, 2]],
        };
        assert!(matches!(normalize_unit_box(&m), Err(Error::ZeroExtent)));
    }

    #[test]
    fn mesh_validation() {
        assert!(matches!(
            Mesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 9]]),
            Err(Error::IndexOutOfRange { index: 9, .. })
        ));
        assert!(matches!(
            Mesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 1]]),
            Err(Error::DegenerateFace(0))
        ));
    }

    #[test]
    fn cloud_json_round_trip() {
        let c = PointCloud::new(vec![[0.5, -0.25, 0.0], [1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(c.to_json(), "[[0.5,-0.25,0.0],[1.0,2.0,3.0]]");
        assert_eq!(PointCloud::from_json(&c.to_json()).unwrap(), c);
        assert!(PointCloud::from_json("[]").is_err());
    }

    #[test]
    fn surface_distance_of_cube() {
        let m = cube(-0.5, 0.5);
        assert!((m.distance_to_surface([0.0, 0.0, 0.0]) - 0.5).abs() < 1e-12);
        assert!((m.distance_to_surface([1.0, 0.0, 0.0]) - 0.5).abs() < 1e-12);
        assert!(m.distance_to_surface([0.5, 0.1, 0.2]).abs() < 1e-12);
    }
}
