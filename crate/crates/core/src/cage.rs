//! Coarse enclosing cages and mean-value-coordinate deformation.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::sha256_hex;
use crate::geom::{vec3, Mesh, PointCloud};
use crate::{Error, Result, Vec3};

/// Closed genus-0 triangle mesh. Every cage in a category shares faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cage {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl Cage {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn to_mesh(&self) -> Mesh {
        Mesh {
            vertices: self.vertices.clone(),
            faces: self.faces.clone(),
        }
    }

    pub fn from_mesh(mesh: Mesh) -> Self {
        Self {
            vertices: mesh.vertices,
            faces: mesh.faces,
        }
    }

    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Dimension(format!(
                "cage has {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Ok(Self {
            vertices,
            faces: self.faces.clone(),
        })
    }

    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::with_capacity(self.vertices.len() * 24 + self.faces.len() * 24);
        for v in &self.vertices {
            for c in v {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
        for f in &self.faces {
            for &i in f {
                bytes.extend_from_slice(&(i as u64).to_le_bytes());
            }
        }
        sha256_hex(&bytes)
    }
}

/// Unit icosphere: an icosahedron split `subdivisions` times with every
/// vertex projected back onto the sphere. Faces wind outward.
pub fn icosphere(subdivisions: u32) -> Cage {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(unit)
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push(unit(vec3::scale(vec3::add(vertices[a], vertices[b]), 0.5)));
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    Cage { vertices, faces }
}

fn unit(v: Vec3) -> Vec3 {
    vec3::scale(v, 1.0 / vec3::norm(v))
}

/// Shrink-wrap parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkWrap {
    /// Stop once the nearest target point is this close.
    pub margin: f64,
    /// Fraction of the current center distance moved per iteration.
    pub step: f64,
    pub max_iters: usize,
    /// Initial cage radius as a multiple of the target's bounding radius.
    pub initial_scale: f64,
}

impl Default for ShrinkWrap {
    fn default() -> Self {
        Self {
            margin: 0.05,
            step: 0.05,
            max_iters: 100,
            initial_scale: 1.2,
        }
    }
}

/// Scale `template` around the target centroid and pull each vertex toward
/// that centroid until it comes within `margin` of the target.
pub fn init_cage(target: &PointCloud, template: &Cage, params: &ShrinkWrap) -> Result<Cage> {
    if target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let center = vec3::centroid(&target.points);
    let radius = target
        .points
        .iter()
        .map(|&p| vec3::dist(p, center))
        .fold(0.0, f64::max);
    let tcenter = vec3::centroid(&template.vertices);
    let tradius = template
        .vertices
        .iter()
        .map(|&v| vec3::dist(v, tcenter))
        .fold(0.0, f64::max);
    let s = params.initial_scale * radius / tradius;
    let near = |p: Vec3| {
        target
            .points
            .iter()
            .map(|&q| vec3::dist2(p, q))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    };
    let vertices = template
        .vertices
        .iter()
        .map(|&v| {
            let mut p = vec3::add(center, vec3::scale(vec3::sub(v, tcenter), s));
            for _ in 0..params.max_iters {
                if near(p) <= params.margin {
                    break;
                }
                let toward = vec3::sub(center, p);
                p = vec3::add(p, vec3::scale(toward, params.step));
            }
            p
        })
        .collect();
    template.with_vertices(vertices)
}

/// Row-major `rows x cols` matrix of cage coordinates: one row per point,
/// one column per cage vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct CageWeights {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl CageWeights {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

const ON_SURFACE: f64 = 1e-12;
const PERTURBATION: f64 = 1e-9;
const FLAT: f64 = 1e-8;

/// Mean value coordinates of each point with respect to a closed triangle
/// cage. Rows sum to one and reproduce the point from the cage vertices;
/// points outside the cage may receive negative weights.
pub fn mean_value_coordinates(points: &[Vec3], cage: &Cage) -> Result<CageWeights> {
    if cage.is_empty() || cage.faces.is_empty() {
        return Err(Error::EmptyMesh("cage vertices"));
    }
    let cols = cage.len();
    let center = vec3::centroid(&cage.vertices);
    let mut data = vec![0.0; points.len() * cols];
    let mut scratch = MvcScratch::new(cols);
    for (i, &p) in points.iter().enumerate() {
        let mut x = p;
        if surface_distance(x, cage) < ON_SURFACE {
            let dir = vec3::sub(center, x);
            let n = vec3::norm(dir);
            if n > 0.0 {
                x = vec3::add(x, vec3::scale(dir, PERTURBATION / n));
            }
            if surface_distance(x, cage) < ON_SURFACE {
                return Err(Error::OnCage { index: i });
            }
        }
        let row = &mut data[i * cols..(i + 1) * cols];
        mvc_point(x, cage, row, &mut scratch);
    }
    Ok(CageWeights {
        rows: points.len(),
        cols,
        data,
    })
}

fn surface_distance(x: Vec3, cage: &Cage) -> f64 {
    cage.faces
        .iter()
        .map(|&[a, b, c]| {
            vec3::point_triangle_distance(x, cage.vertices[a], cage.vertices[b], cage.vertices[c])
        })
        .fold(f64::INFINITY, f64::min)
}

struct MvcScratch {
    d: Vec<f64>,
    u: Vec<Vec3>,
}

impl MvcScratch {
    fn new(n: usize) -> Self {
        Self {
            d: vec![0.0; n],
            u: vec![[0.0; 3]; n],
        }
    }
}

// Mean value coordinates for closed triangle meshes (Ju, Schaefer and
// Warren), including their flat-triangle fallback to barycentric weights.
fn mvc_point(x: Vec3, cage: &Cage, out: &mut [f64], s: &mut MvcScratch) {
    out.iter_mut().for_each(|w| *w = 0.0);
    for (j, &v) in cage.vertices.iter().enumerate() {
        let diff = vec3::sub(v, x);
        let d = vec3::norm(diff);
        if d < FLAT {
            out[j] = 1.0;
            return;
        }
        s.d[j] = d;
        s.u[j] = vec3::scale(diff, 1.0 / d);
    }
    for &f in &cage.faces {
        let u = [s.u[f[0]], s.u[f[1]], s.u[f[2]]];
        let d = [s.d[f[0]], s.d[f[1]], s.d[f[2]]];
        let mut theta = [0.0; 3];
        for i in 0..3 {
            let l = vec3::dist(u[(i + 1) % 3], u[(i + 2) % 3]);
            theta[i] = 2.0 * (l / 2.0).min(1.0).asin();
        }
        let h = (theta[0] + theta[1] + theta[2]) / 2.0;
        if PI - h < FLAT {
            // x lies on this triangle: barycentric weights are the limit.
            out.iter_mut().for_each(|w| *w = 0.0);
            let mut total = 0.0;
            for i in 0..3 {
                let w = theta[i].sin() * d[(i + 2) % 3] * d[(i + 1) % 3];
                out[f[i]] = w;
                total += w;
            }
            out.iter_mut().for_each(|w| *w /= total);
            return;
        }
        let sign = vec3::dot(u[0], vec3::cross(u[1], u[2])).signum();
        let mut c = [0.0; 3];
        let mut sn = [0.0; 3];
        let mut skip = false;
        for i in 0..3 {
            let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
            c[i] = 2.0 * h.sin() * (h - theta[i]).sin() / (theta[i1].sin() * theta[i2].sin()) - 1.0;
            sn[i] = sign * (1.0 - c[i] * c[i]).max(0.0).sqrt();
            if sn[i].abs() <= FLAT {
                skip = true;
            }
        }
        if skip {
            // x is outside this triangle but in its plane.
            continue;
        }
        for i in 0..3 {
            let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
            out[f[i]] += (theta[i] - c[i1] * theta[i2] - c[i2] * theta[i1])
                / (d[i] * theta[i1].sin() * sn[i2]);
        }
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|w| *w /= total);
}

/// Apply cage coordinates to (possibly deformed) cage vertices.
pub fn deform(weights: &CageWeights, deformed_vertices: &[Vec3]) -> Result<Vec<Vec3>> {
    if deformed_vertices.len() != weights.cols {
        return Err(Error::Dimension(format!(
            "weights have {} columns, got {} cage vertices",
            weights.cols,
            deformed_vertices.len()
        )));
    }
    Ok((0..weights.rows)
        .map(|i| {
            let mut p = [0.0; 3];
            for (w, v) in weights.row(i).iter().zip(deformed_vertices) {
                p[0] += w * v[0];
                p[1] += w * v[1];
                p[2] += w * v[2];
            }
            p
        })
        .collect())
}

/// Gradient of a scalar with respect to the cage vertices, given its
/// gradient with respect to the deformed points (`W^T g`).
pub fn deform_backward(weights: &CageWeights, grad_points: &[Vec3]) -> Result<Vec<Vec3>> {
    if grad_points.len() != weights.rows {
        return Err(Error::Dimension(format!(
            "weights have {} rows, got {} point gradients",
            weights.rows,
            grad_points.len()
        )));
    }
    let mut g = vec![[0.0; 3]; weights.cols];
    for (i, gp) in grad_points.iter().enumerate() {
        for (gv, w) in g.iter_mut().zip(weights.row(i)) {
            gv[0] += w * gp[0];
            gv[1] += w * gp[1];
            gv[2] += w * gp[2];
        }
    }
    Ok(g)
}

/// Sidecar describing a weight blob on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsSidecar {
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub layout: String,
    pub points_sha256: String,
    pub cage_sha256: String,
    pub blob_sha256: String,
}

pub fn points_hash(points: &[Vec3]) -> String {
    let mut bytes = Vec::with_capacity(points.len() * 24);
    for p in points {
        for c in p {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
    }
    sha256_hex(&bytes)
}

/// Write `weights` as little-endian f64 (row-major) plus a JSON sidecar.
pub fn save_weights(
    weights: &CageWeights,
    points: &[Vec3],
    cage: &Cage,
    blob: impl AsRef<Path>,
    sidecar: impl AsRef<Path>,
) -> Result<WeightsSidecar> {
    let mut bytes = Vec::with_capacity(weights.data.len() * 8);
    for w in &weights.data {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    let meta = WeightsSidecar {
        rows: weights.rows,
        cols: weights.cols,
        dtype: "f64-le".into(),
        layout: "row-major".into(),
        points_sha256: points_hash(points),
        cage_sha256: cage.content_hash(),
        blob_sha256: sha256_hex(&bytes),
    };
    std::fs::write(blob.as_ref(), &bytes).map_err(|e| Error::io(blob.as_ref(), e))?;
    std::fs::write(sidecar.as_ref(), serde_json::to_vec_pretty(&meta)?)
        .map_err(|e| Error::io(sidecar.as_ref(), e))?;
    Ok(meta)
}

pub fn load_weights(blob: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<(CageWeights, WeightsSidecar)> {
    let meta: WeightsSidecar = serde_json::from_slice(
        &std::fs::read(sidecar.as_ref()).map_err(|e| Error::io(sidecar.as_ref(), e))?,
    )?;
    let bytes = std::fs::read(blob.as_ref()).map_err(|e| Error::io(blob.as_ref(), e))?;
    if bytes.len() != meta.rows * meta.cols * 8 {
        return Err(Error::Dimension(format!(
            "weight blob has {} bytes, sidecar says {}x{}",
            bytes.len(),
            meta.rows,
            meta.cols
        )));
    }
    if sha256_hex(&bytes) != meta.blob_sha256 {
        return Err(Error::Checkpoint("weight blob checksum mismatch".into()));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((
        CageWeights {
            rows: meta.rows,
            cols: meta.cols,
            data,
        },
        meta,
    ))
}
