//! Plain-Rust state behind the browser demo, testable natively.
//!
//! There is no trained network in the page. The family's landmarks stand in
//! for predicted keypoints and each cage vertex follows the keypoints whose
//! mask it falls under, so dragging still runs the real cage pipeline:
//! skinning, then mean value coordinates.

use keydeform::cage::{self, init_cage, mean_value_coordinates, Cage, CageWeights, ShrinkWrap};
use keydeform::deformer::{compose_influence, skin_cage, InfluenceMatrix, KeypointSet, ModelConfig};
use keydeform::geom::{farthest_point_indices, generate_synthetic_family, sample_surface, vec3, Family, Mesh, PointCloud};
use keydeform::prior::{fit_pca, synchronize, PcaPrior};
use keydeform::{Error, Result, Rng, Vec3};

/// Shapes the landmark prior is fitted on.
const PRIOR_SHAPES: usize = 64;
const PRIOR_BASES: usize = 8;
const CLOUD_POINTS: usize = 1024;

pub struct Scene {
    pub family: Family,
    mesh: Mesh,
    cloud: PointCloud,
    cage: Cage,
    weights: CageWeights,
    influence: Vec<f64>,
    keypoints: KeypointSet,
    targets: Vec<Vec3>,
    prior: PcaPrior,
}

/// Row-normalized mask: a cage vertex shared by several keypoints splits
/// its motion between them.
fn follow_influence(mask: &InfluenceMatrix) -> Vec<f64> {
    let k = mask.keypoints;
    let mut w = vec![0.0; mask.cage_vertices * k];
    for v in 0..mask.cage_vertices {
        let row = &mask.mask[v * k..(v + 1) * k];
        let n = row.iter().filter(|m| **m).count();
        for j in 0..k {
            if row[j] {
                w[v * k + j] = 1.0 / n as f64;
            }
        }
    }
    w
}

impl Scene {
    pub fn new(family: Family, seed: u64) -> Result<Self> {
        let mut rng = Rng::new(seed);
        let shapes = generate_synthetic_family(family, PRIOR_SHAPES, &mut rng);
        let normalized: Vec<_> = shapes.iter().map(|s| s.normalized().map(|(n, _)| n)).collect::<Result<_>>()?;
        let sets: Vec<KeypointSet> =
            normalized.iter().map(|s| KeypointSet::new(s.landmark_positions())).collect::<Result<_>>()?;
        let prior = fit_pca(&sets, PRIOR_BASES)?;

        let shape = &normalized[0];
        let mesh = shape.mesh.clone();
        let cloud = sample_surface(&mesh, CLOUD_POINTS, &mut rng)?;
        let cage = init_cage(&cloud, &ModelConfig::default().cage_template(), &ShrinkWrap::default())?;
        let weights = mean_value_coordinates(&mesh.vertices, &cage)?;
        let keypoints = sets[0].clone();
        let c = cage.len() * keypoints.len();
        let mask = compose_influence(&vec![1.0; c], &vec![0.0; c], &keypoints, &cage)?;
        Ok(Self {
            family,
            influence: follow_influence(&mask),
            targets: keypoints.points.clone(),
            mesh,
            cloud,
            cage,
            weights,
            keypoints,
            prior,
        })
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.mesh.faces
    }

    pub fn rest_vertices(&self) -> &[Vec3] {
        &self.mesh.vertices
    }

    pub fn cloud(&self) -> &[Vec3] {
        &self.cloud.points
    }

    pub fn keypoints(&self) -> &[Vec3] {
        &self.targets
    }

    pub fn num_keypoints(&self) -> usize {
        self.targets.len()
    }

    pub fn num_bases(&self) -> usize {
        self.prior.n_basis()
    }

    pub fn deformed_cage(&self) -> Result<Vec<Vec3>> {
        skin_cage(&self.cage.vertices, &self.influence, &self.keypoints.points, &self.targets)
    }

    /// The mesh with keypoints at their current targets.
    pub fn vertices(&self) -> Result<Vec<Vec3>> {
        cage::deform(&self.weights, &self.deformed_cage()?)
    }

    /// Move one keypoint. With `sync` the others follow the landmark prior.
    pub fn move_keypoint(&mut self, index: usize, to: Vec3, sync: bool) -> Result<()> {
        if index >= self.targets.len() {
            return Err(Error::Dimension(format!("keypoint {index} out of range")));
        }
        if !to.iter().all(|x| x.is_finite()) {
            return Err(Error::Config("keypoint position must be finite".into()));
        }
        if sync {
            self.targets = synchronize(&self.prior, &[(index, to)])?.points;
        } else {
            self.targets[index] = to;
        }
        Ok(())
    }

    /// Offset the rest keypoints along the prior bases, in standard deviations.
    pub fn set_prior(&mut self, sigmas: &[f64]) -> Result<()> {
        if sigmas.len() > self.prior.n_basis() {
            return Err(Error::Dimension(format!("prior has {} bases", self.prior.n_basis())));
        }
        let sd = self.prior.std_devs();
        let mut targets = self.keypoints.points.clone();
        for (b, (s, d)) in sigmas.iter().zip(&sd).enumerate() {
            for (k, t) in targets.iter_mut().enumerate() {
                for a in 0..3 {
                    t[a] += s * d * self.prior.basis[b][3 * k + a];
                }
            }
        }
        self.targets = targets;
        Ok(())
    }

    pub fn reset(&mut self) {
        self.targets = self.keypoints.points.clone();
    }

    /// Farthest point sample of the surface cloud and each point's distance
    /// to its nearest sample.
    pub fn fps_heat(&self, j: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        let idx = farthest_point_indices(&self.cloud.points, j, 0)?;
        let heat = self
            .cloud
            .points
            .iter()
            .map(|p| idx.iter().map(|&i| vec3::dist(*p, self.cloud.points[i])).fold(f64::INFINITY, f64::min))
            .collect();
        Ok((idx, heat))
    }
}
