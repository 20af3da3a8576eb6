//! Mesh-level inference shared by the command line and the HTTP server:
//! normalize, sample, cage, predict, and deform back in original coordinates.

use serde::{Deserialize, Serialize};

use crate::cage::{mean_value_coordinates, Cage, CageWeights, ShrinkWrap};
use crate::deformer::{compose_influence, deform_shape, InfluenceMatrix, KeypointDeformer, KeypointSet, PreparedShape};
use crate::geom::{normalize_unit_box, sample_surface, Mesh, UnitBoxTransform};
use crate::{Error, Result, Rng, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Points sampled for keypoint prediction.
    pub points: usize,
    /// Sampling seed; fixed so repeated runs on one mesh agree.
    pub seed: u64,
    pub shrink_wrap: ShrinkWrap,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            points: 1024,
            seed: 0,
            shrink_wrap: ShrinkWrap::default(),
        }
    }
}

/// A mesh prepared for keypoint editing against one model.
#[derive(Debug, Clone)]
pub struct EditableShape {
    pub original: Mesh,
    pub transform: UnitBoxTransform,
    pub prepared: PreparedShape,
    /// Cage coordinates of the normalized mesh vertices.
    pub mesh_weights: CageWeights,
    /// Predicted keypoints in unit-box coordinates.
    pub keypoints: KeypointSet,
    pub influence: InfluenceMatrix,
}

impl EditableShape {
    pub fn new(model: &KeypointDeformer, mesh: &Mesh, options: &PipelineOptions) -> Result<Self> {
        let (normalized, transform) = normalize_unit_box(mesh)?;
        let mut rng = Rng::new(options.seed);
        let cloud = sample_surface(&normalized, options.points, &mut rng)?;
        let prepared = PreparedShape::from_cloud(cloud, &model.config.cage_template(), &options.shrink_wrap)?;
        let mesh_weights = mean_value_coordinates(&normalized.vertices, &prepared.cage)?;
        let prediction = model.predict(&prepared.cloud.points)?;
        let influence = compose_influence(
            &model.canonical_influence.values,
            &prediction.influence_offset,
            &prediction.keypoints,
            &prepared.cage,
        )?;
        Ok(Self {
            original: mesh.clone(),
            transform,
            prepared,
            mesh_weights,
            keypoints: prediction.keypoints,
            influence,
        })
    }

    pub fn num_keypoints(&self) -> usize {
        self.keypoints.len()
    }

    /// Predicted keypoints in the mesh's own coordinates.
    pub fn keypoints_original(&self) -> KeypointSet {
        KeypointSet {
            points: self.keypoints.points.iter().map(|&p| self.transform.invert(p)).collect(),
        }
    }

    pub fn cage_original(&self) -> Cage {
        Cage {
            vertices: self.prepared.cage.vertices.iter().map(|&p| self.transform.invert(p)).collect(),
            faces: self.prepared.cage.faces.clone(),
        }
    }

    /// Deform the original mesh so its keypoints move to `target`, both
    /// given in the mesh's own coordinates. Always starts from the
    /// original shape.
    pub fn deform(&self, target: &KeypointSet) -> Result<Mesh> {
        if target.len() != self.keypoints.len() {
            return Err(Error::Dimension(format!(
                "expected {} target keypoints, got {}",
                self.keypoints.len(),
                target.len()
            )));
        }
        let target = KeypointSet::new(target.points.iter().map(|&p| self.transform.apply(p)).collect())?;
        let moved = deform_shape(&self.mesh_weights, &self.prepared.cage, &self.influence, &self.keypoints, &target)?;
        self.original.with_vertices(moved.into_iter().map(|p| self.transform.invert(p)).collect())
    }
}

/// Round to 9 significant digits (the JSON wire precision).
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

pub fn round_points(points: &[Vec3]) -> Vec<Vec3> {
    points.iter().map(|p| p.map(round_sig)).collect()
}
