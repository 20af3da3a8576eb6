//! Evaluation protocols: PCK through a linear regressor, part correlation,
//! the pairwise-alignment Chamfer benchmark, and property metrics for
//! synthetic families with known landmarks.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::deformer::{compose_influence, deform_shape, KeypointDeformer, KeypointSet, PreparedShape};
use crate::geom::{chamfer_distance, vec3, Mesh};
use crate::{Error, Result, Vec3};

/// Annotated keypoints of one shape; absent entries are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointAnnotation {
    pub points: Vec<Vec3>,
    pub present: Vec<bool>,
}

impl KeypointAnnotation {
    pub fn complete(points: Vec<Vec3>) -> Self {
        let present = vec![true; points.len()];
        Self { points, present }
    }
}

/// Point cloud with one integer part label per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartLabels {
    pub points: Vec<Vec3>,
    pub labels: Vec<u32>,
}

/// Per-shape annotation record as stored in annotation JSON files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ShapeAnnotation {
    /// OBJ path, relative to the annotation file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<KeypointAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parts: Option<PartLabels>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub category: String,
    pub shapes: Vec<ShapeAnnotation>,
}

/// Affine map from flattened unsupervised keypoints to annotated ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRegressor {
    pub input_dim: usize,
    pub output_dim: usize,
    /// `input_dim x output_dim`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub has_bias: bool,
    pub rank_deficient: bool,
}

impl LinearRegressor {
    pub fn predict(&self, keypoints: &KeypointSet) -> Result<Vec<Vec3>> {
        let x = keypoints.flatten();
        if x.len() != self.input_dim {
            return Err(Error::Dimension(format!(
                "regressor expects {} inputs, got {}",
                self.input_dim,
                x.len()
            )));
        }
        let mut y = self.bias.clone();
        for (i, xi) in x.iter().enumerate() {
            for (o, yo) in y.iter_mut().enumerate() {
                *yo += xi * self.weights[i * self.output_dim + o];
            }
        }
        Ok(y.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }
}

/// Least-squares fit with a bias column. Each annotated landmark is fitted
/// on the shapes where it is present; rank deficiency yields the
/// minimum-norm solution and sets `rank_deficient`.
pub fn fit_keypoint_regressor(train: &[(KeypointSet, KeypointAnnotation)]) -> Result<LinearRegressor> {
    let Some((first_kp, first_ann)) = train.first() else {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    };
    let input_dim = 3 * first_kp.len();
    let landmarks = first_ann.points.len();
    if train.len() < input_dim + 2 {
        return Err(Error::InsufficientSamples {
            needed: input_dim + 2,
            got: train.len(),
        });
    }
    if train
        .iter()
        .any(|(k, a)| 3 * k.len() != input_dim || a.points.len() != landmarks || a.present.len() != landmarks)
    {
        return Err(Error::Dimension("inconsistent keypoint or annotation counts".into()));
    }
    let output_dim = 3 * landmarks;
    let mut weights = vec![0.0; input_dim * output_dim];
    let mut bias = vec![0.0; output_dim];
    let mut rank_deficient = false;
    for l in 0..landmarks {
        let rows: Vec<&(KeypointSet, KeypointAnnotation)> = train.iter().filter(|(_, a)| a.present[l]).collect();
        if rows.is_empty() {
            rank_deficient = true;
            continue;
        }
        let n = rows.len();
        let feats: Vec<Vec<f64>> = rows.iter().map(|(k, _)| k.flatten()).collect();
        let mut x_mean = vec![0.0; input_dim];
        for f in &feats {
            x_mean.iter_mut().zip(f).for_each(|(m, v)| *m += v / n as f64);
        }
        let mut y_mean = [0.0; 3];
        for (_, a) in &rows {
            for d in 0..3 {
                y_mean[d] += a.points[l][d] / n as f64;
            }
        }
        let x = DMatrix::from_fn(n, input_dim, |r, c| feats[r][c] - x_mean[c]);
        let y = DMatrix::from_fn(n, 3, |r, c| rows[r].1.points[l][c] - y_mean[c]);
        let svd = x.svd(true, true);
        let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let eps = top * 1e-12 * (n.max(input_dim) as f64);
        // centring removes one degree of freedom from the bias column
        let rank = svd.singular_values.iter().filter(|s| **s > eps).count();
        if rank < input_dim {
            rank_deficient = true;
        }
        let w = svd.solve(&y, eps).map_err(|e| Error::Dimension(e.to_string()))?;
        for i in 0..input_dim {
            for d in 0..3 {
                weights[i * output_dim + 3 * l + d] = w[(i, d)];
            }
        }
        for d in 0..3 {
            let shift: f64 = (0..input_dim).map(|i| x_mean[i] * w[(i, d)]).sum();
            bias[3 * l + d] = y_mean[d] - shift;
        }
    }
    Ok(LinearRegressor {
        input_dim,
        output_dim,
        weights,
        bias,
        has_bias: true,
        rank_deficient,
    })
}

/// Fraction of present keypoints within `threshold` of the annotation.
pub fn pck(pred: &[Vec3], gt: &KeypointAnnotation, threshold: f64) -> Result<f64> {
    if pred.len() != gt.points.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} annotations",
            pred.len(),
            gt.points.len()
        )));
    }
    let mut hits = 0usize;
    let mut total = 0usize;
    for ((p, g), &present) in pred.iter().zip(&gt.points).zip(&gt.present) {
        if present {
            total += 1;
            if vec3::dist(*p, *g) <= threshold {
                hits += 1;
            }
        }
    }
    Ok(if total == 0 { 0.0 } else { hits as f64 / total as f64 })
}

/// Mean PCK over shapes at each threshold.
pub fn pck_curve(preds: &[Vec<Vec3>], gts: &[KeypointAnnotation], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    if preds.len() != gts.len() || preds.is_empty() {
        return Err(Error::Dimension("need one prediction per annotated shape".into()));
    }
    thresholds
        .iter()
        .map(|&t| {
            let mut s = 0.0;
            for (p, g) in preds.iter().zip(gts) {
                s += pck(p, g, t)?;
            }
            Ok((t, s / preds.len() as f64))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartCorrelation {
    pub score: f64,
    pub parts: Vec<u32>,
    /// `K x parts`: fraction of shapes where keypoint k is within the radius of part l.
    pub table: Vec<Vec<f64>>,
    pub per_keypoint: Vec<f64>,
}

/// Keypoint/part co-occurrence. A keypoint is associated with every part
/// that has a labelled point within `radius`; each keypoint scores its most
/// frequent part and the result averages over keypoints.
pub fn part_correlation(keypoint_sets: &[KeypointSet], labels: &[PartLabels], radius: f64) -> Result<PartCorrelation> {
    if keypoint_sets.is_empty() || keypoint_sets.len() != labels.len() {
        return Err(Error::Dimension("need one labelled cloud per keypoint set".into()));
    }
    let k = keypoint_sets[0].len();
    if keypoint_sets.iter().any(|s| s.len() != k) {
        return Err(Error::Dimension("keypoint sets must share K".into()));
    }
    for (i, l) in labels.iter().enumerate() {
        if l.points.is_empty() || l.points.len() != l.labels.len() {
            return Err(Error::Config(format!("shape {i} has no labelled points")));
        }
    }
    let parts: Vec<u32> = labels.iter().flat_map(|l| l.labels.iter().copied()).collect::<BTreeSet<_>>().into_iter().collect();
    let r2 = radius * radius;
    let mut counts = vec![vec![0usize; parts.len()]; k];
    for (set, lab) in keypoint_sets.iter().zip(labels) {
        for (j, p) in set.points.iter().enumerate() {
            for (pi, part) in parts.iter().enumerate() {
                let near = lab
                    .points
                    .iter()
                    .zip(&lab.labels)
                    .any(|(q, l)| l == part && vec3::dist2(*p, *q) <= r2);
                if near {
                    counts[j][pi] += 1;
                }
            }
        }
    }
    let shapes = keypoint_sets.len() as f64;
    let table: Vec<Vec<f64>> = counts.iter().map(|row| row.iter().map(|c| *c as f64 / shapes).collect()).collect();
    let per_keypoint: Vec<f64> = table.iter().map(|row| row.iter().cloned().fold(0.0, f64::max)).collect();
    let score = per_keypoint.iter().sum::<f64>() / k.max(1) as f64;
    Ok(PartCorrelation {
        score,
        parts,
        table,
        per_keypoint,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairAlignment {
    pub deformed: f64,
    pub identity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub deformed_mean: f64,
    pub identity_mean: f64,
    pub pairs: Vec<PairAlignment>,
}

/// Deform each source toward its target's predicted keypoints and compare
/// Chamfer distances with and without the deformation.
pub fn alignment_benchmark(model: &KeypointDeformer, pairs: &[(&PreparedShape, &PreparedShape)]) -> Result<AlignmentReport> {
    if pairs.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut out = Vec::with_capacity(pairs.len());
    for (src, tgt) in pairs {
        let ps = model.predict(&src.cloud.points)?;
        let pt = model.predict(&tgt.cloud.points)?;
        let w = compose_influence(&model.canonical_influence.values, &ps.influence_offset, &ps.keypoints, &src.cage)?;
        let deformed = deform_shape(&src.weights, &src.cage, &w, &ps.keypoints, &pt.keypoints)?;
        out.push(PairAlignment {
            deformed: chamfer_distance(&deformed, &tgt.cloud.points)?,
            identity: chamfer_distance(&src.cloud.points, &tgt.cloud.points)?,
        });
    }
    let n = out.len() as f64;
    Ok(AlignmentReport {
        deformed_mean: out.iter().map(|p| p.deformed).sum::<f64>() / n,
        identity_mean: out.iter().map(|p| p.identity).sum::<f64>() / n,
        pairs: out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkConsistency {
    /// For each keypoint, the landmark it is most often nearest to.
    pub landmark: Vec<usize>,
    /// Fraction of shapes on which that landmark is the nearest one.
    pub frequency: Vec<f64>,
}

impl LandmarkConsistency {
    pub fn min_frequency(&self) -> f64 {
        self.frequency.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// How often each keypoint index lands nearest the same ground-truth landmark.
pub fn landmark_consistency(keypoint_sets: &[KeypointSet], landmarks: &[Vec<Vec3>]) -> Result<LandmarkConsistency> {
    if keypoint_sets.is_empty() || keypoint_sets.len() != landmarks.len() {
        return Err(Error::Dimension("need one landmark set per keypoint set".into()));
    }
    let k = keypoint_sets[0].len();
    let l = landmarks[0].len();
    let mut counts = vec![vec![0usize; l]; k];
    for (set, marks) in keypoint_sets.iter().zip(landmarks) {
        if set.len() != k || marks.len() != l {
            return Err(Error::Dimension("inconsistent keypoint or landmark counts".into()));
        }
        for (j, p) in set.points.iter().enumerate() {
            let nearest = marks
                .iter()
                .enumerate()
                .min_by(|a, b| vec3::dist2(*p, *a.1).total_cmp(&vec3::dist2(*p, *b.1)))
                .map(|(i, _)| i)
                .expect("nonempty landmarks");
            counts[j][nearest] += 1;
        }
    }
    let n = keypoint_sets.len() as f64;
    let mut landmark = Vec::with_capacity(k);
    let mut frequency = Vec::with_capacity(k);
    for row in counts {
        let (best, c) = row.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))).expect("nonempty");
        landmark.push(best);
        frequency.push(*c as f64 / n);
    }
    Ok(LandmarkConsistency { landmark, frequency })
}

/// Mean distance from keypoints to their shape's surface.
pub fn surface_proximity(keypoint_sets: &[KeypointSet], meshes: &[Mesh]) -> Result<f64> {
    if keypoint_sets.is_empty() || keypoint_sets.len() != meshes.len() {
        return Err(Error::Dimension("need one mesh per keypoint set".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (set, mesh) in keypoint_sets.iter().zip(meshes) {
        for p in &set.points {
            sum += mesh.distance_to_surface(*p);
            n += 1;
        }
    }
    Ok(sum / n.max(1) as f64)
}

/// Mean Chamfer between each keypoint set and its reflection across `x = 0`.
pub fn mirror_symmetry(keypoint_sets: &[KeypointSet]) -> Result<f64> {
    if keypoint_sets.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut sum = 0.0;
    for set in keypoint_sets {
        let mirrored: Vec<Vec3> = set.points.iter().map(|&[x, y, z]| [-x, y, z]).collect();
        sum += chamfer_distance(&set.points, &mirrored)?;
    }
    Ok(sum / keypoint_sets.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;

    #[test]
    fn pck_examples() {
        let gt = KeypointAnnotation::complete(vec![[0.0; 3], [1.0, 0.0, 0.0]]);
        assert_eq!(pck(&gt.points, &gt, 0.05).unwrap(), 1.0);
        assert_eq!(pck(&[[0.01, 0.0, 0.0], [0.5, 0.0, 0.0]], &gt, 0.05).unwrap(), 0.5);
        let partial = KeypointAnnotation {
            points: gt.points.clone(),
            present: vec![true, false],
        };
        assert_eq!(pck(&[[0.0; 3], [9.0, 0.0, 0.0]], &partial, 0.05).unwrap(), 1.0);
    }

    #[test]
    fn pck_curve_is_monotone() {
        let mut rng = Rng::new(3);
        let gts: Vec<KeypointAnnotation> = (0..5)
            .map(|_| KeypointAnnotation::complete((0..6).map(|_| [rng.uniform(), rng.uniform(), rng.uniform()]).collect()))
            .collect();
        let preds: Vec<Vec<Vec3>> = gts
            .iter()
            .map(|g| g.points.iter().map(|p| vec3::add(*p, [rng.range(-0.1, 0.1), 0.0, 0.0])).collect())
            .collect();
        let curve = pck_curve(&preds, &gts, &[0.0, 0.02, 0.05, 0.08, 0.2]).unwrap();
        for w in curve.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
        assert_eq!(curve.last().unwrap().1, 1.0);
    }

    #[test]
    fn regressor_identity_and_constant() {
        let mut rng = Rng::new(1);
        let k = 2;
        let sets: Vec<KeypointSet> = (0..12)
            .map(|_| KeypointSet::from_flat(&(0..3 * k).map(|_| rng.range(-0.5, 0.5)).collect::<Vec<_>>()))
            .collect();
        let same: Vec<_> = sets.iter().map(|s| (s.clone(), KeypointAnnotation::complete(s.points.clone()))).collect();
        let reg = fit_keypoint_regressor(&same).unwrap();
        for (s, a) in &same {
            for (p, q) in reg.predict(s).unwrap().iter().zip(&a.points) {
                assert!(vec3::dist(*p, *q) < 1e-10);
            }
        }
        let constant: Vec<_> =
            sets.iter().map(|s| (s.clone(), KeypointAnnotation::complete(vec![[0.1, 0.2, 0.3]]))).collect();
        let reg = fit_keypoint_regressor(&constant).unwrap();
        assert!(reg.weights.iter().all(|w| w.abs() < 1e-12));
        for (b, e) in reg.bias.iter().zip([0.1, 0.2, 0.3]) {
            assert!((b - e).abs() < 1e-12);
        }
    }

    #[test]
    fn regressor_needs_enough_shapes() {
        let s = KeypointSet::from_flat(&[0.0; 6]);
        let rows = vec![(s, KeypointAnnotation::complete(vec![[0.0; 3]])); 7];
        assert!(matches!(fit_keypoint_regressor(&rows), Err(Error::InsufficientSamples { needed: 8, got: 7 })));
    }

    #[test]
    fn regressor_flags_rank_deficiency() {
        let rows: Vec<_> = (0..10)
            .map(|i| {
                let t = i as f64 * 0.1;
                (KeypointSet::from_flat(&[t, t, t, 0.0, 0.0, 0.0]), KeypointAnnotation::complete(vec![[t, 0.0, 0.0]]))
            })
            .collect();
        let reg = fit_keypoint_regressor(&rows).unwrap();
        assert!(reg.rank_deficient);
        let p = reg.predict(&KeypointSet::from_flat(&[0.5, 0.5, 0.5, 0.0, 0.0, 0.0])).unwrap();
        assert!((p[0][0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn part_correlation_extremes() {
        let labels = PartLabels {
            points: vec![[0.0; 3], [1.0, 0.0, 0.0]],
            labels: vec![0, 1],
        };
        let near = KeypointSet {
            points: vec![[0.01, 0.0, 0.0], [5.0, 5.0, 5.0]],
        };
        let r = part_correlation(&vec![near; 3], &vec![labels.clone(); 3], 0.05).unwrap();
        assert_eq!(r.per_keypoint, vec![1.0, 0.0]);
        assert_eq!(r.score, 0.5);
        let empty = PartLabels {
            points: vec![],
            labels: vec![],
        };
        let kp = KeypointSet { points: vec![[0.0; 3]] };
        assert!(part_correlation(&[kp], &[empty], 0.05).is_err());
    }

    #[test]
    fn symmetry_of_mirrored_set_is_zero() {
        let s = KeypointSet {
            points: vec![[0.2, 0.1, 0.0], [-0.2, 0.1, 0.0], [0.0, 0.3, 0.1]],
        };
        assert_eq!(mirror_symmetry(&[s]).unwrap(), 0.0);
        let lopsided = KeypointSet {
            points: vec![[0.2, 0.0, 0.0]],
        };
        assert!((mirror_symmetry(&[lopsided]).unwrap() - 2.0 * 0.16).abs() < 1e-15);
    }

    #[test]
    fn consistency_counts_modes() {
        let marks = vec![vec![[0.0; 3], [1.0, 0.0, 0.0]]; 4];
        let sets: Vec<KeypointSet> = [0.1, 0.2, 0.9, 0.3]
            .iter()
            .map(|&x| KeypointSet { points: vec![[x, 0.0, 0.0]] })
            .collect();
        let c = landmark_consistency(&sets, &marks).unwrap();
        assert_eq!(c.landmark, vec![0]);
        assert_eq!(c.frequency, vec![0.75]);
    }
}
