//! PCA prior over flattened keypoint coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::deformer::KeypointSet;
use crate::{Error, Result, Vec3};

/// Ridge weight for edit synchronization.
pub const SYNC_RIDGE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaPrior {
    pub num_keypoints: usize,
    /// Length `3K`.
    pub mean: Vec<f64>,
    /// `n_basis` orthonormal rows of length `3K`, by decreasing singular value.
    pub basis: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    /// Fewer than `n_basis` directions carried variance; the trailing
    /// directions are an arbitrary orthonormal completion.
    pub rank_deficient: bool,
    /// Number of keypoint sets fitted.
    pub samples: usize,
    /// Checksum of the checkpoint whose keypoints were fitted, if any.
    #[serde(default)]
    pub model_checksum: Option<String>,
}

impl PcaPrior {
    pub fn n_basis(&self) -> usize {
        self.basis.len()
    }

    /// Per-basis standard deviation of the fitted keypoint sets.
    pub fn std_devs(&self) -> Vec<f64> {
        let dof = (self.samples.max(2) - 1) as f64;
        self.singular_values.iter().map(|s| s / dof.sqrt()).collect()
    }

    /// Basis coordinates of `keypoints - mean`.
    pub fn coefficients(&self, keypoints: &KeypointSet) -> Result<Vec<f64>> {
        let x = self.check(keypoints)?;
        Ok(self
            .basis
            .iter()
            .map(|b| b.iter().zip(&x).zip(&self.mean).map(|((b, x), m)| b * (x - m)).sum())
            .collect())
    }

    pub fn reconstruct(&self, coefficients: &[f64]) -> Result<KeypointSet> {
        if coefficients.len() != self.n_basis() {
            return Err(Error::Dimension(format!(
                "prior has {} bases, got {} coefficients",
                self.n_basis(),
                coefficients.len()
            )));
        }
        let mut x = self.mean.clone();
        for (z, b) in coefficients.iter().zip(&self.basis) {
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi += z * bi;
            }
        }
        Ok(KeypointSet::from_flat(&x))
    }

    /// Orthogonal projection onto the prior's affine subspace.
    pub fn project(&self, keypoints: &KeypointSet) -> Result<KeypointSet> {
        self.reconstruct(&self.coefficients(keypoints)?)
    }

    fn check(&self, keypoints: &KeypointSet) -> Result<Vec<f64>> {
        if keypoints.len() != self.num_keypoints {
            return Err(Error::Dimension(format!(
                "prior has {} keypoints, got {}",
                self.num_keypoints,
                keypoints.len()
            )));
        }
        Ok(keypoints.flatten())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("prior serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        let dim = 3 * p.num_keypoints;
        if p.mean.len() != dim
            || p.basis.iter().any(|b| b.len() != dim)
            || p.singular_values.len() != p.basis.len()
        {
            return Err(Error::Dimension("prior arrays disagree with num_keypoints".into()));
        }
        Ok(p)
    }
}

/// Mean-centred PCA via SVD of the stacked `S x 3K` keypoint matrix.
pub fn fit_pca(sets: &[KeypointSet], n_basis: usize) -> Result<PcaPrior> {
    if sets.len() < n_basis + 1 {
        return Err(Error::InsufficientSamples {
            needed: n_basis + 1,
            got: sets.len(),
        });
    }
    let k = sets[0].len();
    if k == 0 || sets.iter().any(|s| s.len() != k) {
        return Err(Error::Dimension("keypoint sets must share a nonzero K".into()));
    }
    let dim = 3 * k;
    if n_basis > dim {
        return Err(Error::Config(format!("{n_basis} bases exceed dimension {dim}")));
    }
    let s = sets.len();
    let mut mean = vec![0.0; dim];
    for set in sets {
        for (m, x) in mean.iter_mut().zip(set.flatten()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= s as f64);
    let centred = DMatrix::from_fn(s, dim, |r, c| {
        let p = sets[r].points[c / 3][c % 3];
        p - mean[c]
    });
    let svd = centred.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let scale = sets.iter().flat_map(|k| k.flatten()).fold(0.0f64, |a, x| a.max(x.abs()));
    let tol = 1e-10 * top.max(scale) * (s.max(dim) as f64).sqrt() + f64::MIN_POSITIVE;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_basis);
    let mut singular_values = Vec::with_capacity(n_basis);
    for &i in order.iter().take(n_basis) {
        let sv = svd.singular_values[i];
        if sv <= tol {
            break;
        }
        basis.push(v_t.row(i).iter().copied().collect());
        singular_values.push(sv);
    }
    let rank_deficient = basis.len() < n_basis;
    // Complete with standard-basis Gram-Schmidt so rows stay orthonormal.
    let mut e = 0;
    while basis.len() < n_basis {
        let mut v = vec![0.0; dim];
        v[e] = 1.0;
        e += 1;
        for b in &basis {
            let d: f64 = b.iter().zip(&v).map(|(a, c)| a * c).sum();
            v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= d * bi);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
            singular_values.push(0.0);
        }
    }
    for b in &mut basis {
        let lead = b.iter().cloned().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            b.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(PcaPrior {
        num_keypoints: k,
        mean,
        basis,
        singular_values,
        rank_deficient,
        samples: s,
        model_checksum: None,
    })
}

/// Keypoints following the prior through the edited positions. Solves the
/// ridge problem over the edited coordinates, then writes the edits exactly.
pub fn synchronize(prior: &PcaPrior, edits: &[(usize, Vec3)]) -> Result<KeypointSet> {
    if edits.is_empty() {
        return Err(Error::Config("synchronization needs at least one edit".into()));
    }
    let k = prior.num_keypoints;
    if let Some((i, _)) = edits.iter().find(|(i, _)| *i >= k) {
        return Err(Error::Dimension(format!("keypoint {i} out of range for K = {k}")));
    }
    let nb = prior.n_basis();
    let rows = 3 * edits.len();
    let a = DMatrix::from_fn(rows, nb, |r, c| prior.basis[c][3 * edits[r / 3].0 + r % 3]);
    let b = DVector::from_fn(rows, |r, _| {
        let (i, p) = edits[r / 3];
        p[r % 3] - prior.mean[3 * i + r % 3]
    });
    let mut normal = a.transpose() * &a;
    for d in 0..nb {
        normal[(d, d)] += SYNC_RIDGE;
    }
    let rhs = a.transpose() * b;
    let z = normal
        .cholesky()
        .ok_or_else(|| Error::Dimension("ridge system is not positive definite".into()))?
        .solve(&rhs);
    let mut out = prior.reconstruct(z.as_slice())?;
    for &(i, p) in edits {
        out.points[i] = p;
    }
    Ok(out)
}

/// `mean + coefficients^T basis`.
pub fn sample_prior(prior: &PcaPrior, coefficients: &[f64]) -> Result<KeypointSet> {
    prior.reconstruct(coefficients)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;

    fn random_sets(rng: &mut Rng, n: usize, k: usize) -> Vec<KeypointSet> {
        (0..n)
            .map(|_| KeypointSet {
                points: (0..k).map(|_| [rng.range(-0.5, 0.5), rng.range(-0.5, 0.5), rng.range(-0.5, 0.5)]).collect(),
            })
            .collect()
    }

    #[test]
    fn identical_sets_have_zero_spectrum() {
        let s = KeypointSet {
            points: vec![[0.1, 0.2, 0.3], [0.0, -0.1, 0.4], [0.3, 0.3, 0.3]],
        };
        let prior = fit_pca(&vec![s.clone(); 10], 8).unwrap();
        for (m, x) in prior.mean.iter().zip(s.flatten()) {
            assert!((m - x).abs() < 1e-15);
        }
        assert!(prior.singular_values.iter().all(|v| *v == 0.0));
        assert!(prior.rank_deficient);
        assert_gram_identity(&prior);
    }

    fn assert_gram_identity(p: &PcaPrior) {
        for (i, a) in p.basis.iter().enumerate() {
            for (j, b) in p.basis.iter().enumerate() {
                let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-8, "gram[{i}][{j}] = {d}");
            }
        }
    }

    #[test]
    fn rank_one_data_recovers_direction() {
        let k = 3;
        let mut rng = Rng::new(5);
        let base: Vec<f64> = (0..3 * k).map(|_| rng.range(-0.3, 0.3)).collect();
        let mut dir: Vec<f64> = (0..3 * k).map(|_| rng.range(-1.0, 1.0)).collect();
        let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|x| *x /= n);
        let sets: Vec<KeypointSet> = (0..12)
            .map(|i| {
                let t = i as f64 / 11.0 - 0.5;
                KeypointSet::from_flat(&base.iter().zip(&dir).map(|(b, d)| b + t * d).collect::<Vec<_>>())
            })
            .collect();
        let prior = fit_pca(&sets, 8).unwrap();
        assert!(prior.singular_values[0] > 0.1);
        assert!(prior.singular_values[1..].iter().all(|v| *v < 1e-9));
        let cos: f64 = prior.basis[0].iter().zip(&dir).map(|(a, b)| a * b).sum();
        assert!((cos.abs() - 1.0).abs() < 1e-12);
        assert_gram_identity(&prior);
    }

    #[test]
    fn largest_component_is_positive() {
        let sets = random_sets(&mut Rng::new(2), 15, 4);
        let prior = fit_pca(&sets, 8).unwrap();
        for b in &prior.basis {
            let lead = b.iter().cloned().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(lead > 0.0);
        }
        assert_gram_identity(&prior);
    }

    #[test]
    fn too_few_samples() {
        let sets = random_sets(&mut Rng::new(1), 8, 4);
        assert!(matches!(fit_pca(&sets, 8), Err(Error::InsufficientSamples { needed: 9, got: 8 })));
    }

    #[test]
    fn zero_coefficients_give_mean() {
        let prior = fit_pca(&random_sets(&mut Rng::new(3), 12, 4), 8).unwrap();
        assert_eq!(sample_prior(&prior, &[0.0; 8]).unwrap().flatten(), prior.mean);
        let plus = sample_prior(&prior, &[0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap().flatten();
        let minus = sample_prior(&prior, &[-0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap().flatten();
        for ((p, m), c) in plus.iter().zip(&minus).zip(&prior.mean) {
            assert!(((p + m) / 2.0 - c).abs() < 1e-15);
        }
        assert!(sample_prior(&prior, &[0.0; 3]).is_err());
    }

    #[test]
    fn edit_at_mean_position_returns_mean() {
        let prior = fit_pca(&random_sets(&mut Rng::new(4), 12, 4), 8).unwrap();
        let mean = KeypointSet::from_flat(&prior.mean);
        let out = synchronize(&prior, &[(2, mean.points[2])]).unwrap();
        for (a, b) in out.flatten().iter().zip(&prior.mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn all_keypoints_edited_returns_edits() {
        let sets = random_sets(&mut Rng::new(6), 12, 4);
        let prior = fit_pca(&sets, 8).unwrap();
        let target = random_sets(&mut Rng::new(60), 1, 4).remove(0);
        let edits: Vec<(usize, Vec3)> = target.points.iter().copied().enumerate().collect();
        assert_eq!(synchronize(&prior, &edits).unwrap(), target);
    }

    #[test]
    fn bad_edit_index() {
        let prior = fit_pca(&random_sets(&mut Rng::new(7), 12, 4), 8).unwrap();
        assert!(synchronize(&prior, &[(4, [0.0; 3])]).is_err());
        assert!(synchronize(&prior, &[]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let prior = fit_pca(&random_sets(&mut Rng::new(8), 12, 4), 8).unwrap();
        assert_eq!(PcaPrior::from_json(&prior.to_json()).unwrap(), prior);
    }
}
