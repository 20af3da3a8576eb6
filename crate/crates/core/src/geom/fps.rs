use super::{vec3, PointCloud};
use crate::{Error, Result, Rng, Vec3};

/// Greedy max-min selection from a given start index. Ties go to the lowest index.
pub fn farthest_point_indices(points: &[Vec3], j: usize, start: usize) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if j == 0 || j > points.len() {
        return Err(Error::TooManySamples {
            requested: j,
            available: points.len(),
        });
    }
    if start >= points.len() {
        return Err(Error::Dimension(format!(
            "start index {start} outside cloud of {}",
            points.len()
        )));
    }
    let mut chosen = Vec::with_capacity(j);
    let mut min_d = vec![f64::INFINITY; points.len()];
    let mut current = start;
    for _ in 0..j {
        chosen.push(current);
        let c = points[current];
        let mut next = 0;
        let mut best = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            let d = vec3::dist2(*p, c);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if min_d[i] > best {
                best = min_d[i];
                next = i;
            }
        }
        current = next;
    }
    Ok(chosen)
}

pub fn farthest_point_sample_from(cloud: &PointCloud, j: usize, start: usize) -> Result<PointCloud> {
    let idx = farthest_point_indices(&cloud.points, j, start)?;
    Ok(PointCloud {
        points: idx.into_iter().map(|i| cloud.points[i]).collect(),
    })
}

/// Farthest point sampling with a uniformly random first point.
pub fn farthest_point_sample(cloud: &PointCloud, j: usize, rng: &mut Rng) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let start = rng.below(cloud.len());
    farthest_point_sample_from(cloud, j, start)
}
