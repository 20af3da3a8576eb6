use super::{vec3, Mesh, PointCloud};
use crate::{Error, Result, Rng};

/// Area-weighted uniform surface sampling.
pub fn sample_surface(mesh: &Mesh, n: usize, rng: &mut Rng) -> Result<PointCloud> {
    sample_surface_faces(mesh, n, rng).map(|(cloud, _)| cloud)
}

/// [`sample_surface`] that also reports the face each point came from.
pub fn sample_surface_faces(mesh: &Mesh, n: usize, rng: &mut Rng) -> Result<(PointCloud, Vec<usize>)> {
    if n == 0 {
        return Err(Error::EmptyCloud);
    }
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.triangle_area(f);
        cdf.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::ZeroArea);
    }
    let mut points = Vec::with_capacity(n);
    let mut faces = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.uniform() * total;
        // first face whose cumulative area exceeds u; zero-area faces never win
        let face = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        let [a, b, c] = mesh.triangle(face);
        let r1 = rng.uniform().sqrt();
        let r2 = rng.uniform();
        let p = vec3::add(
            vec3::add(vec3::scale(a, 1.0 - r1), vec3::scale(b, r1 * (1.0 - r2))),
            vec3::scale(c, r1 * r2),
        );
        points.push(p);
        faces.push(face);
    }
    Ok((PointCloud::new(points)?, faces))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_lie_on_single_triangle_plane() {
        let m = Mesh::new(
            vec![[0.1, 0.2, 0.3], [0.9, -0.1, 0.4], [0.3, 0.8, -0.2]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let [a, b, c] = m.triangle(0);
        let nrm = vec3::cross(vec3::sub(b, a), vec3::sub(c, a));
        let nrm = vec3::scale(nrm, 1.0 / vec3::norm(nrm));
        let cloud = sample_surface(&m, 500, &mut Rng::new(3)).unwrap();
        for p in &cloud.points {
            assert!(vec3::dot(vec3::sub(*p, a), nrm).abs() < 1e-6);
            assert!(m.distance_to_surface(*p) < 1e-6);
        }
    }

    #[test]
    fn area_proportional_counts() {
        // Two disjoint triangles with areas 1 and 3.
        let s1 = 2f64.sqrt();
        let s3 = 6f64.sqrt();
        let m = Mesh::new(
            vec![
                [0.0, 0.0, 0.0], [s1, 0.0, 0.0], [0.0, s1, 0.0],
                [10.0, 0.0, 0.0], [10.0 + s3, 0.0, 0.0], [10.0, s3, 0.0],
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        assert!((m.triangle_area(0) - 1.0).abs() < 1e-12);
        assert!((m.triangle_area(1) - 3.0).abs() < 1e-12);
        let n = 4000;
        let cloud = sample_surface(&m, n, &mut Rng::new(11)).unwrap();
        let first = cloud.points.iter().filter(|p| p[0] < 5.0).count() as f64;
        // binomial(n, 1/4): mean 1000, sigma sqrt(n p q) = sqrt(750)
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        assert!((first - 1000.0).abs() < 3.0 * sigma, "count {first}");
    }

    #[test]
    fn deterministic_for_seed() {
        let m = Mesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        let a = sample_surface(&m, 64, &mut Rng::new(5)).unwrap();
        let b = sample_surface(&m, 64, &mut Rng::new(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_area_rejected() {
        let m = Mesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(sample_surface(&m, 4, &mut Rng::new(0)), Err(Error::ZeroArea)));
    }
}
