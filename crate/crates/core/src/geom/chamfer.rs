//! Symmetric squared-distance Chamfer:
//! `mean_a min_b |a-b|^2 + mean_b min_a |b-a|^2`.

use super::vec3;
use crate::{Error, Result, Vec3};

/// Gradients of the Chamfer distance with respect to both inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ChamferGrad {
    pub value: f64,
    pub grad_a: Vec<Vec3>,
    pub grad_b: Vec<Vec3>,
}

fn nearest(p: Vec3, set: &[Vec3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, q) in set.iter().enumerate() {
        let d = vec3::dist2(p, *q);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn chamfer_distance(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let forward: f64 = a.iter().map(|&p| nearest(p, b).1).sum::<f64>() * (1.0 / a.len() as f64);
    let reverse: f64 = b.iter().map(|&p| nearest(p, a).1).sum::<f64>() * (1.0 / b.len() as f64);
    Ok(forward + reverse)
}

/// Value and gradient, holding nearest-neighbour assignments fixed at the
/// evaluation point.
pub fn chamfer_with_grad(a: &[Vec3], b: &[Vec3]) -> Result<ChamferGrad> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut grad_a = vec![[0.0; 3]; a.len()];
    let mut grad_b = vec![[0.0; 3]; b.len()];
    let mut value = 0.0;
    let accumulate = |from: &[Vec3], to: &[Vec3], g_from: &mut [Vec3], g_to: &mut [Vec3]| {
        let w = 1.0 / from.len() as f64;
        let mut sum = 0.0;
        for (i, &p) in from.iter().enumerate() {
            let (j, d) = nearest(p, to);
            sum += d;
            let diff = vec3::scale(vec3::sub(p, to[j]), 2.0 * w);
            g_from[i] = vec3::add(g_from[i], diff);
            g_to[j] = vec3::sub(g_to[j], diff);
        }
        sum * w
    };
    value += accumulate(a, b, &mut grad_a, &mut grad_b);
    value += accumulate(b, a, &mut grad_b, &mut grad_a);
    Ok(ChamferGrad {
        value,
        grad_a,
        grad_b,
    })
}
