use nalgebra::Point3;
use rayon::prelude::*;

use super::mesh::TriangleMesh;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Sorted, de-duplicated 1-ring neighbours of every vertex.
pub fn vertex_neighbors<T: Real>(mesh: &TriangleMesh<T>) -> Vec<Vec<usize>> {
    let mut rings = vec![Vec::new(); mesh.vertices().len()];
    for t in mesh.triangles() {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            rings[a].push(b);
            rings[b].push(a);
        }
    }
    for r in &mut rings {
        r.sort_unstable();
        r.dedup();
    }
    rings
}

/// Umbrella-operator smoothing: each iteration moves every vertex by
/// `lambda * (mean(neighbours) - v)` using the previous iteration's positions.
/// Vertices without neighbours stay put.
pub fn laplacian_smooth<T: Real>(
    mesh: &TriangleMesh<T>,
    lambda: T,
    iterations: usize,
) -> Result<TriangleMesh<T>> {
    if !(lambda > T::zero() && lambda <= T::one()) {
        return Err(Error::InvalidParameter(format!("lambda must lie in (0, 1], got {}", lambda)));
    }
    if mesh.is_empty() {
        return Err(Error::InvalidMesh("smoothing needs at least one triangle".into()));
    }
    if iterations == 0 {
        return Ok(mesh.clone());
    }
    let rings = vertex_neighbors(mesh);
    let mut current: Vec<Point3<T>> = mesh.vertices().to_vec();
    for _ in 0..iterations {
        current = rings
            .par_iter()
            .zip(current.par_iter())
            .map(|(ring, v)| {
                if ring.is_empty() {
                    return *v;
                }
                let sum = ring.iter().fold(nalgebra::Vector3::zeros(), |acc, &n| acc + current[n].coords);
                let mean = sum / T::from_count(ring.len());
                v + (mean - v.coords) * lambda
            })
            .collect();
    }
    Ok(mesh.with_vertices(current))
}
