//! Closed reference meshes: icospheres, boxes, shells and a bumpy sphere.
//! All are outward-wound (positive signed volume).

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::mesh::TriangleMesh;
use crate::scalar::Real;

/// Geodesic sphere: a subdivided icosahedron with vertices on the sphere.
/// Level `l` has `10 * 4^l + 2` vertices.
pub fn icosphere<T: Real>(radius: T, subdivisions: u32, center: Point3<T>) -> TriangleMesh<T> {
    let (dirs, tris) = unit_icosphere(subdivisions);
    let vertices = dirs
        .iter()
        .map(|d| center + d.map(T::lit) * radius)
        .collect();
    TriangleMesh::new(vertices, tris).expect("icosphere indices are valid")
}

fn unit_icosphere(subdivisions: u32) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Vector3::from(*v).normalize())
    .collect();
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push((verts[a] + verts[b]).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for [a, b, c] in tris {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    (verts, tris)
}

/// Axis-aligned box with 8 corners and 12 triangles.
pub fn box_mesh<T: Real>(min: Point3<T>, max: Point3<T>) -> TriangleMesh<T> {
    let c = |x: bool, y: bool, z: bool| {
        Point3::new(
            if x { max.x } else { min.x },
            if y { max.y } else { min.y },
            if z { max.z } else { min.z },
        )
    };
    let vertices = vec![
        c(false, false, false),
        c(true, false, false),
        c(true, true, false),
        c(false, true, false),
        c(false, false, true),
        c(true, false, true),
        c(true, true, true),
        c(false, true, true),
    ];
    let triangles = vec![
        [0, 3, 2], [0, 2, 1], // z-
        [4, 5, 6], [4, 6, 7], // z+
        [0, 1, 5], [0, 5, 4], // y-
        [3, 7, 6], [3, 6, 2], // y+
        [0, 4, 7], [0, 7, 3], // x-
        [1, 2, 6], [1, 6, 5], // x+
    ];
    TriangleMesh::new(vertices, triangles).expect("box indices are valid")
}

/// Hollow sphere: outer icosphere plus an inward-wound inner icosphere.
pub fn shell_mesh<T: Real>(
    outer_radius: T,
    wall: T,
    subdivisions: u32,
    center: Point3<T>,
) -> TriangleMesh<T> {
    let outer = icosphere(outer_radius, subdivisions, center);
    let inner = icosphere(outer_radius - wall, subdivisions, center).flipped();
    outer.merged(&inner)
}

/// Icosphere with a handful of smooth, irregularly placed radial bumps. Has no
/// rotational symmetry, which makes it a useful registration fixture.
pub fn bumpy_sphere<T: Real>(radius: T, subdivisions: u32, center: Point3<T>) -> TriangleMesh<T> {
    // (direction, relative height, angular width in radians)
    const BUMPS: [([f64; 3], f64, f64); 5] = [
        ([1.0, 0.2, 0.1], 0.25, 0.35),
        ([-0.3, 1.0, 0.4], 0.15, 0.5),
        ([0.1, -0.5, 1.0], -0.12, 0.45),
        ([-0.7, -0.6, -0.2], 0.2, 0.3),
        ([0.4, 0.3, -1.0], 0.1, 0.6),
    ];
    let bumps: Vec<(Vector3<f64>, f64, f64)> = BUMPS
        .iter()
        .map(|(d, h, w)| (Vector3::from(*d).normalize(), *h, *w))
        .collect();
    let (dirs, tris) = unit_icosphere(subdivisions);
    let vertices = dirs
        .iter()
        .map(|d| {
            let scale = 1.0
                + bumps
                    .iter()
                    .map(|(b, h, w)| {
                        let ang = d.dot(b).clamp(-1.0, 1.0).acos();
                        h * (-(ang * ang) / (w * w)).exp()
                    })
                    .sum::<f64>();
            center + d.map(T::lit) * (radius * T::lit(scale))
        })
        .collect();
    TriangleMesh::new(vertices, tris).expect("icosphere indices are valid")
}
