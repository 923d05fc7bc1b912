//! Point-in-polyhedron rasterization by ray parity.
//!
//! For each (y, z) row of voxel centers a ray is cast along +x. A triangle is hit
//! when the row point lies inside its projection onto the yz-plane. That test is
//! made exact-consistent with a symbolic perturbation of the row point to
//! `(y + e, z + e^2)` for infinitesimal `e`, and edge orientations are always
//! evaluated from the lexicographically smaller endpoint. A row point on an edge
//! shared by two triangles is therefore counted in exactly one of them, and
//! triangles whose projection is degenerate are never hit. A voxel center is
//! inside when an odd number of hits lie strictly beyond it in +x (the ray origin
//! is perturbed toward -x, so a hit exactly at the center counts).

use std::cmp::Ordering;

use nalgebra::Point3;

use super::{BinaryMask, GridGeometry};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::surface::TriangleMesh;

#[derive(Clone, Copy)]
struct P2<T> {
    y: T,
    z: T,
}

fn lex_less<T: Real>(a: &P2<T>, b: &P2<T>) -> bool {
    a.y < b.y || (a.y == b.y && a.z < b.z)
}

/// Sign of the orientation of `p` relative to the directed edge `a -> b`, with
/// symbolic perturbation. Returns 0 only for a zero-length edge.
fn orient<T: Real>(a: &P2<T>, b: &P2<T>, p: &P2<T>) -> i8 {
    if lex_less(b, a) {
        return -orient(b, a, p);
    }
    let dy = b.y - a.y;
    let dz = b.z - a.z;
    let det = dy * (p.z - a.z) - dz * (p.y - a.y);
    if det > T::zero() {
        1
    } else if det < T::zero() {
        -1
    } else if dz != T::zero() {
        // d/de of det at e = 0 is -dz
        if dz > T::zero() { -1 } else { 1 }
    } else if dy > T::zero() {
        1
    } else if dy < T::zero() {
        -1
    } else {
        0
    }
}

fn raw_orient<T: Real>(a: &P2<T>, b: &P2<T>, p: &P2<T>) -> T {
    (b.y - a.y) * (p.z - a.z) - (b.z - a.z) * (p.y - a.y)
}

/// Rasterize a closed mesh onto `geometry`: a voxel is foreground iff its center
/// is inside the surface.
pub fn voxelize_mesh<T: Real>(
    mesh: &TriangleMesh<T>,
    geometry: &GridGeometry<T>,
) -> Result<BinaryMask<T>> {
    geometry.validate()?;
    if mesh.is_empty() {
        return Err(Error::InvalidMesh("mesh has no triangles".into()));
    }
    let bad_edges = mesh
        .edge_multiplicities()
        .iter()
        .filter(|(_, c)| *c != 2)
        .count();
    if bad_edges > 0 {
        return Err(Error::NotWatertight { boundary_edges: bad_edges });
    }
    let (lo, hi) = mesh.bounds().expect("non-empty mesh");
    let (glo, ghi) = geometry.world_bounds();
    if (0..3).any(|a| lo[a] < glo[a] || hi[a] > ghi[a]) {
        return Err(Error::MeshOutsideGrid(format!(
            "mesh bounds [{:?}, {:?}] not within grid bounds [{:?}, {:?}]",
            lo.coords.as_slice(),
            hi.coords.as_slice(),
            glo.coords.as_slice(),
            ghi.coords.as_slice()
        )));
    }

    let [nx, ny, nz] = geometry.dims;
    let [_, sy, sz] = geometry.spacing;
    let [_, oy, oz] = geometry.origin;
    let row_y = |j: usize| oy + T::from_count(j) * sy;
    let row_z = |k: usize| oz + T::from_count(k) * sz;
    let mut hits: Vec<Vec<T>> = vec![Vec::new(); ny * nz];

    let verts = mesh.vertices();
    for tri in mesh.triangles() {
        let v: [Point3<T>; 3] = tri.map(|i| verts[i]);
        let q = v.map(|p| P2 { y: p.y, z: p.z });
        let area2 = raw_orient(&q[0], &q[1], &q[2]);
        if area2 == T::zero() {
            continue;
        }
        let (ymin, ymax) = (v[0].y.min(v[1].y).min(v[2].y), v[0].y.max(v[1].y).max(v[2].y));
        let (zmin, zmax) = (v[0].z.min(v[1].z).min(v[2].z), v[0].z.max(v[1].z).max(v[2].z));
        let Some((j0, j1)) = index_span(ymin, ymax, oy, sy, ny) else { continue };
        let Some((k0, k1)) = index_span(zmin, zmax, oz, sz, nz) else { continue };
        for k in k0..=k1 {
            for j in j0..=j1 {
                let p = P2 { y: row_y(j), z: row_z(k) };
                let s0 = orient(&q[1], &q[2], &p);
                let s1 = orient(&q[2], &q[0], &p);
                let s2 = orient(&q[0], &q[1], &p);
                if s0 == 0 || s0 != s1 || s1 != s2 {
                    continue;
                }
                // barycentric interpolation of x at the row point
                let w0 = raw_orient(&q[1], &q[2], &p) / area2;
                let w1 = raw_orient(&q[2], &q[0], &p) / area2;
                let w2 = T::one() - w0 - w1;
                hits[j + ny * k].push(w0 * v[0].x + w1 * v[1].x + w2 * v[2].x);
            }
        }
    }

    let mut bits = vec![false; geometry.len()];
    for (row, xs) in hits.iter_mut().enumerate() {
        if xs.is_empty() {
            continue;
        }
        xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        // hits at or beyond x_i, counted from the far end
        let mut first_ge = 0usize;
        let base = row * nx;
        for i in 0..nx {
            let x = geometry.origin[0] + T::from_count(i) * geometry.spacing[0];
            while first_ge < xs.len() && xs[first_ge] < x {
                first_ge += 1;
            }
            bits[base + i] = (xs.len() - first_ge) % 2 == 1;
        }
    }
    BinaryMask::new(*geometry, bits)
}

/// Inclusive range of lattice indices whose coordinate lies in `[lo, hi]`.
fn index_span<T: Real>(lo: T, hi: T, origin: T, spacing: T, n: usize) -> Option<(usize, usize)> {
    let a = ((lo - origin) / spacing).ceil().max(T::zero());
    let b = ((hi - origin) / spacing).floor().min(T::from_count(n - 1));
    if a > b {
        return None;
    }
    // widen by one on each side; the orientation test decides membership exactly
    let a = (a.as_f64() as usize).saturating_sub(1);
    let b = ((b.as_f64() as usize) + 1).min(n - 1);
    Some((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::primitives::{box_mesh, icosphere, shell_mesh};
    use nalgebra::Vector3;
    use std::f64::consts::PI;

    fn grid(n: usize, s: f64) -> GridGeometry<f64> {
        GridGeometry::centered([n; 3], s).unwrap()
    }

    #[test]
    fn icosphere_volume_matches_analytic() {
        let g = grid(64, 0.25);
        let m = icosphere(6.0, 5, g.center());
        let mask = voxelize_mesh(&m, &g).unwrap();
        let analytic = 4.0 / 3.0 * PI * 216.0 / g.voxel_volume();
        let n = mask.count() as f64;
        assert!((n - analytic).abs() / analytic < 0.02, "{n} vs {analytic}");
    }

    #[test]
    fn box_covers_exact_voxel_block() {
        let g = GridGeometry::new([20, 16, 12], [0.5, 0.25, 1.0], [1.0, -2.0, 0.0]).unwrap();
        // faces halfway between centers: x covers i = 3..=9, y j = 2..=11, z k = 4..=6
        let lo = Point3::new(1.0 + 2.5 * 0.5, -2.0 + 1.5 * 0.25, 3.5);
        let hi = Point3::new(1.0 + 9.5 * 0.5, -2.0 + 11.5 * 0.25, 6.5);
        let mask = voxelize_mesh(&box_mesh(lo, hi), &g).unwrap();
        assert_eq!(mask.count(), 7 * 10 * 3);
        for idx in mask.foreground_indices() {
            let [i, j, k] = g.decode(idx);
            assert!((3..=9).contains(&i) && (2..=11).contains(&j) && (4..=6).contains(&k));
        }
    }

    #[test]
    fn box_with_faces_through_centers_is_deterministic() {
        let g = GridGeometry::new([10, 10, 10], [1.0; 3], [0.0; 3]).unwrap();
        let m = box_mesh(Point3::new(2.0, 2.0, 2.0), Point3::new(6.0, 6.0, 6.0));
        let a = voxelize_mesh(&m, &g).unwrap();
        let b = voxelize_mesh(&m, &g).unwrap();
        assert_eq!(a, b);
        // every row strictly inside the square section is filled once on each face
        assert!(a.count() >= 3 * 3 * 3 && a.count() <= 5 * 5 * 5);
        // parity is consistent per row: a run, never isolated voxels
        for k in 0..10 {
            for j in 0..10 {
                let row: Vec<bool> = (0..10).map(|i| a.get([i, j, k])).collect();
                let changes = row.windows(2).filter(|w| w[0] != w[1]).count();
                assert!(changes == 0 || changes == 2);
            }
        }
    }

    #[test]
    fn translation_by_one_voxel_shifts_mask() {
        let g = grid(40, 0.3);
        let m = icosphere(3.7, 3, g.center() + Vector3::new(0.013, -0.021, 0.007));
        let base = voxelize_mesh(&m, &g).unwrap();
        for (axis, off) in [(0usize, [1isize, 0, 0]), (1, [0, 1, 0]), (2, [0, 0, 1])] {
            let mut d = Vector3::zeros();
            d[axis] = 0.3;
            let moved = voxelize_mesh(&m.translated(&d), &g).unwrap();
            assert_eq!(moved, base.shifted(off), "axis {axis}");
        }
    }

    #[test]
    fn shrinking_sphere_never_adds_voxels() {
        let g = grid(36, 0.3);
        let mut prev: Option<BinaryMask<f64>> = None;
        for r in [4.5, 4.2, 3.9, 3.1, 2.0] {
            let m = voxelize_mesh(&icosphere(r, 3, g.center()), &g).unwrap();
            if let Some(p) = &prev {
                assert!(m.bits().iter().zip(p.bits()).all(|(&a, &b)| !a || b));
            }
            prev = Some(m);
        }
    }

    #[test]
    fn shell_mesh_leaves_cavity_empty() {
        let g = grid(50, 0.25);
        let m = shell_mesh(5.5, 1.5, 4, g.center());
        let mask = voxelize_mesh(&m, &g).unwrap();
        assert!(!mask.get([25, 25, 25]));
        let analytic = 4.0 / 3.0 * PI * (5.5f64.powi(3) - 4.0f64.powi(3)) / g.voxel_volume();
        assert!((mask.count() as f64 - analytic).abs() / analytic < 0.03);
    }

    #[test]
    fn open_mesh_reports_boundary_edges() {
        let g = grid(10, 1.0);
        let m = TriangleMesh::new(
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        match voxelize_mesh(&m, &g) {
            Err(Error::NotWatertight { boundary_edges }) => assert_eq!(boundary_edges, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mesh_outside_grid_rejected() {
        let g = grid(10, 1.0);
        let m = icosphere(3.0, 1, Point3::new(4.0, 0.0, 0.0));
        assert!(matches!(voxelize_mesh(&m, &g), Err(Error::MeshOutsideGrid(_))));
    }

    #[test]
    fn symbolic_perturbation_is_antisymmetric() {
        let a = P2 { y: 0.0, z: 0.0 };
        let b = P2 { y: 1.0, z: 2.0 };
        let on = P2 { y: 0.5, z: 1.0 };
        assert_eq!(orient(&a, &b, &on), -orient(&b, &a, &on));
        assert_ne!(orient(&a, &b, &on), 0);
        let h = P2 { y: 3.0, z: 0.0 };
        let on_h = P2 { y: 2.0, z: 0.0 };
        assert_eq!(orient(&a, &h, &on_h), -orient(&h, &a, &on_h));
    }
}
