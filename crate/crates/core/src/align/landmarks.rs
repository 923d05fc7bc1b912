use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use serde::Serialize;

use super::kabsch::kabsch;
use super::transform::RigidTransform;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::BinaryMask;

/// Relative eigenvalue gap below which principal axes are considered tied.
pub const ISOTROPY_GAP: f64 = 1e-6;

/// Extremal points of a foreground set along its principal axes.
///
/// `points[2 a]` and `points[2 a + 1]` are the foreground centers with the
/// smallest and largest projection on `axes[a]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandmarkSet<T: Real> {
    pub points: Vec<Point3<T>>,
    pub axes: [Vector3<T>; 3],
    pub eigenvalues: [T; 3],
    pub centroid: Point3<T>,
    /// Set when two eigenvalues tied and the grid axes were used instead.
    pub isotropic: bool,
}

/// Principal-axis landmarks of a mask's foreground voxel centers.
///
/// Axes are sorted by descending variance. Each of the first two is signed so
/// that its largest-magnitude component is positive (first such component on
/// ties) and the third is their cross product. When any adjacent eigenvalue
/// gap is below [`ISOTROPY_GAP`] relative to the largest eigenvalue, the grid
/// axes are used. Among points tied for an extreme projection, the one closest
/// to the axis line wins, then the lowest voxel index.
pub fn pca_landmarks<T: Real>(mask: &BinaryMask<T>) -> Result<LandmarkSet<T>> {
    let g = mask.geometry();
    let fg: Vec<(usize, Point3<T>)> = mask.foreground_indices().map(|i| (i, g.world(g.decode(i)))).collect();
    if fg.is_empty() {
        return Err(Error::RankDeficient { rank: 0 });
    }
    let n = T::from_count(fg.len());
    let centroid = Point3::from(fg.iter().fold(Vector3::zeros(), |a, (_, p)| a + p.coords) / n);
    let cov = fg.iter().fold(Matrix3::zeros(), |a, (_, p)| {
        let d = p - centroid;
        a + d * d.transpose()
    }) / n;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite covariance"));
    let values = order.map(|i| eig.eigenvalues[i]);
    let top = values[0];
    let rank = if top > T::zero() { values.iter().filter(|&&v| v > top * T::lit(1e-9)).count() } else { 0 };
    if rank < 3 {
        return Err(Error::RankDeficient { rank });
    }

    let gap = T::lit(ISOTROPY_GAP) * top;
    let isotropic = values[0] - values[1] < gap || values[1] - values[2] < gap;
    let axes = if isotropic {
        log::info!("pca landmarks: eigenvalues {:?} tie, using grid axes", values.map(|v| v.as_f64()));
        [Vector3::x(), Vector3::y(), Vector3::z()]
    } else {
        let a0 = canonical_sign(eig.eigenvectors.column(order[0]).normalize());
        let a1 = canonical_sign(eig.eigenvectors.column(order[1]).normalize());
        // re-orthogonalize a1 against a0 before closing the frame
        let a1 = (a1 - a0 * a0.dot(&a1)).normalize();
        [a0, a1, a0.cross(&a1)]
    };

    let mut points = Vec::with_capacity(6);
    for axis in &axes {
        let proj: Vec<T> = fg.iter().map(|(_, p)| (p - centroid).dot(axis)).collect();
        let perp = |k: usize| {
            let d = fg[k].1 - centroid;
            (d - axis * d.dot(axis)).norm_squared()
        };
        let span = proj.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let tie = span * T::lit(1e-9);
        for sign in [-T::one(), T::one()] {
            let best = proj.iter().fold(proj[0] * sign, |m, &v| m.max(v * sign));
            let winner = (0..fg.len())
                .filter(|&k| proj[k] * sign >= best - tie)
                .min_by(|&a, &b| {
                    let (pa, pb) = (perp(a), perp(b));
                    if (pa - pb).abs() <= tie * span {
                        fg[a].0.cmp(&fg[b].0)
                    } else {
                        pa.partial_cmp(&pb).expect("finite distances")
                    }
                })
                .expect("foreground is nonempty");
            points.push(fg[winner].1);
        }
    }
    Ok(LandmarkSet { points, axes, eigenvalues: values, centroid, isotropic })
}

fn canonical_sign<T: Real>(v: Vector3<T>) -> Vector3<T> {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() > v[k].abs() {
            k = i;
        }
    }
    if v[k] < T::zero() {
        -v
    } else {
        v
    }
}

/// Rigid transform taking `src` landmarks onto `dst`, matched slot by slot.
pub fn kabsch_umeyama<T: Real>(src: &LandmarkSet<T>, dst: &LandmarkSet<T>) -> Result<RigidTransform<T>> {
    if src.points.len() != 6 || dst.points.len() != 6 {
        return Err(Error::DegenerateLandmarks("landmark sets must hold 6 points".into()));
    }
    kabsch(&src.points, &dst.points, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::apply_rigid_to_mask;
    use crate::volume::{sphere_mask, GridGeometry};

    fn grid(n: [usize; 3]) -> GridGeometry<f64> {
        GridGeometry::new(n, [1.0; 3], [0.0; 3]).unwrap()
    }

    fn boxed(g: GridGeometry<f64>, lo: [usize; 3], hi: [usize; 3]) -> BinaryMask<f64> {
        BinaryMask::from_fn(g, |p| (0..3).all(|a| p[a] >= lo[a] && p[a] < hi[a]))
    }

    #[test]
    fn box_axes_follow_extents() {
        let m = boxed(grid([30, 20, 16]), [5, 5, 5], [25, 15, 11]);
        let l = pca_landmarks(&m).unwrap();
        assert!(!l.isotropic);
        for (a, e) in l.axes.iter().zip([Vector3::x(), Vector3::y(), Vector3::z()]) {
            assert!((a - e).norm() < 1e-9, "{a:?}");
        }
        // extreme faces, picked closest to the axis line then lowest index
        assert_eq!(l.points[0].x, 5.0);
        assert_eq!(l.points[1].x, 24.0);
        assert_eq!(l.points[2].y, 5.0);
        assert_eq!(l.points[3].y, 14.0);
        assert_eq!(l.points[4].z, 5.0);
        assert_eq!(l.points[5].z, 10.0);
        // centroid is (14.5, 9.5, 7.5); nearest centers to the x axis line are at y in {9,10}, z in {7,8}
        assert_eq!(l.points[0], Point3::new(5.0, 9.0, 7.0));
        for p in &l.points {
            assert!(m.get(m.geometry().nearest_index(p).unwrap()));
        }
    }

    #[test]
    fn frame_is_orthonormal_and_right_handed() {
        let g = grid([24, 24, 24]);
        let m = BinaryMask::from_fn(g, |[i, j, k]| {
            let d = [i as f64 - 11.0, j as f64 - 12.0, k as f64 - 10.5];
            (d[0] + d[1]).powi(2) / 120.0 + (d[0] - d[1]).powi(2) / 30.0 + d[2] * d[2] / 12.0 < 1.0
        });
        let l = pca_landmarks(&m).unwrap();
        let r = Matrix3::from_columns(&l.axes);
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-9);
        assert!((r.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sphere_is_isotropic() {
        let g = GridGeometry::centered([31; 3], 0.5).unwrap();
        let l = pca_landmarks(&sphere_mask(6.0, &g).unwrap()).unwrap();
        assert!(l.isotropic);
        assert_eq!(l.axes, [Vector3::x(), Vector3::y(), Vector3::z()]);
    }

    #[test]
    fn rank_errors_name_the_rank() {
        let g = grid([8, 8, 8]);
        let one = BinaryMask::from_fn(g, |p| p == [3, 3, 3]);
        assert!(matches!(pca_landmarks(&one), Err(Error::RankDeficient { rank: 0 })));
        let line = BinaryMask::from_fn(g, |[i, j, k]| j == 2 && k == 2 && i < 6);
        assert!(matches!(pca_landmarks(&line), Err(Error::RankDeficient { rank: 1 })));
        let plane = BinaryMask::from_fn(g, |[_, _, k]| k == 4);
        assert!(matches!(pca_landmarks(&plane), Err(Error::RankDeficient { rank: 2 })));
        assert!(matches!(pca_landmarks(&BinaryMask::empty(g)), Err(Error::RankDeficient { rank: 0 })));
    }

    #[test]
    fn quarter_turn_equivariance() {
        // anisotropic box rotated 90 degrees about z around the grid center
        let g = GridGeometry::centered([33; 3], 1.0).unwrap();
        let m = boxed(g, [6, 10, 13], [27, 23, 20]);
        let rot = RigidTransform::from_euler_deg([0.0, 0.0, 90.0], Vector3::zeros());
        let moved = apply_rigid_to_mask(&m, &rot, &g);
        assert_eq!(moved.count(), m.count());
        let (a, b) = (pca_landmarks(&m).unwrap(), pca_landmarks(&moved).unwrap());
        // the rotated frame's canonical signs differ, so compare landmark sets
        let mut expect: Vec<[i64; 3]> = a.points.iter().map(|p| rot.apply(p)).map(|p| [0, 1, 2].map(|k| p[k].round() as i64)).collect();
        let mut got: Vec<[i64; 3]> = b.points.iter().map(|p| [0, 1, 2].map(|k| p[k].round() as i64)).collect();
        // extreme faces match; the specific voxel chosen on a face may differ by tie order
        expect.sort();
        got.sort();
        for (e, g) in expect.iter().zip(&got) {
            let d = ((e[0] - g[0]).pow(2) + (e[1] - g[1]).pow(2) + (e[2] - g[2]).pow(2)) as f64;
            assert!(d.sqrt() <= 3f64.sqrt() + 1e-9, "{e:?} vs {g:?}");
        }
    }

    #[test]
    fn landmark_alignment_recovers_translation() {
        let g = grid([40, 40, 40]);
        let src = boxed(g, [5, 8, 10], [25, 18, 16]);
        let dst = src.shifted([3, -2, 4]);
        let t = kabsch_umeyama(&pca_landmarks(&src).unwrap(), &pca_landmarks(&dst).unwrap()).unwrap();
        assert!((t.translation() - Vector3::new(3.0, -2.0, 4.0)).norm() < 1e-9);
        assert!((t.rotation() - Matrix3::identity()).norm() < 1e-9);
    }
}
