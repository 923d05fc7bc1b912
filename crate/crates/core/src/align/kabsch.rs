use nalgebra::{Matrix3, Point3, Vector3};

use super::transform::RigidTransform;
use crate::error::{Error, Result};
use crate::scalar::Real;

fn centroid<T: Real>(pts: &[Point3<T>]) -> Point3<T> {
    let sum = pts.iter().fold(Vector3::zeros(), |a, p| a + p.coords);
    Point3::from(sum / T::from_count(pts.len()))
}

/// Numerical rank of a centered point set (0 to 3).
pub(crate) fn spread_rank<T: Real>(pts: &[Point3<T>]) -> usize {
    if pts.is_empty() {
        return 0;
    }
    let c = centroid(pts);
    let cov = pts.iter().fold(Matrix3::zeros(), |a, p| {
        let d = p - c;
        a + d * d.transpose()
    });
    let sv = cov.singular_values();
    let top = sv.max();
    if top <= T::zero() {
        return 0;
    }
    let tol = top * T::lit(1e-10);
    sv.iter().filter(|&&s| s > tol).count()
}

/// Least-squares rigid motion taking `src[i]` onto `dst[i]`, with optional
/// per-pair weights.
///
/// SVD of the cross-covariance with a determinant-sign correction, so the
/// result is always a proper rotation even for mirrored inputs. Point sets
/// whose spread has rank below 2 (all points collinear) are rejected.
pub fn kabsch<T: Real>(src: &[Point3<T>], dst: &[Point3<T>], weights: Option<&[T]>) -> Result<RigidTransform<T>> {
    if src.len() != dst.len() {
        return Err(Error::InvalidParameter(format!("{} source points but {} targets", src.len(), dst.len())));
    }
    if src.len() < 3 {
        return Err(Error::TooFewCorrespondences(src.len()));
    }
    if let Some(w) = weights {
        if w.len() != src.len() || w.iter().any(|&x| !(x >= T::zero())) {
            return Err(Error::InvalidParameter("weights must be nonnegative, one per pair".into()));
        }
    }
    let w = |i: usize| weights.map_or(T::one(), |w| w[i]);
    let total = (0..src.len()).fold(T::zero(), |a, i| a + w(i));
    if !(total > T::zero()) {
        return Err(Error::InvalidParameter("weights sum to zero".into()));
    }
    let wc = |pts: &[Point3<T>]| {
        Point3::from((0..pts.len()).fold(Vector3::zeros(), |a, i| a + pts[i].coords * w(i)) / total)
    };
    let (cs, cd) = (wc(src), wc(dst));
    for (name, pts) in [("source", src), ("target", dst)] {
        let r = spread_rank(pts);
        if r < 2 {
            return Err(Error::DegenerateLandmarks(format!("{name} points are collinear (rank {r})")));
        }
    }
    let h = (0..src.len()).fold(Matrix3::zeros(), |a, i| a + (src[i] - cs) * (dst[i] - cd).transpose() * w(i));
    let svd = h.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let d = (v_t.transpose() * u.transpose()).determinant();
    let mut corr = Matrix3::identity();
    if d < T::zero() {
        corr[(2, 2)] = -T::one();
    }
    let r = v_t.transpose() * corr * u.transpose();
    let t = cd.coords - r * cs.coords;
    Ok(RigidTransform::from_parts_unchecked(r, t))
}

/// Sum of squared residuals `sum |T src_i - dst_i|^2`.
pub fn alignment_residual<T: Real>(t: &RigidTransform<T>, src: &[Point3<T>], dst: &[Point3<T>]) -> T {
    src.iter().zip(dst).fold(T::zero(), |a, (s, d)| a + (t.apply(s) - d).norm_squared())
}
