use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::KdTree;

pub const BINS_PER_FEATURE: usize = 11;
pub const FPFH_DIM: usize = 3 * BINS_PER_FEATURE;
/// Sum of every non-isolated histogram.
pub const HISTOGRAM_TOTAL: f64 = 100.0;

/// Per-point 33-bin Fast Point Feature Histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct FpfhFeatureSet<T: Real> {
    pub histograms: Vec<[T; FPFH_DIM]>,
    /// Points with no neighbour inside the radius; their histogram is all zero.
    pub isolated: Vec<bool>,
}

impl<T: Real> FpfhFeatureSet<T> {
    pub fn len(&self) -> usize {
        self.histograms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histograms.is_empty()
    }
}

/// Darboux-frame angles `(alpha, phi, theta)` of an oriented point pair.
///
/// The source is whichever point's normal makes the smaller angle with the
/// connecting line, so the result does not depend on argument order.
pub fn pair_features<T: Real>(
    p1: &Point3<T>,
    n1: &Vector3<T>,
    p2: &Point3<T>,
    n2: &Vector3<T>,
) -> Option<(T, T, T)> {
    let mut d = p2 - p1;
    let dist = d.norm();
    if dist == T::zero() {
        return None;
    }
    d /= dist;
    let (mut ns, mut nt) = (n1, n2);
    if n1.dot(&d).abs() < n2.dot(&d).abs() {
        ns = n2;
        nt = n1;
        d = -d;
    }
    let phi = ns.dot(&d);
    let v = d.cross(ns);
    let vn = v.norm();
    if vn == T::zero() {
        return None;
    }
    let v = v / vn;
    let w = ns.cross(&v);
    let alpha = v.dot(nt);
    let theta = w.dot(nt).atan2(ns.dot(nt));
    Some((alpha, phi, theta))
}

fn bin<T: Real>(x: T, lo: T, hi: T) -> usize {
    let b = ((x - lo) / (hi - lo) * T::from_count(BINS_PER_FEATURE)).floor().as_f64();
    (b.max(0.0) as usize).min(BINS_PER_FEATURE - 1)
}

/// Simplified histogram: each 11-bin block sums to 1, or all zero.
fn spfh<T: Real>(cloud: &PointCloud<T>, normals: &[Vector3<T>], i: usize, neighbors: &[usize]) -> [T; FPFH_DIM] {
    let mut h = [T::zero(); FPFH_DIM];
    let mut count = 0usize;
    let p = &cloud.points()[i];
    for &j in neighbors {
        if let Some((alpha, phi, theta)) = pair_features(p, &normals[i], &cloud.points()[j], &normals[j]) {
            h[bin(alpha, -T::one(), T::one())] += T::one();
            h[BINS_PER_FEATURE + bin(phi, -T::one(), T::one())] += T::one();
            h[2 * BINS_PER_FEATURE + bin(theta, -T::pi(), T::pi())] += T::one();
            count += 1;
        }
    }
    if count > 0 {
        let c = T::from_count(count);
        h.iter_mut().for_each(|x| *x /= c);
    }
    h
}

/// FPFH descriptors over `radius`-neighbourhoods.
///
/// `FPFH(p) = SPFH(p) + (1/k) sum_q SPFH(q) / |p - q|` over the `k` neighbours
/// of `p`, scaled so the 33 bins sum to [`HISTOGRAM_TOTAL`].
pub fn compute_fpfh<T: Real>(cloud: &PointCloud<T>, radius: T) -> Result<FpfhFeatureSet<T>> {
    let normals = cloud.normals().ok_or(Error::MissingNormals)?;
    if !(radius > T::zero()) {
        return Err(Error::InvalidParameter(format!("fpfh radius must be positive, got {}", radius)));
    }
    let tree = KdTree::new(cloud.points());
    let hoods: Vec<Vec<(usize, T)>> = cloud
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            tree.within_radius(p, radius)
                .into_iter()
                .filter(|n| n.index != i && n.dist2 > T::zero())
                .map(|n| (n.index, n.dist2.sqrt()))
                .collect()
        })
        .collect();
    let simple: Vec<[T; FPFH_DIM]> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let idx: Vec<usize> = hoods[i].iter().map(|&(j, _)| j).collect();
            spfh(cloud, normals, i, &idx)
        })
        .collect();
    let total = T::lit(HISTOGRAM_TOTAL);
    let (histograms, isolated): (Vec<_>, Vec<_>) = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let hood = &hoods[i];
            let mut h = simple[i];
            if hood.is_empty() {
                return (h, true);
            }
            let k = T::from_count(hood.len());
            for &(j, d) in hood {
                let w = T::one() / (k * d);
                for (a, b) in h.iter_mut().zip(&simple[j]) {
                    *a += *b * w;
                }
            }
            let s = h.iter().fold(T::zero(), |a, &b| a + b);
            if s > T::zero() {
                h.iter_mut().for_each(|x| *x = *x * total / s);
                (h, false)
            } else {
                (h, true)
            }
        })
        .unzip();
    Ok(FpfhFeatureSet { histograms, isolated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::RigidTransform;
    use crate::registration::cloud::mesh_to_pointcloud;
    use crate::surface::primitives::{bumpy_sphere, icosphere};

    fn l1<T: Real>(a: &[T; FPFH_DIM], b: &[T; FPFH_DIM]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (*x - *y).abs().as_f64()).sum()
    }

    #[test]
    fn pair_features_are_symmetric() {
        let p1 = Point3::new(0.0f64, 0.0, 0.0);
        let p2 = Point3::new(1.0, 0.5, -0.2);
        let n1 = Vector3::new(0.1, 0.2, 1.0).normalize();
        let n2 = Vector3::new(-0.3, 0.1, 0.9).normalize();
        let a = pair_features(&p1, &n1, &p2, &n2).unwrap();
        let b = pair_features(&p2, &n2, &p1, &n1).unwrap();
        assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12 && (a.2 - b.2).abs() < 1e-12);
        assert!(pair_features(&p1, &n1, &p1, &n2).is_none());
    }

    #[test]
    fn histograms_sum_to_total() {
        let c = mesh_to_pointcloud(&bumpy_sphere(10.0f64, 3, Point3::origin())).unwrap();
        let f = compute_fpfh(&c, 3.0).unwrap();
        assert_eq!(f.len(), c.len());
        for (h, iso) in f.histograms.iter().zip(&f.isolated) {
            assert!(!iso);
            assert!(h.iter().all(|&x| x >= 0.0));
            assert!((h.iter().sum::<f64>() - HISTOGRAM_TOTAL).abs() < 1e-6);
        }
    }

    #[test]
    fn isolated_point_is_flagged() {
        let mut pts = icosphere(5.0f64, 2, Point3::origin()).vertices().to_vec();
        pts.push(Point3::new(100.0, 0.0, 0.0));
        let n = pts.len();
        let normals: Vec<_> = pts.iter().map(|p| p.coords.normalize()).collect();
        let c = PointCloud::new(pts).with_normals(normals).unwrap();
        let f = compute_fpfh(&c, 2.0).unwrap();
        assert!(f.isolated[n - 1]);
        assert!(f.histograms[n - 1].iter().all(|&x| x == 0.0));
        assert_eq!(f.isolated.iter().filter(|&&x| x).count(), 1);
    }

    #[test]
    fn missing_normals_rejected() {
        let c = PointCloud::new(vec![Point3::new(0.0f64, 0.0, 0.0)]);
        assert!(matches!(compute_fpfh(&c, 1.0), Err(Error::MissingNormals)));
    }

    #[test]
    fn rigid_invariance() {
        let c = mesh_to_pointcloud(&bumpy_sphere(10.0f64, 3, Point3::origin())).unwrap();
        let t = RigidTransform::from_euler_deg([23.0, -41.0, 77.0], Vector3::new(5.0, -8.0, 2.0));
        let (a, b) = (compute_fpfh(&c, 3.0).unwrap(), compute_fpfh(&c.transformed(&t), 3.0).unwrap());
        for (x, y) in a.histograms.iter().zip(&b.histograms) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sphere_histograms_are_uniform() {
        let c = mesh_to_pointcloud(&icosphere(10.0f64, 4, Point3::origin())).unwrap();
        let f = compute_fpfh(&c, 2.5).unwrap();
        let mut worst = 0.0f64;
        for i in (0..c.len()).step_by(37) {
            for j in (0..c.len()).step_by(41) {
                worst = worst.max(l1(&f.histograms[i], &f.histograms[j]));
            }
        }
        // measured 4.88 at this tessellation; the bumpy sphere reaches about 110
        assert!(worst < SPHERE_L1_BOUND, "{worst}");
        let b = mesh_to_pointcloud(&bumpy_sphere(10.0f64, 4, Point3::origin())).unwrap();
        let fb = compute_fpfh(&b, 2.5).unwrap();
        let mut bumpy = 0.0f64;
        for i in (0..b.len()).step_by(37) {
            for j in (0..b.len()).step_by(41) {
                bumpy = bumpy.max(l1(&fb.histograms[i], &fb.histograms[j]));
            }
        }
        assert!(bumpy > 10.0 * SPHERE_L1_BOUND);
    }

    const SPHERE_L1_BOUND: f64 = 6.0;
}
