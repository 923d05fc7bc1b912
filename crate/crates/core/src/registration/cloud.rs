use std::collections::BTreeMap;

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::align::RigidTransform;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::KdTree;
use crate::surface::TriangleMesh;

/// Points in mm with optional unit normals, index-aligned.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointCloud<T: Real> {
    points: Vec<Point3<T>>,
    normals: Option<Vec<Vector3<T>>>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<Point3<T>>) -> Self {
        Self { points, normals: None }
    }

    /// Attaches normals; each must have unit length within `1e-6`.
    pub fn with_normals(mut self, normals: Vec<Vector3<T>>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::InvalidParameter(format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        if let Some(i) = normals.iter().position(|n| !((n.norm() - T::one()).abs() <= T::lit(1e-6))) {
            return Err(Error::InvalidParameter(format!("normal {} is not unit length", i)));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    #[inline]
    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    #[inline]
    pub fn normals(&self) -> Option<&[Vector3<T>]> {
        self.normals.as_deref()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Point3<T>> {
        if self.is_empty() {
            return None;
        }
        let s = self.points.iter().fold(Vector3::zeros(), |a, p| a + p.coords);
        Some(Point3::from(s / T::from_count(self.len())))
    }

    pub fn transformed(&self, t: &RigidTransform<T>) -> Self {
        Self {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            normals: self.normals.as_ref().map(|ns| ns.iter().map(|n| t.apply_vector(n)).collect()),
        }
    }
}

/// Mesh vertices with area-weighted vertex normals.
///
/// Vertices not used by any triangle (or whose incident normals cancel) carry
/// no direction and are dropped.
pub fn mesh_to_pointcloud<T: Real>(mesh: &TriangleMesh<T>) -> Result<PointCloud<T>> {
    if mesh.is_empty() {
        return Err(Error::InvalidMesh("cannot sample an empty mesh".into()));
    }
    let v = mesh.vertices();
    let mut acc = vec![Vector3::zeros(); v.len()];
    for t in mesh.triangles() {
        // |cross| is twice the area, so summing raw cross products weights by area
        let n = (v[t[1]] - v[t[0]]).cross(&(v[t[2]] - v[t[0]]));
        for &i in t {
            acc[i] += n;
        }
    }
    let mut points = Vec::with_capacity(v.len());
    let mut normals = Vec::with_capacity(v.len());
    for (p, n) in v.iter().zip(acc) {
        let len = n.norm();
        if len > T::zero() {
            points.push(*p);
            normals.push(n / len);
        }
    }
    if points.len() < v.len() {
        log::debug!("mesh_to_pointcloud: dropped {} vertices without a normal", v.len() - points.len());
    }
    PointCloud::new(points).with_normals(normals)
}

/// One point per occupied `voxel`-sized cell: the centroid of its members.
/// Normals are averaged and renormalized. Output is ordered by cell index.
pub fn voxel_downsample<T: Real>(cloud: &PointCloud<T>, voxel: T) -> Result<PointCloud<T>> {
    if !(voxel > T::zero()) {
        return Err(Error::InvalidParameter(format!("voxel size must be positive, got {}", voxel)));
    }
    let key = |p: &Point3<T>| [0, 1, 2].map(|a| (p[a] / voxel).floor().as_f64() as i64);
    let mut cells: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    let mut points = Vec::with_capacity(cells.len());
    let mut normals = Vec::with_capacity(cells.len());
    for members in cells.values() {
        let n = T::from_count(members.len());
        points.push(Point3::from(members.iter().fold(Vector3::zeros(), |a, &i| a + cloud.points[i].coords) / n));
        if let Some(ns) = &cloud.normals {
            let s = members.iter().fold(Vector3::zeros(), |a, &i| a + ns[i]);
            let len = s.norm();
            // opposing normals can cancel; keep the first member's then
            normals.push(if len > T::default_epsilon() { s / len } else { ns[members[0]] });
        }
    }
    let out = PointCloud::new(points);
    if cloud.normals.is_some() {
        out.with_normals(normals)
    } else {
        Ok(out)
    }
}

/// Normals from the covariance of each point's `k` nearest neighbours (the
/// point itself included), oriented away from the cloud centroid.
pub fn estimate_normals<T: Real>(cloud: &PointCloud<T>, k: usize) -> Result<PointCloud<T>> {
    if k < 3 {
        return Err(Error::InvalidParameter(format!("normal estimation needs k >= 3, got {}", k)));
    }
    if cloud.len() <= k {
        return Err(Error::InsufficientSamples { needed: k + 1, got: cloud.len() });
    }
    let tree = KdTree::new(&cloud.points);
    let centroid = cloud.centroid().expect("nonempty");
    let normals: Vec<Vector3<T>> = cloud
        .points
        .par_iter()
        .map(|p| {
            let nb = tree.knn(p, k);
            let kf = T::from_count(nb.len());
            let mean = nb.iter().fold(Vector3::zeros(), |a, n| a + cloud.points[n.index].coords) / kf;
            let cov = nb.iter().fold(Matrix3::zeros(), |a, n| {
                let d = cloud.points[n.index].coords - mean;
                a + d * d.transpose()
            });
            let eig = SymmetricEigen::new(cov);
            let mut min = 0;
            for i in 1..3 {
                if eig.eigenvalues[i] < eig.eigenvalues[min] {
                    min = i;
                }
            }
            let n: Vector3<T> = eig.eigenvectors.column(min).normalize();
            if n.dot(&(p - centroid)) < T::zero() {
                -n
            } else {
                n
            }
        })
        .collect();
    PointCloud::new(cloud.points.clone()).with_normals(normals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::primitives::{box_mesh, icosphere};

    #[test]
    fn cube_normals_point_into_their_octant() {
        let mesh = box_mesh(Point3::new(-1.0f64, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0));
        let c = mesh_to_pointcloud(&mesh).unwrap();
        assert_eq!(c.len(), 8);
        for (p, n) in c.points().iter().zip(c.normals().unwrap()) {
            for a in 0..3 {
                assert!(n[a] * p[a] > 0.0, "{p:?} {n:?}");
            }
            // each face contributes one or two of its triangles to a corner, so the
            // normal is (w_x, w_y, w_z) with w in {1, 2}; the worst case (1, 1, 2)
            // sits acos(4 / sqrt(18)) from the diagonal
            let diag = p.coords.normalize();
            assert!(n.dot(&diag) >= 4.0 / 18f64.sqrt() - 1e-12);
        }
    }

    #[test]
    fn empty_mesh_rejected() {
        assert!(mesh_to_pointcloud(&TriangleMesh::<f64>::empty()).is_err());
    }

    #[test]
    fn sphere_mesh_normals_are_radial() {
        let c = mesh_to_pointcloud(&icosphere(5.0f64, 3, Point3::origin())).unwrap();
        for (p, n) in c.points().iter().zip(c.normals().unwrap()) {
            assert!(n.dot(&p.coords.normalize()) > 0.999);
        }
    }

    #[test]
    fn downsample_merges_a_cell_to_its_centroid() {
        let pts: Vec<_> = (0..8).map(|i| Point3::new(0.1 * (i & 1) as f64, 0.2 * ((i >> 1) & 1) as f64, 0.3 * (i >> 2) as f64)).collect();
        let d = voxel_downsample(&PointCloud::new(pts), 1.0).unwrap();
        assert_eq!(d.points(), &[Point3::new(0.05, 0.1, 0.15)]);
    }

    #[test]
    fn fine_downsample_keeps_every_point() {
        let pts: Vec<_> = (0..50).map(|i| Point3::new(i as f64, (i * 7 % 13) as f64, 0.5)).collect();
        let d = voxel_downsample(&PointCloud::new(pts.clone()), 0.5).unwrap();
        let mut a: Vec<[f64; 3]> = pts.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut b: Vec<[f64; 3]> = d.points().iter().map(|p| [p.x, p.y, p.z]).collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_eq!(a, b);
        assert!(voxel_downsample(&PointCloud::new(pts), 0.0).is_err());
    }

    #[test]
    fn downsample_averages_normals() {
        let c = mesh_to_pointcloud(&icosphere(10.0f64, 4, Point3::origin())).unwrap();
        let d = voxel_downsample(&c, 2.0).unwrap();
        assert!(d.len() < c.len());
        for (p, n) in d.points().iter().zip(d.normals().unwrap()) {
            assert!((n.norm() - 1.0).abs() < 1e-9);
            assert!(n.dot(&p.coords.normalize()) > 0.95);
        }
    }

    #[test]
    fn plane_normals_are_consistent() {
        // a far outlier below the plane pulls the centroid under it
        let mut pts: Vec<_> = (0..20).flat_map(|i| (0..20).map(move |j| Point3::new(i as f64, j as f64, 0.0))).collect();
        pts.push(Point3::new(9.5, 9.5, -30.0));
        let c = estimate_normals(&PointCloud::new(pts), 8).unwrap();
        for n in &c.normals().unwrap()[..400] {
            assert!((n.z - 1.0).abs() < 1e-9, "{n:?}");
        }
    }

    #[test]
    fn sphere_normals_within_five_degrees() {
        let c = PointCloud::new(icosphere(10.0f64, 3, Point3::new(1.0, 2.0, 3.0)).vertices().to_vec());
        let e = estimate_normals(&c, 10).unwrap();
        let cos5 = 5f64.to_radians().cos();
        for (p, n) in e.points().iter().zip(e.normals().unwrap()) {
            let radial = (p - Point3::new(1.0, 2.0, 3.0)).normalize();
            assert!(n.dot(&radial) > cos5);
        }
    }

    #[test]
    fn normal_estimation_preconditions() {
        let c = PointCloud::new(vec![Point3::new(0.0f64, 0.0, 0.0); 5]);
        assert!(estimate_normals(&c, 2).is_err());
        assert!(matches!(estimate_normals(&c, 5), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn normals_must_be_unit() {
        let c = PointCloud::new(vec![Point3::new(0.0f64, 0.0, 0.0)]);
        assert!(c.clone().with_normals(vec![Vector3::new(0.0, 0.0, 2.0)]).is_err());
        assert!(c.with_normals(vec![]).is_err());
    }
}
