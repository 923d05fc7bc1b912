//! Two-stage rigid point-cloud registration: voxel downsampling, normal
//! estimation and FPFH features feed a RANSAC global estimate, which
//! point-to-plane ICP then refines.

mod cloud;
mod fpfh;
mod icp;
mod ransac;

pub use cloud::{estimate_normals, mesh_to_pointcloud, voxel_downsample, PointCloud};
pub use fpfh::{compute_fpfh, pair_features, FpfhFeatureSet, BINS_PER_FEATURE, FPFH_DIM, HISTOGRAM_TOTAL};
pub use icp::{icp_point_to_plane, IcpConfig};
pub use ransac::{feature_correspondences, ransac_global_registration, RansacConfig};

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::RigidTransform;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::KdTree;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegistrationResult<T: Real> {
    pub transform: RigidTransform<T>,
    /// Fraction of source points with a target point within the threshold.
    pub fitness: T,
    /// RMS distance over those matched points (mm).
    pub inlier_rmse: T,
    pub iterations_used: usize,
    pub converged: bool,
    /// ICP only: truncated point-to-plane objective before the first and after
    /// every accepted iteration.
    pub objective_trace: Vec<T>,
}

/// Nearest-target matches of a transformed source within a cutoff.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub pairs: Vec<(usize, usize)>,
    pub fitness: T,
    pub rmse: T,
}

pub(crate) fn evaluate<T: Real>(
    src: &[Point3<T>],
    tree: &KdTree<T>,
    t: &RigidTransform<T>,
    threshold: T,
) -> Evaluation<T> {
    let hits: Vec<Option<(usize, T)>> = src
        .par_iter()
        .map(|p| tree.nearest_within(&t.apply(p), threshold).map(|n| (n.index, n.dist2)))
        .collect();
    let mut pairs = Vec::new();
    let mut sum = T::zero();
    for (i, h) in hits.into_iter().enumerate() {
        if let Some((j, d2)) = h {
            pairs.push((i, j));
            sum += d2;
        }
    }
    let fitness = if src.is_empty() { T::zero() } else { T::from_count(pairs.len()) / T::from_count(src.len()) };
    let rmse = if pairs.is_empty() { T::zero() } else { (sum / T::from_count(pairs.len())).sqrt() };
    Evaluation { pairs, fitness, rmse }
}

/// Fitness and inlier RMSE of `t` applied to `src` against `dst`.
pub fn evaluate_registration<T: Real>(
    src: &PointCloud<T>,
    dst: &PointCloud<T>,
    t: &RigidTransform<T>,
    threshold: T,
) -> Evaluation<T> {
    evaluate(src.points(), &KdTree::new(dst.points()), t, threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrationConfig {
    pub downsample_voxel: f64,
    #[serde(default = "default_normal_k")]
    pub normal_k: usize,
    /// `None` means 5 × `downsample_voxel`.
    #[serde(default)]
    pub fpfh_radius: Option<f64>,
    #[serde(default)]
    pub ransac: RansacConfig,
    #[serde(default)]
    pub icp: IcpConfig,
}

fn default_normal_k() -> usize {
    30
}

impl RegistrationConfig {
    pub fn with_voxel(downsample_voxel: f64) -> Self {
        Self {
            downsample_voxel,
            normal_k: default_normal_k(),
            fpfh_radius: None,
            ransac: RansacConfig::default(),
            icp: IcpConfig::default(),
        }
    }

    /// Copy with every voxel-relative default filled in.
    pub fn effective(&self) -> Self {
        let v = self.downsample_voxel;
        let mut out = self.clone();
        out.fpfh_radius.get_or_insert(5.0 * v);
        out.ransac.distance_threshold.get_or_insert(1.5 * v);
        out.icp.max_correspondence.get_or_insert(1.5 * v);
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.downsample_voxel > 0.0 && self.downsample_voxel.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "downsample_voxel must be positive, got {}",
                self.downsample_voxel
            )));
        }
        if self.normal_k < 3 {
            return Err(Error::InvalidParameter("normal_k must be at least 3".into()));
        }
        if let Some(r) = self.fpfh_radius {
            if !(r > 0.0) {
                return Err(Error::InvalidParameter(format!("fpfh_radius must be positive, got {r}")));
            }
        }
        self.ransac.validate()?;
        self.icp.validate()
    }
}

/// Outcome of [`register`]: both stages and the composed estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStageResult<T: Real> {
    pub coarse: RegistrationResult<T>,
    pub fine: RegistrationResult<T>,
    pub source_points_downsampled: usize,
    pub target_points_downsampled: usize,
}

/// Full registration of `src` onto `dst`.
///
/// Both clouds are downsampled, given PCA normals and FPFH features for the
/// RANSAC stage. ICP then refines on the full-resolution clouds, using the
/// target's own normals when it has them.
pub fn register<T: Real>(
    src: &PointCloud<T>,
    dst: &PointCloud<T>,
    config: &RegistrationConfig,
) -> Result<TwoStageResult<T>> {
    config.validate()?;
    let cfg = config.effective();
    let voxel = T::lit(cfg.downsample_voxel);
    let prep = |c: &PointCloud<T>| -> Result<(PointCloud<T>, FpfhFeatureSet<T>)> {
        let d = voxel_downsample(&PointCloud::new(c.points().to_vec()), voxel)?;
        let d = estimate_normals(&d, cfg.normal_k)?;
        let f = compute_fpfh(&d, T::lit(cfg.fpfh_radius.expect("effective")))?;
        Ok((d, f))
    };
    let (ds, fs) = prep(src)?;
    let (dd, fd) = prep(dst)?;
    let coarse = ransac_global_registration(
        &ds,
        &dd,
        &fs,
        &fd,
        &cfg.ransac,
        T::lit(cfg.ransac.distance_threshold.expect("effective")),
    )?;
    let dst_fine = match dst.normals() {
        Some(_) => dst.clone(),
        None => estimate_normals(dst, cfg.normal_k)?,
    };
    let fine = icp_point_to_plane(
        src,
        &dst_fine,
        &coarse.transform,
        &cfg.icp,
        T::lit(cfg.icp.max_correspondence.expect("effective")),
    )?;
    Ok(TwoStageResult {
        coarse,
        fine,
        source_points_downsampled: ds.len(),
        target_points_downsampled: dd.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::rotation_distance;
    use crate::surface::primitives::bumpy_sphere;
    use nalgebra::Vector3;

    #[test]
    fn config_defaults_scale_with_voxel() {
        let c: RegistrationConfig = serde_json::from_str(r#"{"downsample_voxel": 2.0}"#).unwrap();
        let e = c.effective();
        assert_eq!(e.normal_k, 30);
        assert_eq!(e.fpfh_radius, Some(10.0));
        assert_eq!(e.ransac.distance_threshold, Some(3.0));
        assert_eq!(e.icp.max_correspondence, Some(3.0));
        assert_eq!(e.ransac.max_iterations, 100_000);
        assert_eq!(e.ransac.n_sample_points, 3);
        assert!(serde_json::from_str::<RegistrationConfig>(r#"{"downsample_voxel": 2.0, "nope": 1}"#).is_err());
        assert!(RegistrationConfig::with_voxel(0.0).validate().is_err());
        let mut bad = RegistrationConfig::with_voxel(1.0);
        bad.ransac.edge_length_ratio = 1.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn reported_fitness_matches_recomputation() {
        let c = mesh_to_pointcloud(&bumpy_sphere(20.0f64, 4, Point3::origin())).unwrap();
        let truth = RigidTransform::from_euler_deg([15.0, 20.0, -10.0], Vector3::new(10.0, 5.0, -30.0));
        let dst = c.transformed(&truth);
        let r = register(&c, &dst, &RegistrationConfig::with_voxel(2.0)).unwrap();
        assert!(rotation_distance(r.fine.transform.rotation(), truth.rotation()).to_degrees() < 0.1);
        // brute-force recomputation
        let t = r.fine.transform;
        let mut n = 0usize;
        let mut s = 0.0;
        for p in c.points() {
            let q = t.apply(p);
            let d2 = dst.points().iter().map(|x| (x - q).norm_squared()).fold(f64::INFINITY, f64::min);
            if d2 <= 9.0 {
                n += 1;
                s += d2;
            }
        }
        assert!((r.fine.fitness - n as f64 / c.len() as f64).abs() < 1e-12);
        assert!((r.fine.inlier_rmse - (s / n as f64).sqrt()).abs() < 1e-12);
    }
}
