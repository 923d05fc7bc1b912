use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cloud::PointCloud;
use super::fpfh::{FpfhFeatureSet, FPFH_DIM};
use super::{evaluate, RegistrationResult};
use crate::align::{kabsch, RigidTransform};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::KdTree;

/// Iterations evaluated together between early-termination checks.
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    pub n_sample_points: usize,
    pub max_iterations: usize,
    pub confidence: f64,
    /// Inlier distance in mm; `None` means 1.5 × the downsample voxel.
    pub distance_threshold: Option<f64>,
    pub edge_length_ratio: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            n_sample_points: 3,
            max_iterations: 100_000,
            confidence: 0.999,
            distance_threshold: None,
            edge_length_ratio: 0.9,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_sample_points < 3 {
            return Err(Error::InvalidParameter("ransac needs at least 3 sample points".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("ransac max_iterations must be positive".into()));
        }
        for (name, v) in [("confidence", self.confidence), ("edge_length_ratio", self.edge_length_ratio)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidParameter(format!("ransac {name} must lie in (0, 1], got {v}")));
            }
        }
        if let Some(d) = self.distance_threshold {
            if !(d > 0.0) {
                return Err(Error::InvalidParameter(format!("ransac distance_threshold must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

/// For every non-isolated source feature, the nearest non-isolated target
/// feature (squared Euclidean in 33-D, ties to the lowest index).
pub fn feature_correspondences<T: Real>(src: &FpfhFeatureSet<T>, dst: &FpfhFeatureSet<T>) -> Vec<(usize, usize)> {
    let targets: Vec<usize> = (0..dst.len()).filter(|&j| !dst.isolated[j]).collect();
    if targets.is_empty() {
        return Vec::new();
    }
    (0..src.len())
        .into_par_iter()
        .filter(|&i| !src.isolated[i])
        .map(|i| {
            let a = &src.histograms[i];
            let mut best = (T::max_value().expect("bounded"), usize::MAX);
            for &j in &targets {
                let b = &dst.histograms[j];
                let mut d = T::zero();
                for k in 0..FPFH_DIM {
                    let x = a[k] - b[k];
                    d += x * x;
                }
                if d < best.0 {
                    best = (d, j);
                }
            }
            (i, best.1)
        })
        .collect()
}

struct Candidate<T: Real> {
    iteration: usize,
    transform: RigidTransform<T>,
    fitness: T,
    rmse: T,
}

impl<T: Real> Candidate<T> {
    /// Higher fitness, then lower rmse, then earlier iteration.
    fn beats(&self, other: &Self) -> bool {
        if self.fitness != other.fitness {
            return self.fitness > other.fitness;
        }
        if self.rmse != other.rmse {
            return self.rmse < other.rmse;
        }
        self.iteration < other.iteration
    }
}

fn edge_lengths_agree<T: Real>(src: &[Point3<T>], dst: &[Point3<T>], ratio: T) -> bool {
    for a in 0..src.len() {
        for b in a + 1..src.len() {
            let ds = (src[a] - src[b]).norm();
            let dd = (dst[a] - dst[b]).norm();
            if ds < dd * ratio || dd < ds * ratio {
                return false;
            }
        }
    }
    true
}

/// Iterations needed to draw one all-inlier sample with the given confidence.
fn required_iterations(fitness: f64, n: usize, confidence: f64) -> f64 {
    let good = fitness.powi(n as i32);
    if good <= 0.0 {
        return f64::INFINITY;
    }
    if good >= 1.0 {
        return 1.0;
    }
    (1.0 - confidence).ln() / (1.0 - good).ln()
}

/// Feature-matched RANSAC.
///
/// Each iteration draws `n_sample_points` distinct correspondences from its own
/// ChaCha8 stream (seed, stream = iteration index), rejects samples whose
/// pairwise edge lengths disagree by more than `edge_length_ratio`, fits a
/// rigid transform and scores it by inlier fraction of the whole source cloud.
/// Iterations run in parallel chunks; the loop stops once the best fitness
/// makes `confidence` attainable. The winner is refined on its inliers.
pub fn ransac_global_registration<T: Real>(
    src: &PointCloud<T>,
    dst: &PointCloud<T>,
    src_features: &FpfhFeatureSet<T>,
    dst_features: &FpfhFeatureSet<T>,
    config: &RansacConfig,
    distance_threshold: T,
) -> Result<RegistrationResult<T>> {
    config.validate()?;
    if src.is_empty() || dst.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if src_features.len() != src.len() || dst_features.len() != dst.len() {
        return Err(Error::InvalidParameter("features are not index-aligned with their clouds".into()));
    }
    let corr = feature_correspondences(src_features, dst_features);
    let n = config.n_sample_points;
    if corr.len() < n.max(3) {
        return Err(Error::TooFewCorrespondences(corr.len()));
    }
    let tree = KdTree::new(dst.points());
    let ratio = T::lit(config.edge_length_ratio);

    let trial = |it: usize| -> Option<Candidate<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(it as u64);
        let mut picks: Vec<usize> = Vec::with_capacity(n);
        while picks.len() < n {
            let k = rng.random_range(0..corr.len());
            if !picks.contains(&k) {
                picks.push(k);
            }
        }
        let s: Vec<Point3<T>> = picks.iter().map(|&k| src.points()[corr[k].0]).collect();
        let d: Vec<Point3<T>> = picks.iter().map(|&k| dst.points()[corr[k].1]).collect();
        if !edge_lengths_agree(&s, &d, ratio) {
            return None;
        }
        let transform = kabsch(&s, &d, None).ok()?;
        let e = evaluate(src.points(), &tree, &transform, distance_threshold);
        Some(Candidate { iteration: it, transform, fitness: e.fitness, rmse: e.rmse })
    };

    let mut best: Option<Candidate<T>> = None;
    let mut done = 0usize;
    let mut converged = false;
    while done < config.max_iterations {
        let end = (done + CHUNK).min(config.max_iterations);
        let chunk: Vec<Candidate<T>> = (done..end).into_par_iter().filter_map(trial).collect();
        for c in chunk {
            if best.as_ref().is_none_or(|b| c.beats(b)) {
                best = Some(c);
            }
        }
        done = end;
        if let Some(b) = &best {
            if done as f64 >= required_iterations(b.fitness.as_f64(), n, config.confidence) {
                converged = true;
                break;
            }
        }
    }

    let Some(best) = best else {
        log::warn!("ransac: no sample passed the edge-length check in {} iterations", done);
        return Ok(RegistrationResult {
            transform: RigidTransform::identity(),
            fitness: T::zero(),
            inlier_rmse: T::zero(),
            iterations_used: done,
            converged: false,
            objective_trace: Vec::new(),
        });
    };

    let mut transform = best.transform;
    let mut eval = evaluate(src.points(), &tree, &transform, distance_threshold);
    if eval.pairs.len() >= 3 {
        let s: Vec<Point3<T>> = eval.pairs.iter().map(|&(i, _)| src.points()[i]).collect();
        let d: Vec<Point3<T>> = eval.pairs.iter().map(|&(_, j)| dst.points()[j]).collect();
        if let Ok(refined) = kabsch(&s, &d, None) {
            let e = evaluate(src.points(), &tree, &refined, distance_threshold);
            if e.fitness >= eval.fitness {
                transform = refined;
                eval = e;
            }
        }
    }
    log::debug!("ransac: best iteration {}, fitness {}, {} iterations", best.iteration, eval.fitness, done);
    Ok(RegistrationResult {
        transform,
        fitness: eval.fitness,
        inlier_rmse: eval.rmse,
        iterations_used: done,
        converged,
        objective_trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::cloud::{estimate_normals, mesh_to_pointcloud, voxel_downsample};
    use crate::registration::fpfh::compute_fpfh;
    use crate::surface::primitives::bumpy_sphere;
    use crate::align::rotation_distance;
    use nalgebra::Vector3;

    fn prepared(voxel: f64) -> PointCloud<f64> {
        let c = mesh_to_pointcloud(&bumpy_sphere(20.0, 5, Point3::origin())).unwrap();
        estimate_normals(&voxel_downsample(&c, voxel).unwrap(), 30).unwrap()
    }

    #[test]
    fn identical_clouds_give_identity() {
        let c = prepared(2.0);
        let f = compute_fpfh(&c, 10.0).unwrap();
        let r = ransac_global_registration(&c, &c, &f, &f, &RansacConfig::default(), 3.0).unwrap();
        assert_eq!(r.fitness, 1.0);
        assert!(r.transform.rotation_angle() < 1e-9);
        assert!(r.transform.translation().norm() < 1e-9);
    }

    #[test]
    fn recovers_known_motion() {
        let voxel = 2.0;
        let src = prepared(voxel);
        let truth = RigidTransform::from_euler_deg([20.0, -15.0, 25.0], Vector3::new(12.0, -20.0, 8.0));
        let dst = src.transformed(&truth);
        let (fs, fd) = (compute_fpfh(&src, 5.0 * voxel).unwrap(), compute_fpfh(&dst, 5.0 * voxel).unwrap());
        let r = ransac_global_registration(&src, &dst, &fs, &fd, &RansacConfig::default(), 1.5 * voxel).unwrap();
        assert!(rotation_distance(r.transform.rotation(), truth.rotation()).to_degrees() < 2.0);
        assert!((r.transform.translation() - truth.translation()).norm() < 2.0 * voxel);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let src = prepared(2.5);
        let truth = RigidTransform::from_euler_deg([10.0, 0.0, 5.0], Vector3::new(3.0, 0.0, 0.0));
        let dst = src.transformed(&truth);
        let (fs, fd) = (compute_fpfh(&src, 12.5).unwrap(), compute_fpfh(&dst, 12.5).unwrap());
        let cfg = RansacConfig { seed: 77, ..Default::default() };
        let a = ransac_global_registration(&src, &dst, &fs, &fd, &cfg, 3.75).unwrap();
        let b = ransac_global_registration(&src, &dst, &fs, &fd, &cfg, 3.75).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unrelated_clouds_score_low() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut blob = |n: usize| {
            let pts: Vec<Point3<f64>> =
                (0..n).map(|_| Point3::from(std::array::from_fn::<f64, 3, _>(|_| rng.random_range(0.0..200.0)))).collect();
            let hist = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0))).collect();
            (PointCloud::new(pts), FpfhFeatureSet { histograms: hist, isolated: vec![false; n] })
        };
        let ((src, fs), (dst, fd)) = (blob(500), blob(500));
        let cfg = RansacConfig { max_iterations: 5000, ..Default::default() };
        let r = ransac_global_registration(&src, &dst, &fs, &fd, &cfg, 3.75).unwrap();
        assert!(!r.converged);
        assert!(r.fitness < 0.1, "{}", r.fitness);
    }

    #[test]
    fn too_few_correspondences() {
        let c = PointCloud::new(vec![Point3::new(0.0f64, 0.0, 0.0); 2]);
        let f = FpfhFeatureSet { histograms: vec![[0.0; FPFH_DIM]; 2], isolated: vec![false; 2] };
        let e = ransac_global_registration(&c, &c, &f, &f, &RansacConfig::default(), 1.0).unwrap_err();
        assert!(matches!(e, Error::TooFewCorrespondences(2)));
    }

    #[test]
    fn iteration_bound() {
        assert_eq!(required_iterations(1.0, 3, 0.999), 1.0);
        assert!(required_iterations(0.0, 3, 0.999).is_infinite());
        let k = required_iterations(0.5, 3, 0.99);
        assert!((k - (0.01f64).ln() / (0.875f64).ln()).abs() < 1e-12);
    }
}
