use nalgebra::{Matrix3, Matrix6, Point3, Rotation3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::cloud::PointCloud;
use super::{evaluate, Evaluation, RegistrationResult};
use crate::align::RigidTransform;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::KdTree;

/// Step halvings tried before giving up on an iteration.
const MAX_BACKTRACK: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpConfig {
    /// Correspondence cutoff in mm; `None` means 1.5 × the downsample voxel.
    pub max_correspondence: Option<f64>,
    pub max_iterations: usize,
    pub rel_change_tol: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self { max_correspondence: None, max_iterations: 50, rel_change_tol: 1e-6 }
    }
}

impl IcpConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("icp max_iterations must be positive".into()));
        }
        if !(self.rel_change_tol >= 0.0) {
            return Err(Error::InvalidParameter("icp rel_change_tol must be nonnegative".into()));
        }
        if let Some(d) = self.max_correspondence {
            if !(d > 0.0) {
                return Err(Error::InvalidParameter(format!("icp max_correspondence must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

/// Truncated point-to-plane objective: squared plane residual of every
/// matched point plus `max_corr^2` for every unmatched one.
fn objective<T: Real>(
    e: &Evaluation<T>,
    src: &[Point3<T>],
    dst: &PointCloud<T>,
    normals: &[nalgebra::Vector3<T>],
    t: &RigidTransform<T>,
    max_corr: T,
) -> T {
    let matched = e.pairs.iter().fold(T::zero(), |a, &(i, j)| {
        let r = normals[j].dot(&(t.apply(&src[i]) - dst.points()[j]));
        a + r * r
    });
    matched + max_corr * max_corr * T::from_count(src.len() - e.pairs.len())
}

fn orthonormalize<T: Real>(r: &Matrix3<T>) -> Matrix3<T> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.expect("U"), svd.v_t.expect("V^T"));
    let mut q = u * v_t;
    if q.determinant() < T::zero() {
        let mut u = u;
        u.column_mut(2).neg_mut();
        q = u * v_t;
    }
    q
}

/// Point-to-plane ICP.
///
/// Each iteration matches transformed source points to their nearest target
/// point within `max_corr`, linearizes `sum (n . (R p + t - q))^2` around the
/// current pose and solves the 6×6 normal equations (pseudo-inverse, so flat
/// directions such as a sphere's rotations stay put). The step is halved
/// until the truncated objective does not increase. Stops when fitness and
/// inlier RMSE both change by less than `rel_change_tol` (relative), when no
/// descent step exists, or after `max_iterations`.
pub fn icp_point_to_plane<T: Real>(
    src: &PointCloud<T>,
    dst: &PointCloud<T>,
    init: &RigidTransform<T>,
    config: &IcpConfig,
    max_corr: T,
) -> Result<RegistrationResult<T>> {
    config.validate()?;
    let normals = dst.normals().ok_or(Error::MissingNormals)?;
    if src.is_empty() || dst.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let tree = KdTree::new(dst.points());
    let pts = src.points();
    let tol = T::lit(config.rel_change_tol);
    let slack = T::default_epsilon().sqrt();

    let mut t = *init;
    let mut e = evaluate(pts, &tree, &t, max_corr);
    if e.pairs.is_empty() {
        return Err(Error::NoCorrespondences { max_correspondence: max_corr.as_f64() });
    }
    let mut obj = objective(&e, pts, dst, normals, &t, max_corr);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let mut a = Matrix6::<T>::zeros();
        let mut b = Vector6::<T>::zeros();
        for &(i, j) in &e.pairs {
            let p = t.apply(&pts[i]);
            let n = normals[j];
            let r = n.dot(&(p - dst.points()[j]));
            let c = p.coords.cross(&n);
            let jac = Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z);
            a += jac * jac.transpose();
            b -= jac * r;
        }
        let x = a.svd(true, true).solve(&b, T::default_epsilon() * a.norm()).unwrap_or_else(|_| Vector6::zeros());

        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let w = Vector3::new(x[0], x[1], x[2]) * step;
            let dt = Vector3::new(x[3], x[4], x[5]) * step;
            let inc = Rotation3::new(w).into_inner();
            let cand = RigidTransform::from_parts_unchecked(
                orthonormalize(&(inc * t.rotation())),
                inc * t.translation() + dt,
            );
            let ce = evaluate(pts, &tree, &cand, max_corr);
            let cobj = objective(&ce, pts, dst, normals, &cand, max_corr);
            if cobj <= obj {
                accepted = Some((cand, ce, cobj));
                break;
            }
            step *= T::lit(0.5);
        }
        let Some((cand, ce, cobj)) = accepted else {
            // no step decreases the objective: a local minimum
            converged = true;
            break;
        };
        let d_fit = (ce.fitness - e.fitness).abs();
        let d_rmse = (ce.rmse - e.rmse).abs();
        let small = d_fit <= tol * e.fitness.max(slack) && d_rmse <= tol * e.rmse + slack;
        t = cand;
        e = ce;
        obj = cobj;
        trace.push(obj);
        if small {
            converged = true;
            break;
        }
    }
    Ok(RegistrationResult {
        transform: t,
        fitness: e.fitness,
        inlier_rmse: e.rmse,
        iterations_used: iterations,
        converged,
        objective_trace: trace,
    })
}
