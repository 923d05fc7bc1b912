use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::KdTree;

fn mean<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(xs.len())
}

/// Distance from each point of `a` to its nearest neighbour in `b`.
pub fn nn_distances<T: Real>(a: &[Point3<T>], b: &[Point3<T>]) -> Result<Vec<T>> {
    Ok(nn_sq(a, &tree(b)?)?.into_iter().map(|d| d.sqrt()).collect())
}

fn tree<T: Real>(b: &[Point3<T>]) -> Result<KdTree<T>> {
    if b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(KdTree::new(b))
}

fn nn_sq<T: Real>(a: &[Point3<T>], tree: &KdTree<T>) -> Result<Vec<T>> {
    if a.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(a.par_iter().map(|p| tree.nearest(p).expect("nonempty tree").dist2).collect())
}

/// Squared nearest-neighbour distances in both directions.
struct Directed<T> {
    ab: Vec<T>,
    ba: Vec<T>,
}

fn directed<T: Real>(a: &[Point3<T>], b: &[Point3<T>]) -> Result<Directed<T>> {
    let (ta, tb) = (tree(a)?, tree(b)?);
    Ok(Directed { ab: nn_sq(a, &tb)?, ba: nn_sq(b, &ta)? })
}

/// `(sum of directed mean squared distances, same with plain distances)`.
pub fn chamfer<T: Real>(a: &[Point3<T>], b: &[Point3<T>]) -> Result<(T, T)> {
    let d = directed(a, b)?;
    Ok(chamfer_of(&d))
}

fn chamfer_of<T: Real>(d: &Directed<T>) -> (T, T) {
    let sqrt = |v: &[T]| v.iter().map(|x| x.sqrt()).collect::<Vec<T>>();
    (mean(&d.ab) + mean(&d.ba), mean(&sqrt(&d.ab)) + mean(&sqrt(&d.ba)))
}

/// Mean of the two directed mean nearest-neighbour distances.
pub fn average_hausdorff<T: Real>(a: &[Point3<T>], b: &[Point3<T>]) -> Result<T> {
    Ok(chamfer(a, b)?.1 * T::lit(0.5))
}

/// Root mean squared distance from each `recon` point to the nearest `reference`
/// point. Directed: only `recon` points are averaged.
pub fn rmse_surface<T: Real>(recon: &[Point3<T>], reference: &[Point3<T>]) -> Result<T> {
    Ok(mean(&nn_sq(recon, &tree(reference)?)?).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMetrics<T: Real> {
    pub chamfer_sq_mm2: T,
    pub chamfer_mm: T,
    pub ahd_mm: T,
    pub rmse_mm: T,
}

/// All surface-distance metrics, sharing one pair of nearest-neighbour passes.
pub fn surface_metrics<T: Real>(recon: &[Point3<T>], reference: &[Point3<T>]) -> Result<SurfaceMetrics<T>> {
    let d = directed(recon, reference)?;
    let (sq, unsq) = chamfer_of(&d);
    Ok(SurfaceMetrics { chamfer_sq_mm2: sq, chamfer_mm: unsq, ahd_mm: unsq * T::lit(0.5), rmse_mm: mean(&d.ab).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn cloud(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Point3::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(0.0..10.0))).collect()
    }

    #[test]
    fn empty_rejected() {
        let a = cloud(3, 1);
        assert!(matches!(nn_distances(&a, &[]), Err(Error::EmptyCloud)));
        assert!(chamfer(&[], &a).is_err());
        assert!(rmse_surface(&a, &[]).is_err());
    }

    #[test]
    fn identical_clouds_are_zero() {
        let a = cloud(50, 2);
        let m = surface_metrics(&a, &a).unwrap();
        assert_eq!((m.chamfer_sq_mm2, m.chamfer_mm, m.ahd_mm, m.rmse_mm), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn singletons_two_apart() {
        let (a, b) = ([Point3::new(0.0, 0.0, 0.0)], [Point3::new(0.0, 2.0, 0.0)]);
        assert_eq!(nn_distances(&a, &b).unwrap(), vec![2.0]);
        assert_eq!(chamfer(&a, &b).unwrap(), (8.0, 4.0));
        assert_eq!(average_hausdorff(&a, &b).unwrap(), 2.0);
    }

    #[test]
    fn plane_offset_gives_rmse() {
        let reference: Vec<_> = (0..40).flat_map(|i| (0..40).map(move |j| Point3::new(i as f64 * 0.5, j as f64 * 0.5, 0.0))).collect();
        let recon: Vec<_> = reference.iter().map(|p| p + nalgebra::Vector3::new(0.0, 0.0, 0.1)).collect();
        assert!((rmse_surface(&recon, &reference).unwrap() - 0.1).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn matches_quadratic_oracle(seed in any::<u64>(), n in 1usize..200, m in 1usize..200) {
            let (a, b) = (cloud(n, seed), cloud(m, seed.wrapping_add(1)));
            let brute = |x: &[Point3<f64>], y: &[Point3<f64>]| -> Vec<f64> {
                x.iter().map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)).collect()
            };
            let (ab, ba) = (brute(&a, &b), brute(&b, &a));
            prop_assert_eq!(nn_distances(&a, &b).unwrap(), ab.clone());
            let s = surface_metrics(&a, &b).unwrap();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
            prop_assert!((s.chamfer_sq_mm2 - (mean(&sq(&ab)) + mean(&sq(&ba)))).abs() < 1e-9);
            prop_assert!((s.chamfer_mm - (mean(&ab) + mean(&ba))).abs() < 1e-9);
            prop_assert!((s.ahd_mm - 0.5 * (mean(&ab) + mean(&ba))).abs() < 1e-9);
            prop_assert!(s.ahd_mm <= mean(&ab).max(mean(&ba)) + 1e-12);
            prop_assert!((s.rmse_mm - mean(&sq(&ab)).sqrt()).abs() < 1e-9);
            prop_assert!(s.rmse_mm >= mean(&ab) - 1e-12);
            let (c1, c2) = (chamfer(&a, &b).unwrap(), chamfer(&b, &a).unwrap());
            prop_assert!((c1.0 - c2.0).abs() < 1e-9 && (c1.1 - c2.1).abs() < 1e-9);
        }
    }
}
