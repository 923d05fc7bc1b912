//! Rigid alignment of voxel grids: principal-axis landmarks, least-squares
//! rigid fits and nearest-neighbour resampling.

mod kabsch;
mod landmarks;
mod transform;

pub use kabsch::{alignment_residual, kabsch};
pub use landmarks::{kabsch_umeyama, pca_landmarks, LandmarkSet, ISOTROPY_GAP};
pub use transform::{rotation_distance, RigidTransform};

use rayon::prelude::*;

use crate::scalar::Real;
use crate::volume::{BinaryMask, GridGeometry};

/// Resample `mask` under `transform` onto `target`.
///
/// Output voxel center `p` is foreground iff `transform⁻¹(p)` rounds to a
/// foreground voxel of the input; samples outside the input grid are
/// background.
pub fn apply_rigid_to_mask<T: Real>(
    mask: &BinaryMask<T>,
    transform: &RigidTransform<T>,
    target: &GridGeometry<T>,
) -> BinaryMask<T> {
    let inv = transform.inverse();
    let src = mask.geometry();
    let bits: Vec<bool> = (0..target.len())
        .into_par_iter()
        .map(|idx| {
            let p = inv.apply(&target.world(target.decode(idx)));
            src.nearest_index(&p).is_some_and(|q| mask.get(q))
        })
        .collect();
    BinaryMask::new(*target, bits).expect("bit count matches target")
}
