//! Synthetic two-level phantoms standing in for scanned volumes.
//!
//! Intensity model: each voxel takes the foreground or background plateau plus
//! i.i.d. Gaussian noise, rounded and clamped to the `i16` range. Noise is drawn
//! from a ChaCha8 stream per z-slab (stream id = slab index), so slabs can be
//! generated in parallel and the result is bit-identical for a fixed seed.

use nalgebra::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{BinaryMask, GridGeometry, ScalarVolume};
use crate::error::{Error, Result};
use crate::scalar::Real;

const MARGIN_VOXELS: f64 = 2.0;

fn check_fits<T: Real>(radius: T, geometry: &GridGeometry<T>) -> Result<()> {
    geometry.validate()?;
    if !(radius > T::zero()) {
        return Err(Error::Phantom(format!("radius must be > 0, got {}", radius)));
    }
    for a in 0..3 {
        let half_extent =
            (T::from_count(geometry.dims[a]) - T::one()) * T::lit(0.5) * geometry.spacing[a];
        let needed = radius + T::lit(MARGIN_VOXELS) * geometry.spacing[a];
        if needed > half_extent {
            return Err(Error::Phantom(format!(
                "radius {} mm plus a {}-voxel margin exceeds the half extent {} mm along axis {}",
                radius, MARGIN_VOXELS, half_extent, a
            )));
        }
    }
    Ok(())
}

/// Region test shared by phantoms and their ground-truth masks.
fn region<T: Real>(
    geometry: &GridGeometry<T>,
    inside: impl Fn(T) -> bool + Sync,
) -> Vec<bool> {
    let center = geometry.center();
    let plane = geometry.dims[0] * geometry.dims[1];
    let mut bits = vec![false; geometry.len()];
    bits.par_chunks_mut(plane).enumerate().for_each(|(k, slab)| {
        for (n, b) in slab.iter_mut().enumerate() {
            let p = geometry.world([n % geometry.dims[0], n / geometry.dims[0], k]);
            *b = inside(dist2(&p, &center));
        }
    });
    bits
}

#[inline]
fn dist2<T: Real>(a: &Point3<T>, b: &Point3<T>) -> T {
    (a - b).norm_squared()
}

fn render<T: Real>(
    geometry: GridGeometry<T>,
    bits: &[bool],
    fg_mean: T,
    bg_mean: T,
    noise_sigma: T,
    seed: u64,
) -> Result<ScalarVolume<T>> {
    if fg_mean == bg_mean {
        return Err(Error::Phantom("fg_mean and bg_mean must differ".into()));
    }
    if !(noise_sigma >= T::zero()) {
        return Err(Error::Phantom("noise_sigma must be >= 0".into()));
    }
    let (fg, bg, sigma) = (fg_mean.as_f64(), bg_mean.as_f64(), noise_sigma.as_f64());
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Phantom(e.to_string()))?;
    let plane = geometry.dims[0] * geometry.dims[1];
    let mut data = vec![0i16; geometry.len()];
    data.par_chunks_mut(plane)
        .zip(bits.par_chunks(plane))
        .enumerate()
        .for_each(|(k, (slab, inside))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            for (v, &b) in slab.iter_mut().zip(inside) {
                let mean = if b { fg } else { bg };
                let value = if sigma > 0.0 { mean + normal.sample(&mut rng) } else { mean };
                *v = value.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
            }
        });
    ScalarVolume::new(geometry, data)
}

/// Ground-truth mask of a solid sphere centered on the grid: voxel centers with
/// `|c - center| <= radius`.
pub fn sphere_mask<T: Real>(radius: T, geometry: &GridGeometry<T>) -> Result<BinaryMask<T>> {
    check_fits(radius, geometry)?;
    let r2 = radius * radius;
    BinaryMask::new(*geometry, region(geometry, |d2| d2 <= r2))
}

/// Ground-truth mask of a spherical shell centered on the grid.
pub fn shell_mask<T: Real>(
    outer_radius: T,
    wall: T,
    geometry: &GridGeometry<T>,
) -> Result<BinaryMask<T>> {
    check_fits(outer_radius, geometry)?;
    if !(wall > T::zero()) || wall >= outer_radius {
        return Err(Error::Phantom(format!(
            "wall thickness must satisfy 0 < wall < outer_radius, got wall {} outer {}",
            wall, outer_radius
        )));
    }
    let inner = outer_radius - wall;
    let (lo, hi) = (inner * inner, outer_radius * outer_radius);
    BinaryMask::new(*geometry, region(geometry, |d2| d2 >= lo && d2 <= hi))
}

pub fn make_sphere_phantom<T: Real>(
    radius: T,
    geometry: &GridGeometry<T>,
    fg_mean: T,
    bg_mean: T,
    noise_sigma: T,
    seed: u64,
) -> Result<ScalarVolume<T>> {
    let mask = sphere_mask(radius, geometry)?;
    render(*geometry, mask.bits(), fg_mean, bg_mean, noise_sigma, seed)
}

pub fn make_shell_phantom<T: Real>(
    outer_radius: T,
    wall: T,
    geometry: &GridGeometry<T>,
    fg_mean: T,
    bg_mean: T,
    noise_sigma: T,
    seed: u64,
) -> Result<ScalarVolume<T>> {
    let mask = shell_mask(outer_radius, wall, geometry)?;
    render(*geometry, mask.bits(), fg_mean, bg_mean, noise_sigma, seed)
}
