//! Voxel-grid value types, synthetic phantoms and mesh voxelization.
//!
//! Every dense array in this module is laid out x-fastest: the voxel at index
//! `(i, j, k)` lives at `i + nx * (j + ny * k)`.

mod phantom;
mod voxelize;

pub use phantom::{make_shell_phantom, make_sphere_phantom, shell_mask, sphere_mask};
pub use voxelize::voxelize_mesh;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Extent, spacing and placement of a regular voxel grid.
///
/// `origin` is the world position (mm) of the center of voxel `(0, 0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridGeometry<T: Real> {
    pub dims: [usize; 3],
    #[serde(rename = "spacing_mm")]
    pub spacing: [T; 3],
    #[serde(rename = "origin_mm")]
    pub origin: [T; 3],
}

impl<T: Real> GridGeometry<T> {
    pub fn new(dims: [usize; 3], spacing: [T; 3], origin: [T; 3]) -> Result<Self> {
        let g = Self { dims, spacing, origin };
        g.validate()?;
        Ok(g)
    }

    /// Grid with isotropic spacing whose center sits at the world origin.
    pub fn centered(dims: [usize; 3], spacing: T) -> Result<Self> {
        let half = T::lit(0.5);
        let origin = [0, 1, 2].map(|a| -(T::from_count(dims[a]) - T::one()) * half * spacing);
        Self::new(dims, [spacing; 3], origin)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::Geometry(format!("all dims must be >= 1, got {:?}", self.dims)));
        }
        if self.spacing.iter().any(|&s| !(s > T::zero()) || !s.is_finite()) {
            return Err(Error::Geometry("all spacings must be finite and > 0".into()));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Geometry("origin must be finite".into()));
        }
        self.dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Geometry("voxel count overflows".into()))?;
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn linear_index(&self, [i, j, k]: [usize; 3]) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn decode(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let r = idx / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    #[inline]
    pub fn contains(&self, index: [usize; 3]) -> bool {
        index.iter().zip(self.dims.iter()).all(|(&v, &d)| v < d)
    }

    #[inline]
    pub fn spacing_vec(&self) -> Vector3<T> {
        Vector3::from(self.spacing)
    }

    #[inline]
    pub fn origin_point(&self) -> Point3<T> {
        Point3::from(self.origin)
    }

    /// World coordinate (mm) of a voxel center.
    #[inline]
    pub fn world(&self, [i, j, k]: [usize; 3]) -> Point3<T> {
        Point3::new(
            self.origin[0] + T::from_count(i) * self.spacing[0],
            self.origin[1] + T::from_count(j) * self.spacing[1],
            self.origin[2] + T::from_count(k) * self.spacing[2],
        )
    }

    /// World coordinate of the grid center (midpoint of the first and last voxel centers).
    pub fn center(&self) -> Point3<T> {
        let half = T::lit(0.5);
        Point3::from([0, 1, 2].map(|a| {
            self.origin[a] + (T::from_count(self.dims[a]) - T::one()) * half * self.spacing[a]
        }))
    }

    /// Nearest voxel index to a world point, or `None` if it rounds outside the grid.
    pub fn nearest_index(&self, p: &Point3<T>) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.spacing[a]).round();
            if !(f >= T::zero()) || f > T::from_count(self.dims[a] - 1) {
                return None;
            }
            out[a] = f.as_f64() as usize;
        }
        Some(out)
    }

    /// World-space box covered by the voxel cells (centers ± half a spacing).
    pub fn world_bounds(&self) -> (Point3<T>, Point3<T>) {
        let half = T::lit(0.5);
        let lo = Point3::from([0, 1, 2].map(|a| self.origin[a] - half * self.spacing[a]));
        let hi = Point3::from([0, 1, 2].map(|a| {
            self.origin[a] + (T::from_count(self.dims[a]) - half) * self.spacing[a]
        }));
        (lo, hi)
    }

    #[inline]
    pub fn voxel_volume(&self) -> T {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    pub(crate) fn ensure_same(&self, other: &Self) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "dims {:?} spacing {:?} origin {:?} vs dims {:?} spacing {:?} origin {:?}",
                self.dims, self.spacing, self.origin, other.dims, other.spacing, other.origin
            )))
        }
    }
}

/// Dense grid of signed 16-bit grey levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume<T: Real> {
    geometry: GridGeometry<T>,
    data: Vec<i16>,
}

impl<T: Real> ScalarVolume<T> {
    pub fn new(geometry: GridGeometry<T>, data: Vec<i16>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.len() {
            return Err(Error::Geometry(format!(
                "data holds {} values, geometry needs {}",
                data.len(),
                geometry.len()
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn from_fn(geometry: GridGeometry<T>, mut f: impl FnMut([usize; 3]) -> i16) -> Self {
        let data = (0..geometry.len()).map(|idx| f(geometry.decode(idx))).collect();
        Self { geometry, data }
    }

    #[inline]
    pub fn geometry(&self) -> &GridGeometry<T> {
        &self.geometry
    }

    #[inline]
    pub fn data(&self) -> &[i16] {
        &self.data
    }

    #[inline]
    pub fn get(&self, index: [usize; 3]) -> i16 {
        self.data[self.geometry.linear_index(index)]
    }

    pub fn min_max(&self) -> (i16, i16) {
        self.data
            .iter()
            .fold((i16::MAX, i16::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn into_data(self) -> Vec<i16> {
        self.data
    }
}

/// Dense boolean occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask<T: Real> {
    geometry: GridGeometry<T>,
    bits: Vec<bool>,
}

impl<T: Real> BinaryMask<T> {
    pub fn new(geometry: GridGeometry<T>, bits: Vec<bool>) -> Result<Self> {
        geometry.validate()?;
        if bits.len() != geometry.len() {
            return Err(Error::Geometry(format!(
                "mask holds {} values, geometry needs {}",
                bits.len(),
                geometry.len()
            )));
        }
        Ok(Self { geometry, bits })
    }

    pub fn empty(geometry: GridGeometry<T>) -> Self {
        let n = geometry.len();
        Self { geometry, bits: vec![false; n] }
    }

    pub fn from_fn(geometry: GridGeometry<T>, mut f: impl FnMut([usize; 3]) -> bool) -> Self {
        let bits = (0..geometry.len()).map(|idx| f(geometry.decode(idx))).collect();
        Self { geometry, bits }
    }

    #[inline]
    pub fn geometry(&self) -> &GridGeometry<T> {
        &self.geometry
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, index: [usize; 3]) -> bool {
        self.bits[self.geometry.linear_index(index)]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        Self { geometry: self.geometry, bits: self.bits.iter().map(|b| !b).collect() }
    }

    /// Iterator over linear indices of foreground voxels, ascending.
    pub fn foreground_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter_map(|(i, &b)| b.then_some(i))
    }

    /// Shift the occupancy by a whole number of voxels; voxels shifted in from
    /// outside the grid are background. Geometry is unchanged.
    pub fn shifted(&self, offset: [isize; 3]) -> Self {
        let d = self.geometry.dims;
        Self::from_fn(self.geometry, |[i, j, k]| {
            let src = [
                i as isize - offset[0],
                j as isize - offset[1],
                k as isize - offset[2],
            ];
            if (0..3).all(|a| src[a] >= 0 && (src[a] as usize) < d[a]) {
                self.get([src[0] as usize, src[1] as usize, src[2] as usize])
            } else {
                false
            }
        })
    }

    /// Lift to a scalar volume with the given grey levels.
    pub fn to_volume(&self, background: i16, foreground: i16) -> ScalarVolume<T> {
        ScalarVolume {
            geometry: self.geometry,
            data: self.bits.iter().map(|&b| if b { foreground } else { background }).collect(),
        }
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }
}

/// Fraction of voxels that are foreground.
pub fn foreground_fraction<T: Real>(mask: &BinaryMask<T>) -> f64 {
    mask.count() as f64 / mask.bits.len() as f64
}
