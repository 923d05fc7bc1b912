use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::{BinaryMask, ScalarVolume};

/// Voxel adjacency used by flood fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    #[default]
    Six,
    TwentySix,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            6 => Ok(Self::Six),
            26 => Ok(Self::TwentySix),
            _ => Err(format!("connectivity must be 6 or 26, got {v}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::TwentySix => 26,
        }
    }
}

impl Connectivity {
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let l1 = dx.abs() + dy.abs() + dz.abs();
                    if l1 == 0 || (self == Self::Six && l1 != 1) {
                        continue;
                    }
                    out.push([dx, dy, dz]);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionGrowConfig {
    pub seeds: Vec<[usize; 3]>,
    pub tolerance: f64,
    #[serde(default)]
    pub connectivity: Connectivity,
}

/// Foreground iff `lower < I <= upper`; `upper = None` means unbounded.
pub fn threshold_segment<T: Real>(volume: &ScalarVolume<T>, lower: T, upper: Option<T>) -> Result<BinaryMask<T>> {
    if let Some(u) = upper {
        if lower > u {
            return Err(Error::InvalidParameter(format!("lower threshold {} exceeds upper {}", lower, u)));
        }
    }
    let bits: Vec<bool> = volume
        .data()
        .par_iter()
        .map(|&v| {
            let x = T::lit(v as f64);
            x > lower && upper.is_none_or(|u| x <= u)
        })
        .collect();
    BinaryMask::new(*volume.geometry(), bits)
}

/// Breadth-first flood fill from every seed. A voxel joins when its intensity
/// lies within `tolerance` of the mean seed intensity, which is computed once
/// up front. Seeds that fail the criterion themselves contribute nothing.
pub fn region_grow<T: Real>(volume: &ScalarVolume<T>, config: &RegionGrowConfig) -> Result<BinaryMask<T>> {
    let g = *volume.geometry();
    if config.seeds.is_empty() {
        return Err(Error::InvalidParameter("region growing needs at least one seed".into()));
    }
    if !(config.tolerance >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be nonnegative, got {}", config.tolerance)));
    }
    for &s in &config.seeds {
        if !g.contains(s) {
            return Err(Error::SeedOutOfBounds { index: s, dims: g.dims });
        }
    }
    let seed_sum: f64 = config.seeds.iter().map(|&s| volume.get(s) as f64).sum();
    let mu = seed_sum / config.seeds.len() as f64;
    let tol = config.tolerance;
    let admit = |v: i16| (v as f64 - mu).abs() <= tol;

    let mut bits = vec![false; g.len()];
    let mut queue = VecDeque::new();
    for &s in &config.seeds {
        let idx = g.linear_index(s);
        if !admit(volume.data()[idx]) {
            log::warn!("region growing: seed {:?} fails the homogeneity test and is skipped", s);
            continue;
        }
        if !bits[idx] {
            bits[idx] = true;
            queue.push_back(s);
        }
    }
    let offsets = config.connectivity.offsets();
    while let Some(p) = queue.pop_front() {
        for off in &offsets {
            let q = [
                p[0].wrapping_add_signed(off[0]),
                p[1].wrapping_add_signed(off[1]),
                p[2].wrapping_add_signed(off[2]),
            ];
            if !g.contains(q) {
                continue;
            }
            let idx = g.linear_index(q);
            if !bits[idx] && admit(volume.data()[idx]) {
                bits[idx] = true;
                queue.push_back(q);
            }
        }
    }
    BinaryMask::new(g, bits)
}

/// Keeps the largest connected foreground component. Ties go to the
/// component containing the lowest linear index.
pub fn largest_component<T: Real>(mask: &BinaryMask<T>, connectivity: Connectivity) -> BinaryMask<T> {
    let g = *mask.geometry();
    let bits = mask.bits();
    let offsets = connectivity.offsets();
    let mut label = vec![0u32; g.len()];
    let (mut best, mut best_size, mut next) = (0u32, 0usize, 0u32);
    let mut queue = VecDeque::new();
    for start in 0..g.len() {
        if !bits[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(g.decode(start));
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            for off in &offsets {
                let q = [
                    p[0].wrapping_add_signed(off[0]),
                    p[1].wrapping_add_signed(off[1]),
                    p[2].wrapping_add_signed(off[2]),
                ];
                if !g.contains(q) {
                    continue;
                }
                let idx = g.linear_index(q);
                if bits[idx] && label[idx] == 0 {
                    label[idx] = next;
                    queue.push_back(q);
                }
            }
        }
        if size > best_size {
            (best, best_size) = (next, size);
        }
    }
    BinaryMask::from_fn(g, |ijk| best != 0 && label[g.linear_index(ijk)] == best)
}
