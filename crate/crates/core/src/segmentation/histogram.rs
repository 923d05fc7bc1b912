use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::ScalarVolume;

pub const BINS: usize = 256;

/// 256 uniform bins over the observed intensity range.
///
/// Bins are closed on the right: bin `c` holds intensities in
/// `(edges[c], edges[c + 1]]`, except bin 0, which also holds `edges[0]`. With
/// this convention a cut at `edges[c]` separates exactly the values `<= edges[c]`
/// from those `> edges[c]`, matching the `I > t` foreground rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram<T: Real> {
    edges: Vec<T>,
    counts: Vec<u64>,
    degenerate: bool,
}

impl<T: Real> Histogram<T> {
    /// Histogram from explicit counts over a `[min, max]` range.
    pub fn from_counts(min: T, max: T, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != BINS {
            return Err(Error::InvalidParameter(format!("need {} counts, got {}", BINS, counts.len())));
        }
        if !(max > min) {
            return Err(Error::InvalidParameter("histogram range must satisfy min < max".into()));
        }
        Ok(Self { edges: uniform_edges(min, max), counts, degenerate: false })
    }

    #[inline]
    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    #[inline]
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// True when every sample had the same value.
    #[inline]
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin holding intensity `v`, or `None` outside the histogram range.
    pub fn bin_of(&self, v: T) -> Option<usize> {
        if v < self.edges[0] || v > self.edges[BINS] {
            return None;
        }
        // first c with v <= edges[c + 1]
        let c = self.edges[1..].partition_point(|&e| e < v);
        Some(c.min(BINS - 1))
    }
}

fn uniform_edges<T: Real>(min: T, max: T) -> Vec<T> {
    let width = max - min;
    let n = T::from_count(BINS);
    let mut edges: Vec<T> = (0..=BINS).map(|c| min + width * T::from_count(c) / n).collect();
    edges[BINS] = max;
    edges
}

/// Intensity histogram of a volume.
pub fn histogram<T: Real>(volume: &ScalarVolume<T>) -> Histogram<T> {
    let (lo, hi) = volume.min_max();
    let mut counts = vec![0u64; BINS];
    if lo == hi {
        counts[0] = volume.data().len() as u64;
        let base = T::lit(lo as f64);
        return Histogram {
            edges: (0..=BINS).map(|c| base + T::from_count(c)).collect(),
            counts,
            degenerate: true,
        };
    }
    let edges = uniform_edges(T::lit(lo as f64), T::lit(hi as f64));
    // bin lookup for every integer in [lo, hi], using exact edge comparisons
    let span = (hi as i32 - lo as i32) as usize + 1;
    let mut lut = vec![0u16; span];
    let mut c = 0usize;
    for (n, slot) in lut.iter_mut().enumerate() {
        let v = T::lit(lo as f64 + n as f64);
        while c < BINS - 1 && v > edges[c + 1] {
            c += 1;
        }
        *slot = c as u16;
    }
    for &v in volume.data() {
        counts[lut[(v as i32 - lo as i32) as usize] as usize] += 1;
    }
    Histogram { edges, counts, degenerate: false }
}

/// Index `c` in `1..BINS` of the Otsu cut; class 0 is bins `< c`.
///
/// Maximizes the between-class variance `n0 n1 (mu0 - mu1)^2` over all 255
/// cuts in exact rational arithmetic (bin indices stand in for intensities, an
/// affine change that leaves the argmax unchanged). Ties go to the lowest cut.
pub fn otsu_cut<T: Real>(h: &Histogram<T>) -> Result<usize> {
    if h.degenerate {
        return Err(Error::DegenerateHistogram("constant input has a single intensity".into()));
    }
    let occupied = h.counts.iter().filter(|&&c| c > 0).count();
    if occupied < 2 {
        return Err(Error::DegenerateHistogram(format!("{} occupied bins, need at least 2", occupied)));
    }
    let total_n = BigInt::from(h.total());
    let total_s: BigInt = h
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| BigInt::from(c) * BigInt::from(i))
        .sum();
    let mut n0 = BigInt::from(0u8);
    let mut s0 = BigInt::from(0u8);
    let mut best: Option<(usize, BigRational)> = None;
    for cut in 1..BINS {
        n0 += BigInt::from(h.counts[cut - 1]);
        s0 += BigInt::from(h.counts[cut - 1]) * BigInt::from(cut - 1);
        let n1 = &total_n - &n0;
        if n0 == BigInt::from(0u8) || n1 == BigInt::from(0u8) {
            continue;
        }
        let s1 = &total_s - &s0;
        let diff = &s0 * &n1 - &s1 * &n0;
        let score = BigRational::new(&diff * &diff, &n0 * &n1);
        if best.as_ref().is_none_or(|(_, b)| score > *b) {
            best = Some((cut, score));
        }
    }
    Ok(best.expect("two occupied bins admit a separating cut").0)
}

/// Otsu threshold: the bin edge of the optimal cut. Foreground is `I > t`.
pub fn otsu_threshold<T: Real>(h: &Histogram<T>) -> Result<T> {
    Ok(h.edges[otsu_cut(h)?])
}
