use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::volume::{BinaryMask, GridGeometry, ScalarVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Int16,
    Uint8,
}

impl Dtype {
    pub fn width(self) -> u64 {
        match self {
            Dtype::Int16 => 2,
            Dtype::Uint8 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ByteOrder {
    Little,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Scalar,
    Mask,
}

/// The `<name>.json` half of a volume file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub origin_mm: [f64; 3],
    pub dtype: Dtype,
    pub byte_order: ByteOrder,
    pub kind: VolumeKind,
}

impl VolumeHeader {
    fn for_geometry<T: Real>(g: &GridGeometry<T>, dtype: Dtype, kind: VolumeKind) -> Self {
        Self {
            dims: g.dims,
            spacing_mm: g.spacing.map(|s| s.as_f64()),
            origin_mm: g.origin.map(|o| o.as_f64()),
            dtype,
            byte_order: ByteOrder::Little,
            kind,
        }
    }

    pub fn geometry<T: Real>(&self) -> Result<GridGeometry<T>> {
        GridGeometry::new(self.dims, self.spacing_mm.map(T::lit), self.origin_mm.map(T::lit))
    }

    /// Payload size in bytes implied by the header.
    pub fn payload_len(&self) -> Result<u64> {
        self.dims
            .iter()
            .try_fold(self.dtype.width(), |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| Error::Geometry(format!("payload size of dims {:?} overflows", self.dims)))
    }
}

/// Either kind of volume file.
#[derive(Debug, Clone, PartialEq)]
pub enum VolumeFile<T: Real> {
    Scalar(ScalarVolume<T>),
    Mask(BinaryMask<T>),
}

impl<T: Real> VolumeFile<T> {
    pub fn geometry(&self) -> &GridGeometry<T> {
        match self {
            VolumeFile::Scalar(v) => v.geometry(),
            VolumeFile::Mask(m) => m.geometry(),
        }
    }
}

/// The payload path paired with a header path: same stem, `.raw` extension.
pub fn raw_path(header_path: &Path) -> PathBuf {
    header_path.with_extension("raw")
}

pub fn read_header(header_path: &Path) -> Result<VolumeHeader> {
    let text = fs::read_to_string(header_path)?;
    let h: VolumeHeader = serde_json::from_str(&text)?;
    if h.kind == VolumeKind::Mask && h.dtype != Dtype::Uint8 {
        return Err(Error::Format { format: "volume", reason: "mask payloads must be uint8".into() });
    }
    h.geometry::<f64>()?;
    Ok(h)
}

/// Reads a header and its sibling payload.
pub fn read_volume<T: Real>(header_path: &Path) -> Result<VolumeFile<T>> {
    let h = read_header(header_path)?;
    let geometry = h.geometry::<T>()?;
    let raw = raw_path(header_path);
    let expected = h.payload_len()?;
    // check before reading so a bogus header cannot trigger a huge allocation
    let actual = fs::metadata(&raw)?.len();
    if actual != expected {
        return Err(Error::SizeMismatch { expected, actual });
    }
    let bytes = fs::read(&raw)?;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch { expected, actual: bytes.len() as u64 });
    }
    match h.kind {
        VolumeKind::Mask => {
            if let Some(offset) = bytes.iter().position(|&b| b > 1) {
                return Err(Error::InvalidMaskValue { value: bytes[offset], offset });
            }
            Ok(VolumeFile::Mask(BinaryMask::new(geometry, bytes.iter().map(|&b| b == 1).collect())?))
        }
        VolumeKind::Scalar => {
            let data = match h.dtype {
                Dtype::Int16 => bytes.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect(),
                Dtype::Uint8 => bytes.iter().map(|&b| b as i16).collect(),
            };
            Ok(VolumeFile::Scalar(ScalarVolume::new(geometry, data)?))
        }
    }
}

pub fn read_scalar_volume<T: Real>(header_path: &Path) -> Result<ScalarVolume<T>> {
    match read_volume(header_path)? {
        VolumeFile::Scalar(v) => Ok(v),
        VolumeFile::Mask(_) => Err(Error::Format {
            format: "volume",
            reason: format!("{} holds a mask, expected a scalar volume", header_path.display()),
        }),
    }
}

pub fn read_mask<T: Real>(header_path: &Path) -> Result<BinaryMask<T>> {
    match read_volume(header_path)? {
        VolumeFile::Mask(m) => Ok(m),
        VolumeFile::Scalar(_) => Err(Error::Format {
            format: "volume",
            reason: format!("{} holds a scalar volume, expected a mask", header_path.display()),
        }),
    }
}

fn write_pair(header_path: &Path, header: &VolumeHeader, payload: &[u8]) -> Result<()> {
    let mut f = fs::File::create(raw_path(header_path))?;
    f.write_all(payload)?;
    f.flush()?;
    let mut text = serde_json::to_string_pretty(header)?;
    text.push('\n');
    fs::write(header_path, text)?;
    Ok(())
}

/// Writes `<stem>.json` and `<stem>.raw` (int16, little-endian).
pub fn write_scalar_volume<T: Real>(volume: &ScalarVolume<T>, header_path: &Path) -> Result<()> {
    let header = VolumeHeader::for_geometry(volume.geometry(), Dtype::Int16, VolumeKind::Scalar);
    let payload: Vec<u8> = volume.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    write_pair(header_path, &header, &payload)
}

/// Writes `<stem>.json` and `<stem>.raw` (uint8 zeros and ones).
pub fn write_mask<T: Real>(mask: &BinaryMask<T>, header_path: &Path) -> Result<()> {
    let header = VolumeHeader::for_geometry(mask.geometry(), Dtype::Uint8, VolumeKind::Mask);
    let payload: Vec<u8> = mask.bits().iter().map(|&b| b as u8).collect();
    write_pair(header_path, &header, &payload)
}

pub fn write_volume<T: Real>(volume: &VolumeFile<T>, header_path: &Path) -> Result<()> {
    match volume {
        VolumeFile::Scalar(v) => write_scalar_volume(v, header_path),
        VolumeFile::Mask(m) => write_mask(m, header_path),
    }
}
