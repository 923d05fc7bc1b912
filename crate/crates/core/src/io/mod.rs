//! File formats: JSON-header volumes with a raw little-endian payload, binary
//! STL and ASCII PLY meshes, and JSON/CSV metric reports.

mod mesh;
mod report;
mod volume;

pub use mesh::{read_mesh, read_ply, read_stl, write_mesh, write_ply, write_stl};
pub use report::{read_report_json, write_report, ReportFormat, CSV_COLUMNS};
pub use volume::{
    raw_path, read_header, read_mask, read_scalar_volume, read_volume, write_mask, write_scalar_volume, write_volume,
    ByteOrder, Dtype, VolumeFile, VolumeHeader, VolumeKind,
};
