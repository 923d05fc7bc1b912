//! Accuracy evaluation for volumetric reconstruction pipelines.
//!
//! The crate covers the whole chain from a scalar volume to accuracy numbers:
//! segmentation ([`segmentation`]), landmark-based rigid alignment of voxel grids
//! ([`align`]), isosurface extraction and smoothing ([`surface`]), two-stage
//! point-cloud registration ([`registration`]) and voxel/surface metrics
//! ([`metrics`]). Synthetic phantoms ([`volume`]) provide ground truth, and
//! [`pipeline`] wires everything into one reproducible run.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`). The aliases at the
//! crate root fix the scalar to `f64`; `*F32` aliases are provided for
//! single precision.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod error;
pub mod io;
mod scalar;
pub mod metrics;
pub mod pipeline;
pub mod registration;
pub mod segmentation;
pub mod spatial;
pub mod surface;
pub mod volume;

pub use error::{Error, Result};
pub use metrics::VoxelMetrics;
pub use pipeline::{run_pipeline, MetricsReport, PipelineConfig};
pub use scalar::Real;

pub type GridGeometry = volume::GridGeometry<f64>;
pub type ScalarVolume = volume::ScalarVolume<f64>;
pub type BinaryMask = volume::BinaryMask<f64>;
pub type TriangleMesh = surface::TriangleMesh<f64>;
pub type RigidTransform = align::RigidTransform<f64>;
pub type LandmarkSet = align::LandmarkSet<f64>;
pub type SurfaceMetrics = metrics::SurfaceMetrics<f64>;
pub type KdTree = spatial::KdTree<f64>;
pub type PointCloud = registration::PointCloud<f64>;
pub type RegistrationResult = registration::RegistrationResult<f64>;

pub type GridGeometryF32 = volume::GridGeometry<f32>;
pub type TriangleMeshF32 = surface::TriangleMesh<f32>;
pub type RigidTransformF32 = align::RigidTransform<f32>;
pub type PointCloudF32 = registration::PointCloud<f32>;
