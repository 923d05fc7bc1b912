//! Voxel-overlap and surface-distance accuracy metrics.
//!
//! Point-set metrics take plain slices of points; a
//! [`PointCloud`](crate::registration::PointCloud) exposes its points through
//! `points()`.

mod surface;
mod voxel;

pub use surface::{average_hausdorff, chamfer, nn_distances, rmse_surface, surface_metrics, SurfaceMetrics};
pub use voxel::{
    classification_metrics, confusion_counts, dice, jaccard, volume_similarity, voxel_metrics, ConfusionCounts,
    VoxelMetrics,
};
