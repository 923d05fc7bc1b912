use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::align::RigidTransform;
use crate::metrics::{SurfaceMetrics, VoxelMetrics};
use crate::registration::RegistrationResult;
use crate::segmentation::Method;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationDiagnostics {
    /// Intensity cut for Otsu and GMM; null for region growing.
    pub threshold: Option<f64>,
    pub gmm_converged: Option<bool>,
    pub gmm_iterations: Option<usize>,
    pub foreground_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentDiagnostics {
    /// What the coarse rotation pivots about.
    pub pivot: String,
    pub coarse: RigidTransform<f64>,
    /// Landmark (Kabsch-Umeyama) correction applied after the coarse step.
    pub landmark: RigidTransform<f64>,
    /// `landmark ∘ coarse`, the transform actually used to resample.
    pub combined: RigidTransform<f64>,
    /// RMS distance between corresponding landmarks after correction (mm).
    pub landmark_rmse_mm: f64,
    pub landmarks_isotropic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub fitness: f64,
    pub inlier_rmse_mm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl From<&RegistrationResult<f64>> for StageDiagnostics {
    fn from(r: &RegistrationResult<f64>) -> Self {
        Self { fitness: r.fitness, inlier_rmse_mm: r.inlier_rmse, iterations: r.iterations_used, converged: r.converged }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationDiagnostics {
    pub ransac: StageDiagnostics,
    pub icp: StageDiagnostics,
    pub transform: RigidTransform<f64>,
    pub icp_objective_trace: Vec<f64>,
    pub source_points: usize,
    pub target_points: usize,
    pub source_points_downsampled: usize,
    pub target_points_downsampled: usize,
}

/// Every number produced by one pipeline run for one (geometry, segmenter)
/// pair. Undefined metrics are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub geometry: String,
    pub segmenter: Method,
    /// Foreground fraction of the reference mask.
    pub foreground_fraction: f64,
    #[serde(flatten)]
    pub voxel: VoxelMetrics,
    #[serde(flatten)]
    pub surface: SurfaceMetrics<f64>,
    pub segmentation: SegmentationDiagnostics,
    pub alignment: AlignmentDiagnostics,
    pub registration: RegistrationDiagnostics,
    /// Effective configuration, defaults filled in.
    pub config: PipelineConfig,
    /// Wall-clock time per stage in milliseconds.
    pub timing_ms: BTreeMap<String, f64>,
}

impl MetricsReport {
    /// Copy with timings cleared, for run-to-run comparison.
    pub fn without_timing(&self) -> Self {
        Self { timing_ms: BTreeMap::new(), ..self.clone() }
    }
}
