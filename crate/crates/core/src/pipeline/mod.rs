//! The end-to-end evaluation run: reference and input acquisition,
//! segmentation, voxel-grid alignment, voxel metrics, surface extraction,
//! registration and surface metrics.
//!
//! The stage helpers are public so that single-step tools compute exactly what
//! the full run computes.

mod config;
mod report;

pub use config::{
    CoarseAlign, InputPhantom, InputSource, OutputConfig, PhantomKind, PipelineConfig, ReferencePhantom,
    ReferenceSource, Shape, SmoothingConfig,
};
pub use report::{AlignmentDiagnostics, MetricsReport, RegistrationDiagnostics, SegmentationDiagnostics, StageDiagnostics};

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use nalgebra::{Point3, Vector3};
use serde::Serialize;

use crate::align::{alignment_residual, apply_rigid_to_mask, kabsch_umeyama, pca_landmarks, RigidTransform};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{surface_metrics, voxel_metrics, SurfaceMetrics};
use crate::registration::{mesh_to_pointcloud, register, RegistrationConfig, TwoStageResult};
use crate::segmentation::{largest_component, segment, Connectivity, Segmentation, SegmentationConfig};
use crate::surface::{laplacian_smooth, marching_cubes, TriangleMesh};
use crate::volume::{foreground_fraction, voxelize_mesh, BinaryMask, GridGeometry, ScalarVolume};

pub const STAGES: [&str; 11] = [
    "config",
    "input",
    "reference",
    "segmentation",
    "voxel_alignment",
    "voxel_metrics",
    "surface_extraction",
    "smoothing",
    "registration",
    "surface_metrics",
    "output",
];

/// Mean world position of the foreground voxel centers.
pub fn foreground_centroid(mask: &BinaryMask<f64>) -> Result<Point3<f64>> {
    let g = mask.geometry();
    let mut n = 0usize;
    let mut s = Vector3::zeros();
    for i in mask.foreground_indices() {
        s += g.world(g.decode(i)).coords;
        n += 1;
    }
    if n == 0 {
        return Err(Error::RankDeficient { rank: 0 });
    }
    Ok(Point3::from(s / n as f64))
}

/// The reference model as a mesh: loaded from file, or generated at the
/// center of `grid`.
pub fn reference_mesh(source: &ReferenceSource, grid: &GridGeometry<f64>) -> Result<TriangleMesh<f64>> {
    match source {
        ReferenceSource::Mesh(p) => io::read_mesh(p),
        ReferenceSource::Phantom(r) => r.shape().mesh(r.subdivisions, grid.center()),
    }
}

pub fn input_volume(source: &InputSource) -> Result<ScalarVolume<f64>> {
    match source {
        InputSource::Volume(p) => io::read_scalar_volume(p),
        InputSource::Phantom(p) => p.generate(),
    }
}

/// Outcome of aligning a segmented mask onto the reference grid.
#[derive(Debug, Clone)]
pub struct VoxelAlignment {
    pub aligned: BinaryMask<f64>,
    pub diagnostics: AlignmentDiagnostics,
}

/// Coarse transform about the moving foreground centroid, then a landmark
/// correction from PCA landmarks of the coarsely placed mask to those of the
/// reference. The moving mask is resampled once, under the combined transform.
pub fn align_masks(moving: &BinaryMask<f64>, reference: &BinaryMask<f64>, coarse: &CoarseAlign) -> Result<VoxelAlignment> {
    let pivot = foreground_centroid(moving)?;
    let rot = RigidTransform::from_euler_deg(coarse.euler_deg, Vector3::zeros());
    let coarse_t = RigidTransform::about(*rot.rotation(), &pivot, Vector3::from(coarse.translation_mm))?;
    let placed = apply_rigid_to_mask(moving, &coarse_t, reference.geometry());
    // Extremal landmarks are taken from the main body only; isolated
    // misclassified voxels would otherwise become the extremes.
    let src = pca_landmarks(&largest_component(&placed, Connectivity::TwentySix))?;
    let dst = pca_landmarks(&largest_component(reference, Connectivity::TwentySix))?;
    let landmark = kabsch_umeyama(&src, &dst)?;
    let combined = landmark.compose(&coarse_t);
    let aligned = apply_rigid_to_mask(moving, &combined, reference.geometry());
    let residual = alignment_residual(&landmark, &src.points, &dst.points);
    Ok(VoxelAlignment {
        aligned,
        diagnostics: AlignmentDiagnostics {
            pivot: "foreground_centroid".into(),
            coarse: coarse_t,
            landmark,
            combined,
            landmark_rmse_mm: (residual / src.points.len() as f64).sqrt(),
            landmarks_isotropic: src.isotropic || dst.isotropic,
        },
    })
}

/// Marching-cubes surface of a mask, optionally smoothed.
pub fn extract_surface(mask: &BinaryMask<f64>, smoothing: &SmoothingConfig) -> Result<TriangleMesh<f64>> {
    let mesh = marching_cubes(mask, None);
    if mesh.is_empty() {
        return Err(Error::InvalidMesh("mask has no surface (empty or touching nothing but the border)".into()));
    }
    if smoothing.enabled {
        laplacian_smooth(&mesh, smoothing.lambda, smoothing.iterations)
    } else {
        Ok(mesh)
    }
}

/// Registers the reconstructed surface onto the reference surface and measures
/// the remaining distances.
pub fn register_surfaces(
    recon: &TriangleMesh<f64>,
    reference: &TriangleMesh<f64>,
    config: &RegistrationConfig,
) -> Result<(TwoStageResult<f64>, usize, usize)> {
    let src = mesh_to_pointcloud(recon)?;
    let dst = mesh_to_pointcloud(reference)?;
    Ok((register(&src, &dst, config)?, src.len(), dst.len()))
}

pub fn measure_surfaces(
    recon: &TriangleMesh<f64>,
    reference: &TriangleMesh<f64>,
    transform: &RigidTransform<f64>,
) -> Result<SurfaceMetrics<f64>> {
    let src = mesh_to_pointcloud(recon)?.transformed(transform);
    let dst = mesh_to_pointcloud(reference)?;
    surface_metrics(src.points(), dst.points())
}

fn segmentation_diagnostics(s: &Segmentation<f64>) -> SegmentationDiagnostics {
    SegmentationDiagnostics {
        threshold: s.threshold,
        gmm_converged: s.model.as_ref().map(|m| m.converged),
        gmm_iterations: s.model.as_ref().map(|m| m.log_likelihood_trace.len().saturating_sub(1)),
        foreground_fraction: foreground_fraction(&s.mask),
    }
}

struct Clock {
    timing: BTreeMap<String, f64>,
}

impl Clock {
    fn stage<R>(&mut self, name: &'static str, f: impl FnOnce() -> Result<R>) -> Result<R> {
        let t0 = Instant::now();
        let out = f().map_err(|e| e.at_stage(name));
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        log::info!("stage {name}: {} in {ms:.1} ms", if out.is_ok() { "done" } else { "failed" });
        self.timing.insert(name.to_string(), ms);
        out
    }
}

#[derive(Serialize)]
struct TransformDump<'a> {
    alignment: &'a AlignmentDiagnostics,
    registration: &'a RegistrationDiagnostics,
}

struct Intermediates {
    input: ScalarVolume<f64>,
    reference_mesh: TriangleMesh<f64>,
    reference_mask: BinaryMask<f64>,
    segmented: BinaryMask<f64>,
    aligned: BinaryMask<f64>,
    recon_surface: TriangleMesh<f64>,
    reference_surface: TriangleMesh<f64>,
}

fn dump(dir: &Path, x: &Intermediates, report: &MetricsReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_scalar_volume(&x.input, &dir.join("input.json"))?;
    io::write_mesh(&x.reference_mesh, &dir.join("reference_model.ply"))?;
    io::write_mask(&x.reference_mask, &dir.join("reference_mask.json"))?;
    io::write_mask(&x.segmented, &dir.join("segmented_mask.json"))?;
    io::write_mask(&x.aligned, &dir.join("aligned_mask.json"))?;
    io::write_mesh(&x.recon_surface, &dir.join("recon_surface.ply"))?;
    io::write_mesh(&x.reference_surface, &dir.join("reference_surface.ply"))?;
    let t = TransformDump { alignment: &report.alignment, registration: &report.registration };
    std::fs::write(dir.join("transforms.json"), serde_json::to_string_pretty(&t)? + "\n")?;
    Ok(())
}

/// Runs every stage and, when the config names them, writes the report and
/// intermediates. Errors carry the failing stage's name; the report file is
/// written only after every stage has succeeded.
pub fn run_pipeline(config: &PipelineConfig) -> Result<MetricsReport> {
    let mut clock = Clock { timing: BTreeMap::new() };
    clock.stage("config", || config.validate())?;
    let input = clock.stage("input", || input_volume(&config.input))?;
    let grid = *input.geometry();
    let (ref_mesh, ref_mask) = clock.stage("reference", || {
        let mesh = reference_mesh(&config.reference, &grid)?;
        let mask = voxelize_mesh(&mesh, &grid)?;
        Ok((mesh, mask))
    })?;
    let seg = clock.stage("segmentation", || segment(&input, &config.segmentation))?;
    let alignment = clock.stage("voxel_alignment", || align_masks(&seg.mask, &ref_mask, &config.coarse_align))?;
    let voxel = clock.stage("voxel_metrics", || voxel_metrics(&alignment.aligned, &ref_mask))?;
    let no_smoothing = SmoothingConfig { enabled: false, ..config.smoothing };
    let (recon_surface, reference_surface) = clock.stage("surface_extraction", || {
        Ok((extract_surface(&alignment.aligned, &no_smoothing)?, extract_surface(&ref_mask, &no_smoothing)?))
    })?;
    let (recon_surface, reference_surface) = clock.stage("smoothing", || {
        if !config.smoothing.enabled {
            return Ok((recon_surface, reference_surface));
        }
        let s = &config.smoothing;
        Ok((
            laplacian_smooth(&recon_surface, s.lambda, s.iterations)?,
            laplacian_smooth(&reference_surface, s.lambda, s.iterations)?,
        ))
    })?;
    let (reg, n_src, n_dst) =
        clock.stage("registration", || register_surfaces(&recon_surface, &reference_surface, &config.registration))?;
    let surface = clock.stage("surface_metrics", || {
        measure_surfaces(&recon_surface, &reference_surface, &reg.fine.transform)
    })?;

    let geometry = match &config.reference {
        ReferenceSource::Mesh(p) => p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        ReferenceSource::Phantom(r) => r.kind.name().to_string(),
    };
    let mut report = MetricsReport {
        geometry,
        segmenter: config.segmentation.method,
        foreground_fraction: foreground_fraction(&ref_mask),
        voxel,
        surface,
        segmentation: segmentation_diagnostics(&seg),
        alignment: alignment.diagnostics,
        registration: RegistrationDiagnostics {
            ransac: (&reg.coarse).into(),
            icp: (&reg.fine).into(),
            transform: reg.fine.transform,
            icp_objective_trace: reg.fine.objective_trace.clone(),
            source_points: n_src,
            target_points: n_dst,
            source_points_downsampled: reg.source_points_downsampled,
            target_points_downsampled: reg.target_points_downsampled,
        },
        config: config.effective(),
        timing_ms: BTreeMap::new(),
    };
    let intermediates = Intermediates {
        input,
        reference_mesh: ref_mesh,
        reference_mask: ref_mask,
        segmented: seg.mask,
        aligned: alignment.aligned,
        recon_surface,
        reference_surface,
    };
    report.timing_ms = clock.timing.clone();
    clock.stage("output", || {
        if let Some(dir) = &config.outputs.intermediates {
            dump(dir, &intermediates, &report)?;
        }
        if let Some(path) = &config.outputs.report {
            io::write_report(std::slice::from_ref(&report), path, config.outputs.format)?;
        }
        Ok(())
    })?;
    Ok(report)
}

/// Segmentation entry point shared with single-step tools.
pub fn segment_volume(volume: &ScalarVolume<f64>, config: &SegmentationConfig) -> Result<(BinaryMask<f64>, SegmentationDiagnostics)> {
    let s = segment(volume, config)?;
    let d = segmentation_diagnostics(&s);
    Ok((s.mask, d))
}
