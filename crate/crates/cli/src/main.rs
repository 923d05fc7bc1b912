//! `ctrecon`: run the full evaluation pipeline from a JSON config, or one
//! stage at a time over volume, mask and mesh files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ctrecon::io::{self, ReportFormat};
use ctrecon::metrics::{voxel_metrics, VoxelMetrics};
use ctrecon::pipeline::{self, CoarseAlign, InputPhantom, PhantomKind, PipelineConfig, Shape, SmoothingConfig, StageDiagnostics};
use ctrecon::registration::RegistrationConfig;
use ctrecon::segmentation::{Method, SegmentationConfig};
use ctrecon::volume::{foreground_fraction, shell_mask, sphere_mask, voxelize_mesh, GridGeometry};
use ctrecon::{RigidTransform, SurfaceMetrics};

#[derive(Parser)]
#[command(name = "ctrecon", version, about = "Reconstruction accuracy toolkit: segmentation, alignment, registration, metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// JSON config (pipeline config for `run`, stage config elsewhere).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Directory for intermediate volumes, meshes and transforms (`run` only).
    #[arg(long, global = true)]
    dump_intermediates: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Sphere,
    Shell,
}

#[derive(Clone, Copy, ValueEnum)]
enum SegMethod {
    Otsu,
    Gmm,
    RegionGrowing,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline from `--config`.
    Run,
    /// Synthetic phantom volume, plus optional ground-truth mask and mesh.
    Phantom {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        radius_mm: f64,
        #[arg(long)]
        wall_mm: Option<f64>,
        #[arg(long, num_args = 3, required = true, value_names = ["NX", "NY", "NZ"])]
        dims: Vec<usize>,
        #[arg(long)]
        spacing_mm: f64,
        /// World position of voxel (0,0,0); defaults to centering the grid on the origin.
        #[arg(long, num_args = 3, allow_negative_numbers = true)]
        origin_mm: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1000.0, allow_negative_numbers = true)]
        fg_mean: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        bg_mean: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        #[arg(long)]
        mask_out: Option<PathBuf>,
        /// Generating surface (STL or PLY).
        #[arg(long)]
        mesh_out: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        subdivisions: u32,
    },
    /// Segment a scalar volume into a mask.
    Segment {
        #[arg(long)]
        input: PathBuf,
        /// Overrides the method in `--config`; required without one.
        #[arg(long, value_enum)]
        method: Option<SegMethod>,
    },
    /// Rasterize a closed mesh onto the grid of an existing volume.
    Voxelize {
        #[arg(long)]
        mesh: PathBuf,
        /// Volume or mask header whose grid is used.
        #[arg(long)]
        like: PathBuf,
    },
    /// Coarse plus landmark alignment of a mask onto a reference mask.
    Align {
        #[arg(long)]
        moving: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, num_args = 3, allow_negative_numbers = true, default_values_t = [0.0, 0.0, 0.0])]
        euler_deg: Vec<f64>,
        #[arg(long, num_args = 3, allow_negative_numbers = true, default_values_t = [0.0, 0.0, 0.0])]
        translation_mm: Vec<f64>,
        /// Where to write the alignment diagnostics as JSON.
        #[arg(long)]
        transform_out: Option<PathBuf>,
    },
    /// Marching-cubes surface of a mask.
    Extract {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        smooth_lambda: Option<f64>,
        #[arg(long, default_value_t = 10)]
        smooth_iterations: usize,
    },
    /// RANSAC + ICP registration of one surface onto another.
    Register {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Downsample voxel (mm) when no `--config` is given.
        #[arg(long)]
        voxel: Option<f64>,
    },
    /// Voxel metrics of a mask against a reference mask, plus surface metrics
    /// when both meshes are given.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, requires = "reference_mesh")]
        pred_mesh: Option<PathBuf>,
        #[arg(long, requires = "pred_mesh")]
        reference_mesh: Option<PathBuf>,
        /// Registration result (from `register`) applied to the predicted mesh.
        #[arg(long, requires = "pred_mesh")]
        registration: Option<PathBuf>,
    },
}

#[derive(Serialize, serde::Deserialize)]
struct RegisterOutput {
    ransac: StageDiagnostics,
    icp: StageDiagnostics,
    transform: RigidTransform,
    icp_objective_trace: Vec<f64>,
    source_points: usize,
    target_points: usize,
    source_points_downsampled: usize,
    target_points_downsampled: usize,
    config: RegistrationConfig,
}

#[derive(Serialize)]
struct EvaluateOutput {
    foreground_fraction: f64,
    #[serde(flatten)]
    voxel: VoxelMetrics,
    #[serde(flatten)]
    surface: Option<SurfaceMetrics>,
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> anyhow::Result<&'a PathBuf> {
    p.as_ref().with_context(|| format!("--{what} is required"))
}

fn read_json<T: serde::de::DeserializeOwned>(p: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    Ok(serde_json::from_str(&text).map_err(ctrecon::Error::from)?)
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text).map_err(ctrecon::Error::from)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn three<T: Copy>(v: &[T]) -> [T; 3] {
    [v[0], v[1], v[2]]
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Run => {
            let path = require(&g.config, "config")?;
            let mut cfg = PipelineConfig::load(path).map_err(|e| e.at_config())?;
            if let Some(s) = g.seed {
                cfg.override_seed(s);
            }
            if let Some(o) = &g.out {
                cfg.outputs.report = Some(o.clone());
            }
            if let Some(f) = g.format {
                cfg.outputs.format = f.into();
            }
            if let Some(d) = &g.dump_intermediates {
                cfg.outputs.intermediates = Some(d.clone());
            }
            let report = pipeline::run_pipeline(&cfg)?;
            if cfg.outputs.report.is_none() {
                emit_json(&[report], None)?;
            }
        }
        Command::Phantom {
            kind,
            radius_mm,
            wall_mm,
            dims,
            spacing_mm,
            origin_mm,
            fg_mean,
            bg_mean,
            noise_sigma,
            mask_out,
            mesh_out,
            subdivisions,
        } => {
            let out = require(&g.out, "out")?;
            let dims = three(&dims);
            let geometry = match origin_mm {
                Some(o) => GridGeometry::new(dims, [spacing_mm; 3], three(&o))?,
                None => GridGeometry::centered(dims, spacing_mm)?,
            };
            let kind = match kind {
                Kind::Sphere => PhantomKind::Sphere,
                Kind::Shell => PhantomKind::Shell,
            };
            let spec = InputPhantom {
                kind,
                radius_mm,
                wall_mm,
                geometry,
                fg_mean,
                bg_mean,
                noise_sigma,
                seed: g.seed.unwrap_or(0),
            };
            io::write_scalar_volume(&spec.generate()?, out)?;
            if let Some(m) = &mask_out {
                let mask = match wall_mm {
                    Some(w) => shell_mask(radius_mm, w, &geometry)?,
                    None => sphere_mask(radius_mm, &geometry)?,
                };
                io::write_mask(&mask, m)?;
            }
            if let Some(m) = &mesh_out {
                let shape = Shape { kind, radius_mm, wall_mm };
                io::write_mesh(&shape.mesh(subdivisions, geometry.center())?, m)?;
            }
        }
        Command::Segment { input, method } => {
            let out = require(&g.out, "out")?;
            let mut cfg: SegmentationConfig = match &g.config {
                Some(p) => read_json(p)?,
                None => SegmentationConfig::otsu(),
            };
            match (method, &g.config) {
                (Some(m), _) => {
                    cfg.method = match m {
                        SegMethod::Otsu => Method::Otsu,
                        SegMethod::Gmm => Method::Gmm,
                        SegMethod::RegionGrowing => Method::RegionGrowing,
                    }
                }
                (None, None) => bail!("segment needs --method or --config"),
                (None, Some(_)) => {}
            }
            if let Some(s) = g.seed {
                cfg.gmm.seed = s;
            }
            let vol = io::read_scalar_volume(&input)?;
            let (mask, diag) = pipeline::segment_volume(&vol, &cfg)?;
            io::write_mask(&mask, out)?;
            log::info!("segmentation: {}", serde_json::to_string(&diag)?);
        }
        Command::Voxelize { mesh, like } => {
            let out = require(&g.out, "out")?;
            let grid: GridGeometry<f64> = io::read_header(&like)?.geometry()?;
            io::write_mask(&voxelize_mesh(&io::read_mesh(&mesh)?, &grid)?, out)?;
        }
        Command::Align { moving, reference, euler_deg, translation_mm, transform_out } => {
            let out = require(&g.out, "out")?;
            let coarse = CoarseAlign { euler_deg: three(&euler_deg), translation_mm: three(&translation_mm) };
            let a = pipeline::align_masks(&io::read_mask(&moving)?, &io::read_mask(&reference)?, &coarse)?;
            io::write_mask(&a.aligned, out)?;
            if let Some(t) = &transform_out {
                emit_json(&a.diagnostics, Some(t))?;
            }
        }
        Command::Extract { mask, smooth_lambda, smooth_iterations } => {
            let out = require(&g.out, "out")?;
            let smoothing = match smooth_lambda {
                Some(lambda) => SmoothingConfig { enabled: true, lambda, iterations: smooth_iterations },
                None => SmoothingConfig::default(),
            };
            io::write_mesh(&pipeline::extract_surface(&io::read_mask(&mask)?, &smoothing)?, out)?;
        }
        Command::Register { source, target, voxel } => {
            let mut cfg: RegistrationConfig = match (&g.config, voxel) {
                (Some(p), _) => read_json(p)?,
                (None, Some(v)) => RegistrationConfig::with_voxel(v),
                (None, None) => bail!("register needs --voxel or --config"),
            };
            if let Some(s) = g.seed {
                cfg.ransac.seed = s;
            }
            let (r, ns, nt) = pipeline::register_surfaces(&io::read_mesh(&source)?, &io::read_mesh(&target)?, &cfg)?;
            let result = RegisterOutput {
                ransac: (&r.coarse).into(),
                icp: (&r.fine).into(),
                transform: r.fine.transform,
                icp_objective_trace: r.fine.objective_trace.clone(),
                source_points: ns,
                target_points: nt,
                source_points_downsampled: r.source_points_downsampled,
                target_points_downsampled: r.target_points_downsampled,
                config: cfg.effective(),
            };
            emit_json(&result, g.out.as_deref())?;
        }
        Command::Evaluate { pred, reference, pred_mesh, reference_mesh, registration } => {
            let reference: ctrecon::BinaryMask = io::read_mask(&reference)?;
            let voxel = voxel_metrics(&io::read_mask(&pred)?, &reference)?;
            let surface = match (&pred_mesh, &reference_mesh) {
                (Some(a), Some(b)) => {
                    let t = match &registration {
                        Some(p) => read_json::<RegisterOutput>(p)?.transform,
                        None => RigidTransform::identity(),
                    };
                    Some(pipeline::measure_surfaces(&io::read_mesh(a)?, &io::read_mesh(b)?, &t)?)
                }
                _ => None,
            };
            let result = EvaluateOutput { foreground_fraction: foreground_fraction(&reference), voxel, surface };
            match g.format.unwrap_or(Format::Json) {
                Format::Json => emit_json(&result, g.out.as_deref())?,
                Format::Csv => {
                    let v = serde_json::to_value(&result)?;
                    let obj = v.as_object().expect("struct serializes to an object");
                    let mut header = vec!["foreground_fraction", "tp", "tn", "fp", "fn"];
                    header.extend_from_slice(&io::CSV_COLUMNS[7..13]);
                    if surface.is_some() {
                        header.extend_from_slice(&io::CSV_COLUMNS[13..17]);
                    }
                    let cell = |k: &str| {
                        let x = obj.get(k).or_else(|| obj["counts"].get(k)).unwrap_or(&serde_json::Value::Null);
                        if x.is_null() {
                            String::new()
                        } else {
                            x.to_string()
                        }
                    };
                    let mut text = header.join(",") + "\n";
                    text += &(header.iter().map(|k| cell(k)).collect::<Vec<_>>().join(",") + "\n");
                    match &g.out {
                        Some(p) => std::fs::write(p, text).map_err(ctrecon::Error::from)?,
                        None => print!("{text}"),
                    }
                }
            }
        }
    }
    Ok(())
}

trait AtConfig {
    fn at_config(self) -> ctrecon::Error;
}

impl AtConfig for ctrecon::Error {
    fn at_config(self) -> ctrecon::Error {
        ctrecon::Error::Stage { stage: "config", source: Box::new(self) }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Run => "run",
        Command::Phantom { .. } => "phantom",
        Command::Segment { .. } => "segment",
        Command::Voxelize { .. } => "voxelize",
        Command::Align { .. } => "align",
        Command::Extract { .. } => "extract",
        Command::Register { .. } => "register",
        Command::Evaluate { .. } => "evaluate",
    }
}

/// The error and its causes on one line, skipping causes already spelled out
/// by the error above them.
fn message(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg = format!("{msg}: {c}");
        }
    }
    msg
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let command = command_name(&cli.command);
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let stage = e.downcast_ref::<ctrecon::Error>().and_then(|e| e.stage());
            let line = serde_json::json!({
                "error": message(&e),
                "command": command,
                "stage": stage,
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
