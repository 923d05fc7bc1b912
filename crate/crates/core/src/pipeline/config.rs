use std::path::{Path, PathBuf};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::ReportFormat;
use crate::registration::RegistrationConfig;
use crate::segmentation::SegmentationConfig;
use crate::surface::primitives::{icosphere, shell_mesh};
use crate::surface::TriangleMesh;
use crate::volume::{make_shell_phantom, make_sphere_phantom, GridGeometry, ScalarVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    Sphere,
    Shell,
}

impl PhantomKind {
    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::Sphere => "sphere",
            PhantomKind::Shell => "shell",
        }
    }
}

/// Analytic shape: a solid sphere, or a shell of thickness `wall_mm`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub kind: PhantomKind,
    pub radius_mm: f64,
    /// Shell wall thickness; required for shells, rejected for spheres.
    pub wall_mm: Option<f64>,
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_mm > 0.0 && self.radius_mm.is_finite()) {
            return Err(Error::Phantom(format!("radius_mm must be positive, got {}", self.radius_mm)));
        }
        match (self.kind, self.wall_mm) {
            (PhantomKind::Sphere, None) => Ok(()),
            (PhantomKind::Sphere, Some(_)) => Err(Error::Phantom("wall_mm only applies to shells".into())),
            (PhantomKind::Shell, None) => Err(Error::Phantom("shell phantoms need wall_mm".into())),
            (PhantomKind::Shell, Some(w)) if !(w > 0.0 && w < self.radius_mm) => Err(Error::Phantom(format!(
                "wall thickness must satisfy 0 < wall < outer_radius, got wall {w} outer {}",
                self.radius_mm
            ))),
            (PhantomKind::Shell, Some(_)) => Ok(()),
        }
    }

    /// Surface mesh of the shape centered at `center`.
    pub fn mesh(&self, subdivisions: u32, center: Point3<f64>) -> Result<TriangleMesh<f64>> {
        self.validate()?;
        Ok(match (self.kind, self.wall_mm) {
            (PhantomKind::Shell, Some(w)) => shell_mesh(self.radius_mm, w, subdivisions, center),
            _ => icosphere(self.radius_mm, subdivisions, center),
        })
    }
}

fn default_subdivisions() -> u32 {
    5
}

/// Reference model generated from an analytic shape, centered on the input grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferencePhantom {
    pub kind: PhantomKind,
    pub radius_mm: f64,
    #[serde(default)]
    pub wall_mm: Option<f64>,
    #[serde(default = "default_subdivisions")]
    pub subdivisions: u32,
}

/// Synthetic scan: shape plateaus plus Gaussian noise on an explicit grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPhantom {
    pub kind: PhantomKind,
    pub radius_mm: f64,
    #[serde(default)]
    pub wall_mm: Option<f64>,
    pub geometry: GridGeometry<f64>,
    pub fg_mean: f64,
    pub bg_mean: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ReferencePhantom {
    pub fn shape(&self) -> Shape {
        Shape { kind: self.kind, radius_mm: self.radius_mm, wall_mm: self.wall_mm }
    }
}

impl InputPhantom {
    pub fn shape(&self) -> Shape {
        Shape { kind: self.kind, radius_mm: self.radius_mm, wall_mm: self.wall_mm }
    }

    pub fn generate(&self) -> Result<ScalarVolume<f64>> {
        let s = self.shape();
        s.validate()?;
        match (s.kind, s.wall_mm) {
            (PhantomKind::Shell, Some(w)) => make_shell_phantom(
                s.radius_mm,
                w,
                &self.geometry,
                self.fg_mean,
                self.bg_mean,
                self.noise_sigma,
                self.seed,
            ),
            _ => make_sphere_phantom(s.radius_mm, &self.geometry, self.fg_mean, self.bg_mean, self.noise_sigma, self.seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSource {
    /// STL or PLY file.
    Mesh(PathBuf),
    Phantom(ReferencePhantom),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSource {
    /// Volume header (`.json`) with its `.raw` sibling.
    Volume(PathBuf),
    Phantom(InputPhantom),
}

/// Declared pre-alignment of the segmented mask: intrinsic x-y-z Euler angles
/// about the mask's foreground centroid, then a translation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoarseAlign {
    pub euler_deg: [f64; 3],
    pub translation_mm: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    pub enabled: bool,
    pub lambda: f64,
    pub iterations: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { enabled: false, lambda: 0.5, iterations: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub report: Option<PathBuf>,
    pub format: ReportFormat,
    /// Directory receiving every intermediate volume, mask, mesh and transform.
    pub intermediates: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub reference: ReferenceSource,
    pub input: InputSource,
    #[serde(default)]
    pub coarse_align: CoarseAlign,
    pub segmentation: SegmentationConfig,
    pub registration: RegistrationConfig,
    #[serde(default)]
    pub smoothing: SmoothingConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Strict JSON parse; unknown keys are errors.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let ReferenceSource::Mesh(p) = &mut cfg.reference {
            resolve(base, p);
        }
        if let InputSource::Volume(p) = &mut cfg.input {
            resolve(base, p);
        }
        for p in [&mut cfg.outputs.report, &mut cfg.outputs.intermediates].into_iter().flatten() {
            resolve(base, p);
        }
        Ok(cfg)
    }

    /// Replaces every seed (phantom noise, GMM subsampling, RANSAC).
    pub fn override_seed(&mut self, seed: u64) {
        if let InputSource::Phantom(p) = &mut self.input {
            p.seed = seed;
        }
        self.segmentation.gmm.seed = seed;
        self.registration.ransac.seed = seed;
    }

    /// Copy with every defaulted parameter written out.
    pub fn effective(&self) -> Self {
        let mut out = self.clone();
        out.registration = self.registration.effective();
        out
    }

    /// Parameter checks and existence of every referenced input file.
    pub fn validate(&self) -> Result<()> {
        match &self.reference {
            ReferenceSource::Mesh(p) => require_file(p)?,
            ReferenceSource::Phantom(r) => r.shape().validate()?,
        }
        match &self.input {
            InputSource::Volume(p) => {
                require_file(p)?;
                require_file(&crate::io::raw_path(p))?;
            }
            InputSource::Phantom(p) => {
                p.shape().validate()?;
                p.geometry.validate()?;
                if p.fg_mean == p.bg_mean {
                    return Err(Error::Phantom("fg_mean must differ from bg_mean".into()));
                }
            }
        }
        for (name, v) in [("euler_deg", self.coarse_align.euler_deg), ("translation_mm", self.coarse_align.translation_mm)] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("coarse_align.{name} must be finite")));
            }
        }
        self.segmentation.validate()?;
        self.registration.validate()?;
        let s = &self.smoothing;
        if s.enabled && !(s.lambda > 0.0 && s.lambda <= 1.0) {
            return Err(Error::InvalidParameter(format!("smoothing.lambda must lie in (0, 1], got {}", s.lambda)));
        }
        Ok(())
    }
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} does not exist", p.display()),
        )))
    }
}
