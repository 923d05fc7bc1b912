use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid geometry: {0}")]
    Geometry(String),

    #[error("invalid phantom: {0}")]
    Phantom(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mesh is not watertight: {boundary_edges} edges are not shared by exactly two triangles")]
    NotWatertight { boundary_edges: usize },

    #[error("mesh lies outside the grid: {0}")]
    MeshOutsideGrid(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("grid geometries differ: {0}")]
    GeometryMismatch(String),

    #[error("degenerate histogram: {0}")]
    DegenerateHistogram(String),

    #[error("not enough samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("foreground point set is rank deficient (rank {rank}, need 3)")]
    RankDeficient { rank: usize },

    #[error("degenerate landmark configuration: {0}")]
    DegenerateLandmarks(String),

    #[error("seed voxel {index:?} lies outside grid of dims {dims:?}")]
    SeedOutOfBounds { index: [usize; 3], dims: [usize; 3] },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("point cloud has no normals")]
    MissingNormals,

    #[error("no correspondences within max_correspondence = {max_correspondence} mm")]
    NoCorrespondences { max_correspondence: f64 },

    #[error("too few correspondences: need 3, got {0}")]
    TooFewCorrespondences(usize),

    #[error("payload size mismatch: expected {expected} bytes, found {actual}")]
    SizeMismatch { expected: u64, actual: u64 },

    #[error("mask payload holds value {value} at byte offset {offset}; only 0 and 1 are allowed")]
    InvalidMaskValue { value: u8, offset: usize },

    #[error("malformed {format} file: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// Name of the pipeline stage that failed, if this error came from one.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}
