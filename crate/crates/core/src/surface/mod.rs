//! Isosurface extraction, mesh smoothing and the triangle-mesh type.

mod marching_cubes;
mod mesh;
pub mod primitives;
mod smooth;
mod tables;

pub use marching_cubes::{marching_cubes, IsoField};
pub use mesh::{mesh_stats, MeshStats, TriangleMesh};
pub use smooth::{laplacian_smooth, vertex_neighbors};
