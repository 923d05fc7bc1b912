use nalgebra::{Point3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Indexed triangle surface in world coordinates (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh<T: Real> {
    vertices: Vec<Point3<T>>,
    triangles: Vec<[usize; 3]>,
    normals: Option<Vec<Vector3<T>>>,
}

impl<T: Real> TriangleMesh<T> {
    /// Builds a mesh, dropping triangles with repeated indices or zero area.
    pub fn new(vertices: Vec<Point3<T>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::InvalidMesh(format!(
                "triangle {:?} references a vertex beyond {}",
                t, n
            )));
        }
        let triangles = triangles
            .into_iter()
            .filter(|t| {
                t[0] != t[1]
                    && t[1] != t[2]
                    && t[0] != t[2]
                    && face_cross(&vertices, t).norm_squared() > T::zero()
            })
            .collect();
        Ok(Self { vertices, triangles, normals: None })
    }

    /// Keeps every triangle. Indices must be in range.
    pub(crate) fn from_raw(vertices: Vec<Point3<T>>, triangles: Vec<[usize; 3]>) -> Self {
        debug_assert!(triangles.iter().flatten().all(|&i| i < vertices.len()));
        Self { vertices, triangles, normals: None }
    }

    pub fn empty() -> Self {
        Self { vertices: Vec::new(), triangles: Vec::new(), normals: None }
    }

    /// Attaches per-vertex normals; each is normalized and must be nonzero.
    pub fn with_normals(mut self, normals: Vec<Vector3<T>>) -> Result<Self> {
        if normals.len() != self.vertices.len() {
            return Err(Error::InvalidMesh(format!(
                "{} normals for {} vertices",
                normals.len(),
                self.vertices.len()
            )));
        }
        let normals = normals
            .into_iter()
            .map(|n| {
                let len = n.norm();
                if len > T::zero() {
                    Ok(n / len)
                } else {
                    Err(Error::InvalidMesh("zero-length vertex normal".into()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        self.normals = Some(normals);
        Ok(self)
    }

    #[inline]
    pub fn vertices(&self) -> &[Point3<T>] {
        &self.vertices
    }

    #[inline]
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    #[inline]
    pub fn normals(&self) -> Option<&[Vector3<T>]> {
        self.normals.as_deref()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Same connectivity with new vertex positions. Normals are dropped.
    pub fn with_vertices(&self, vertices: Vec<Point3<T>>) -> Self {
        assert_eq!(vertices.len(), self.vertices.len());
        Self { vertices, triangles: self.triangles.clone(), normals: None }
    }

    pub fn translated(&self, by: &Vector3<T>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v + by).collect(),
            triangles: self.triangles.clone(),
            normals: self.normals.clone(),
        }
    }

    /// Mesh with every triangle's winding reversed.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|t| [t[0], t[2], t[1]]).collect(),
            normals: self.normals.as_ref().map(|ns| ns.iter().map(|n| -n).collect()),
        }
    }

    /// Disjoint union of two meshes.
    pub fn merged(&self, other: &Self) -> Self {
        let off = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(other.triangles.iter().map(|t| t.map(|i| i + off)));
        Self { vertices, triangles, normals: None }
    }

    pub fn bounds(&self) -> Option<(Point3<T>, Point3<T>)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (lo.inf(v), hi.sup(v))
        }))
    }

    /// Undirected edges keyed `(min, max)` with their triangle multiplicity, sorted.
    pub fn edge_multiplicities(&self) -> Vec<((usize, usize), usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        let mut out: Vec<((usize, usize), usize)> = Vec::new();
        for e in edges {
            match out.last_mut() {
                Some((last, c)) if *last == e => *c += 1,
                _ => out.push((e, 1)),
            }
        }
        out
    }
}

#[inline]
pub(crate) fn face_cross<T: Real>(vertices: &[Point3<T>], t: &[usize; 3]) -> Vector3<T> {
    let a = vertices[t[0]];
    (vertices[t[1]] - a).cross(&(vertices[t[2]] - a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeshStats<T: Real> {
    pub area: T,
    pub signed_volume: T,
    /// Edges used by exactly one triangle.
    pub boundary_edge_count: usize,
    /// Edges used by more than two triangles.
    pub nonmanifold_edge_count: usize,
    pub euler_characteristic: i64,
}

impl<T: Real> MeshStats<T> {
    pub fn is_watertight(&self) -> bool {
        self.boundary_edge_count == 0 && self.nonmanifold_edge_count == 0
    }
}

pub fn mesh_stats<T: Real>(mesh: &TriangleMesh<T>) -> MeshStats<T> {
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    let mut area = T::zero();
    let mut volume = T::zero();
    for t in mesh.triangles() {
        area += face_cross(mesh.vertices(), t).norm() * half;
        let [a, b, c] = t.map(|i| mesh.vertices()[i].coords);
        volume += a.dot(&b.cross(&c)) * sixth;
    }
    let edges = mesh.edge_multiplicities();
    MeshStats {
        area,
        signed_volume: volume,
        boundary_edge_count: edges.iter().filter(|(_, c)| *c == 1).count(),
        nonmanifold_edge_count: edges.iter().filter(|(_, c)| *c > 2).count(),
        euler_characteristic: mesh.vertices().len() as i64 - edges.len() as i64
            + mesh.triangles().len() as i64,
    }
}
