//! Triangle meshes: storage, validation, file ingestion, and primitive
//! generators used by tests and synthetic datasets.

pub mod io;
pub mod primitives;

use crate::error::{Error, Result};

pub use io::{load_mesh, write_off, MeshFormat};

/// An indexed triangle mesh. Vertex order is preserved from the source file;
/// correspondence files and descriptor rows index into it directly.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub mesh_id: String,
    /// `n x 3` vertex positions, arbitrary but consistent length unit.
    pub vertices: Vec<[f64; 3]>,
    /// `m x 3` zero-based vertex indices.
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh and checks all structural invariants: indices in range,
    /// no degenerate faces, and a single edge-connected component.
    pub fn new(mesh_id: impl Into<String>, vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self {
            mesh_id: mesh_id.into(),
            vertices,
            faces,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn with_id(mut self, mesh_id: impl Into<String>) -> Self {
        self.mesh_id = mesh_id.into();
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if n < 3 {
            return Err(Error::Validation(format!(
                "mesh '{}' has {} vertices; need at least 3",
                self.mesh_id, n
            )));
        }
        for (f, face) in self.faces.iter().enumerate() {
            for &v in face {
                if v >= n {
                    return Err(Error::Validation(format!(
                        "face {f} references vertex {v} but mesh has {n} vertices"
                    )));
                }
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::Validation(format!("face {f} repeats a vertex: {face:?}")));
            }
            let area = self.face_area(f);
            let max_edge_sq = self.face_max_edge_sq(f);
            if !(area.is_finite()) || area <= 1e-14 * max_edge_sq || max_edge_sq == 0.0 {
                return Err(Error::Validation(format!("face {f} is degenerate (area {area:.3e})")));
            }
        }
        if !self.is_edge_connected() {
            return Err(Error::Validation(format!(
                "mesh '{}' has multiple edge-connected components",
                self.mesh_id
            )));
        }
        Ok(())
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        let u = sub(self.vertices[b], self.vertices[a]);
        let v = sub(self.vertices[c], self.vertices[a]);
        0.5 * norm(cross(u, v))
    }

    fn face_max_edge_sq(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        let ab = norm_sq(sub(self.vertices[b], self.vertices[a]));
        let bc = norm_sq(sub(self.vertices[c], self.vertices[b]));
        let ca = norm_sq(sub(self.vertices[a], self.vertices[c]));
        ab.max(bc).max(ca)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Undirected edge list with Euclidean lengths, deduplicated, sorted by
    /// `(min index, max index)`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut seen = std::collections::BTreeSet::new();
        for face in &self.faces {
            for k in 0..3 {
                let (a, b) = (face[k], face[(k + 1) % 3]);
                seen.insert((a.min(b), a.max(b)));
            }
        }
        seen.into_iter()
            .map(|(a, b)| (a, b, norm(sub(self.vertices[b], self.vertices[a]))))
            .collect()
    }

    /// Per-vertex adjacency lists (undirected, sorted).
    pub fn vertex_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (a, b, _) in self.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    fn is_edge_connected(&self) -> bool {
        let n = self.vertices.len();
        let adj = self.vertex_adjacency();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    }
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm_sq(a: [f64; 3]) -> f64 {
    dot(a, a)
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    norm_sq(a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::primitives;
    use super::*;

    #[test]
    fn tetrahedron_is_valid() {
        let mesh = primitives::regular_tetrahedron();
        assert_eq!(mesh.n_vertices(), 4);
        assert_eq!(mesh.n_faces(), 4);
    }

    #[test]
    fn out_of_range_face_index_rejected() {
        let t = primitives::regular_tetrahedron();
        let err = TriangleMesh::new("bad", t.vertices.clone(), vec![[0, 1, 99]]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn repeated_vertex_in_face_rejected() {
        let t = primitives::regular_tetrahedron();
        let err = TriangleMesh::new("bad", t.vertices.clone(), vec![[0, 1, 1], [0, 1, 2]]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn degenerate_face_rejected() {
        let verts = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let err = TriangleMesh::new("bad", verts, vec![[0, 1, 2], [0, 1, 3]]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn disconnected_mesh_rejected() {
        let mut verts = primitives::regular_tetrahedron().vertices;
        let mut faces = primitives::regular_tetrahedron().faces;
        // second tetrahedron far away
        for v in primitives::regular_tetrahedron().vertices {
            verts.push([v[0] + 100.0, v[1], v[2]]);
        }
        for f in primitives::regular_tetrahedron().faces {
            faces.push([f[0] + 4, f[1] + 4, f[2] + 4]);
        }
        let err = TriangleMesh::new("two", verts, faces).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn icosphere_counts_follow_euler() {
        // one subdivision of the icosahedron: V = 10*4 + 2 = 42, F = 20*4 = 80
        let sphere = primitives::icosphere(1, 1.0);
        assert_eq!(sphere.n_vertices(), 42);
        assert_eq!(sphere.n_faces(), 80);
        // Euler: V - E + F = 2 for a closed genus-0 surface
        let e = sphere.edges().len();
        assert_eq!(42 + 80 - e as i64, 2);
    }

    #[test]
    fn total_area_of_unit_square() {
        let sq = primitives::unit_square();
        assert!((sq.total_area() - 1.0).abs() < 1e-12);
    }
}
