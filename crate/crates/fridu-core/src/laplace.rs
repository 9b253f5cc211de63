//! Cotangent-weight stiffness matrix and barycentric lumped mass.

use crate::mesh::{cross, dot, norm, sub, TriangleMesh};

/// Sparse symmetric matrix in CSR form with both triangles stored.
#[derive(Debug, Clone)]
pub struct SparseSym {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseSym {
    /// Assembles from (i, j, v) triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
        for &(i, j, v) in triplets {
            *rows[i].entry(j).or_insert(0.0) += v;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (j, v) in row {
                col_idx.push(j);
                vals.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx, vals }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[idx] * x[self.col_idx[idx]];
            }
            y[i] = acc;
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.vals[self.row_ptr[i]..self.row_ptr[i + 1]].iter().sum()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(pos) => self.vals[lo + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[(i, self.col_idx[idx])] = self.vals[idx];
            }
        }
        d
    }
}

/// Cotangent-weight stiffness matrix `W`. Off-diagonals are
/// `-(cot a_ij + cot b_ij) / 2` over the triangles sharing edge `ij`,
/// diagonals make every row sum to zero. Obtuse triangles are allowed, so
/// individual weights may be negative.
pub fn cotangent_laplacian(mesh: &TriangleMesh) -> SparseSym {
    let n = mesh.n_vertices();
    let mut triplets = Vec::with_capacity(mesh.n_faces() * 12);
    for face in &mesh.faces {
        for corner in 0..3 {
            let a = face[corner];
            let b = face[(corner + 1) % 3];
            let c = face[(corner + 2) % 3];
            // half-cotangent of the angle at `a`, opposite edge (b, c)
            let u = sub(mesh.vertices[b], mesh.vertices[a]);
            let v = sub(mesh.vertices[c], mesh.vertices[a]);
            let w = 0.5 * dot(u, v) / norm(cross(u, v));
            triplets.push((b, c, -w));
            triplets.push((c, b, -w));
            triplets.push((b, b, w));
            triplets.push((c, c, w));
        }
    }
    SparseSym::from_triplets(n, &triplets)
}

/// Barycentric lumped mass: `mass[i] = (1/3) * sum of incident face areas`.
/// The total equals the surface area.
pub fn lumped_mass(mesh: &TriangleMesh) -> Vec<f64> {
    let mut mass = vec![0.0; mesh.n_vertices()];
    for (f, face) in mesh.faces.iter().enumerate() {
        let third = mesh.face_area(f) / 3.0;
        for &v in face {
            mass[v] += third;
        }
    }
    mass
}
