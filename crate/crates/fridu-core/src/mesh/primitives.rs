//! Mesh generators for tests, demos, and synthetic datasets.

use super::TriangleMesh;
use std::collections::BTreeMap;

/// Regular tetrahedron with unit edge length.
pub fn regular_tetrahedron() -> TriangleMesh {
    let s = 1.0 / 2f64.sqrt();
    let vertices = vec![
        [1.0, 0.0, -s],
        [-1.0, 0.0, -s],
        [0.0, 1.0, s],
        [0.0, -1.0, s],
    ]
    .into_iter()
    .map(|v| [v[0] * 0.5, v[1] * 0.5, v[2] * 0.5])
    .collect();
    let faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    TriangleMesh::new("tetrahedron", vertices, faces).expect("tetrahedron is valid")
}

/// Unit square `[0,1]^2` split along the diagonal (0,0)-(1,1) into two
/// right isoceles triangles.
pub fn unit_square() -> TriangleMesh {
    let vertices = vec![
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0],
        [0.0, 1.0, 0.0],
    ];
    let faces = vec![[0, 1, 2], [0, 2, 3]];
    TriangleMesh::new("unit-square", vertices, faces).expect("square is valid")
}

/// Icosphere: icosahedron subdivided `subdivisions` times, vertices projected
/// to radius `radius`. Vertex count is `10 * 4^s + 2`.
pub fn icosphere(subdivisions: u32, radius: f64) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<[f64; 3]> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoints: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for face in &faces {
            let mut mid = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (face[k], face[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoints.entry(key).or_insert_with(|| {
                    let pa = vertices[a];
                    let pb = vertices[b];
                    vertices.push([
                        0.5 * (pa[0] + pb[0]),
                        0.5 * (pa[1] + pb[1]),
                        0.5 * (pa[2] + pb[2]),
                    ]);
                    vertices.len() - 1
                });
            }
            next_faces.push([face[0], mid[0], mid[2]]);
            next_faces.push([face[1], mid[1], mid[0]]);
            next_faces.push([face[2], mid[2], mid[1]]);
            next_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = next_faces;
    }

    for v in &mut vertices {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        *v = [v[0] / r * radius, v[1] / r * radius, v[2] / r * radius];
    }

    TriangleMesh::new(format!("icosphere-{subdivisions}"), vertices, faces).expect("icosphere is valid")
}

/// Torus triangulated on a regular `nu x nv` grid; hits any vertex count
/// `nu * nv` exactly, every vertex has valence 6.
pub fn torus_grid(nu: usize, nv: usize, major_radius: f64, minor_radius: f64) -> TriangleMesh {
    assert!(nu >= 3 && nv >= 3, "torus grid needs at least 3x3 vertices");
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / nu as f64;
        for j in 0..nv {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / nv as f64;
            let r = major_radius + minor_radius * phi.cos();
            vertices.push([r * theta.cos(), r * theta.sin(), minor_radius * phi.sin()]);
        }
    }
    let idx = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriangleMesh::new(format!("torus-{nu}x{nv}"), vertices, faces).expect("torus is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tetrahedron_edge_length_is_one() {
        let t = regular_tetrahedron();
        for (_, _, len) in t.edges() {
            assert!((len - 1.0).abs() < 1e-12, "edge length {len}");
        }
    }

    #[test]
    fn icosphere_vertices_on_sphere() {
        let s = icosphere(2, 2.5);
        for v in &s.vertices {
            let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((r - 2.5).abs() < 1e-12);
        }
        assert_eq!(s.n_vertices(), 162);
    }

    #[test]
    fn torus_grid_exact_count() {
        let t = torus_grid(15, 20, 2.0, 0.7);
        assert_eq!(t.n_vertices(), 300);
        assert_eq!(t.n_faces(), 600);
        // closed surface of genus 1: V - E + F = 0
        let e = t.edges().len() as i64;
        assert_eq!(300 - e + 600, 0);
    }
}
