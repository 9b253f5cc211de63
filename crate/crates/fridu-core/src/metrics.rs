//! Correspondence quality metrics: normalized Euclidean error, mean graph
//! geodesic error, and cumulative error curves.

use crate::error::{Error, Result};
use crate::fmap::PointwiseMap;
use crate::geodesics::GeodesicCache;
use crate::mesh::TriangleMesh;

fn check_comparable(pi: &PointwiseMap, pi_gt: &PointwiseMap) -> Result<()> {
    if pi.n2() != pi_gt.n2() {
        return Err(Error::Dimension(format!(
            "assignments have different lengths: {} vs {}",
            pi.n2(),
            pi_gt.n2()
        )));
    }
    if pi.source_mesh_id != pi_gt.source_mesh_id || pi.target_mesh_id != pi_gt.target_mesh_id {
        return Err(Error::Validation(format!(
            "maps relate different meshes: {}->{} vs {}->{}",
            pi.source_mesh_id, pi.target_mesh_id, pi_gt.source_mesh_id, pi_gt.target_mesh_id
        )));
    }
    Ok(())
}

/// Per-vertex Euclidean distance between predicted and ground-truth image
/// vertices on `M1`, normalized by `sqrt(area(M1))`, plus the mean.
pub fn normalized_euclidean_error(
    pi: &PointwiseMap,
    pi_gt: &PointwiseMap,
    mesh1: &TriangleMesh,
) -> Result<(Vec<f64>, f64)> {
    check_comparable(pi, pi_gt)?;
    let scale = mesh1.total_area().sqrt();
    let mut errors = Vec::with_capacity(pi.n2());
    for (&a, &b) in pi.assignment.iter().zip(&pi_gt.assignment) {
        if a >= mesh1.n_vertices() || b >= mesh1.n_vertices() {
            return Err(Error::Index("assignment exceeds mesh size".into()));
        }
        let pa = mesh1.vertices[a];
        let pb = mesh1.vertices[b];
        let d = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2) + (pa[2] - pb[2]).powi(2)).sqrt();
        errors.push(d / scale);
    }
    let mean = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
    Ok((errors, mean))
}

/// Mean graph-geodesic distance between predicted and ground-truth images,
/// normalized by `sqrt(area(M1))` and scaled by 100 for reporting.
pub fn mean_geodesic_error(
    pi: &PointwiseMap,
    pi_gt: &PointwiseMap,
    mesh1: &TriangleMesh,
    cache: &mut GeodesicCache,
) -> Result<f64> {
    check_comparable(pi, pi_gt)?;
    let scale = mesh1.total_area().sqrt();
    let mut total = 0.0;
    for (&a, &b) in pi.assignment.iter().zip(&pi_gt.assignment) {
        if a >= mesh1.n_vertices() || b >= mesh1.n_vertices() {
            return Err(Error::Index("assignment exceeds mesh size".into()));
        }
        let row = cache.distances_from(b);
        total += row[a];
    }
    Ok(total / pi.n2().max(1) as f64 / scale * 100.0)
}

/// Fraction of errors at or below each threshold. Monotone nondecreasing;
/// reaches 1 once the threshold passes the maximum error.
pub fn error_curve(errors: &[f64], thresholds: &[f64]) -> Vec<f64> {
    if errors.is_empty() {
        return vec![0.0; thresholds.len()];
    }
    let n = errors.len() as f64;
    thresholds
        .iter()
        .map(|&t| errors.iter().filter(|&&e| e <= t).count() as f64 / n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_map(mesh: &TriangleMesh) -> PointwiseMap {
        PointwiseMap::new(&mesh.mesh_id, "other", (0..mesh.n_vertices()).collect(), mesh.n_vertices()).unwrap()
    }

    #[test]
    fn zero_error_for_equal_maps() {
        let mesh = primitives::icosphere(2, 1.0);
        let pi = identity_map(&mesh);
        let (errors, mean) = normalized_euclidean_error(&pi, &pi, &mesh).unwrap();
        assert!(errors.iter().all(|&e| e == 0.0));
        assert_eq!(mean, 0.0);
        let mut cache = GeodesicCache::new(&mesh);
        assert_eq!(mean_geodesic_error(&pi, &pi, &mesh, &mut cache).unwrap(), 0.0);
    }

    #[test]
    fn euclidean_error_is_scale_invariant() {
        let mesh = primitives::icosphere(2, 1.0);
        let mut scaled = mesh.clone();
        for v in &mut scaled.vertices {
            *v = [2.0 * v[0], 2.0 * v[1], 2.0 * v[2]];
        }
        let n = mesh.n_vertices();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let random: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let pi = PointwiseMap::new(&mesh.mesh_id, "other", random, n).unwrap();
        let gt = identity_map(&mesh);
        let (_, mean_a) = normalized_euclidean_error(&pi, &gt, &mesh).unwrap();
        let (_, mean_b) = normalized_euclidean_error(&pi, &gt, &scaled).unwrap();
        assert!((mean_a - mean_b).abs() < 1e-12);
    }

    #[test]
    fn random_assignment_error_matches_sampling_oracle() {
        let mesh = primitives::icosphere(2, 1.0);
        let n = mesh.n_vertices();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let random: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let pi = PointwiseMap::new(&mesh.mesh_id, "other", random, n).unwrap();
        let gt = identity_map(&mesh);
        let (_, mean) = normalized_euclidean_error(&pi, &gt, &mesh).unwrap();

        // Monte-Carlo oracle with an independent stream: expected distance
        // between a random vertex pair, same normalizer
        let mut oracle_rng = ChaCha8Rng::seed_from_u64(1234);
        let scale = mesh.total_area().sqrt();
        let samples = 200_000;
        let mut acc = 0.0;
        for _ in 0..samples {
            let a = mesh.vertices[oracle_rng.gen_range(0..n)];
            let b = mesh.vertices[oracle_rng.gen_range(0..n)];
            acc += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt() / scale;
        }
        let oracle = acc / samples as f64;
        assert!((mean - oracle).abs() / oracle < 0.05, "{mean} vs oracle {oracle}");
    }

    #[test]
    fn single_mismatch_arithmetic() {
        let mesh = primitives::icosphere(1, 1.0);
        let n = mesh.n_vertices();
        let gt = identity_map(&mesh);
        let mut wrong = gt.assignment.clone();
        // map vertex 0 somewhere one edge away
        let neighbor = mesh.vertex_adjacency()[0][0];
        wrong[0] = neighbor;
        let pi = PointwiseMap::new(&mesh.mesh_id, "other", wrong, n).unwrap();
        let mut cache = GeodesicCache::new(&mesh);
        let got = mean_geodesic_error(&pi, &gt, &mesh, &mut cache).unwrap();
        let g = crate::geodesics::graph_geodesics(&mesh, &[0])[0][neighbor];
        let expect = g / mesh.total_area().sqrt() * 100.0 / n as f64;
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn geodesic_error_matches_independent_dijkstra() {
        // oracle: O(n^2) array-based Dijkstra, written independently of the
        // heap implementation in `geodesics`
        fn slow_dijkstra(mesh: &TriangleMesh, source: usize) -> Vec<f64> {
            let n = mesh.n_vertices();
            let mut adj = vec![Vec::new(); n];
            for (a, b, len) in mesh.edges() {
                adj[a].push((b, len));
                adj[b].push((a, len));
            }
            let mut dist = vec![f64::INFINITY; n];
            let mut done = vec![false; n];
            dist[source] = 0.0;
            for _ in 0..n {
                let mut u = usize::MAX;
                let mut best = f64::INFINITY;
                for i in 0..n {
                    if !done[i] && dist[i] < best {
                        best = dist[i];
                        u = i;
                    }
                }
                if u == usize::MAX {
                    break;
                }
                done[u] = true;
                for &(v, len) in &adj[u] {
                    if dist[u] + len < dist[v] {
                        dist[v] = dist[u] + len;
                    }
                }
            }
            dist
        }

        let mesh = primitives::torus_grid(10, 10, 2.0, 0.7); // n=100
        let n = mesh.n_vertices();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let random: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let pi = PointwiseMap::new(&mesh.mesh_id, "other", random.clone(), n).unwrap();
        let gt = identity_map(&mesh);
        let mut cache = GeodesicCache::new(&mesh);
        let got = mean_geodesic_error(&pi, &gt, &mesh, &mut cache).unwrap();

        let scale = mesh.total_area().sqrt();
        let mut acc = 0.0;
        for i in 0..n {
            acc += slow_dijkstra(&mesh, i)[random[i]];
        }
        let oracle = acc / n as f64 / scale * 100.0;
        assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
        assert!(got >= 0.0);
    }

    #[test]
    fn metrics_are_permutation_covariant() {
        let mesh = primitives::icosphere(1, 1.0);
        let n = mesh.n_vertices();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        // relabel M2's vertices by rho: both assignments permute the same way
        let mut rho: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        rho.shuffle(&mut rng);
        let pi = PointwiseMap::new("s", "t", pred.clone(), n).unwrap();
        let gt = PointwiseMap::new("s", "t", truth.clone(), n).unwrap();
        let pi_r = PointwiseMap::new("s", "t", rho.iter().map(|&i| pred[i]).collect(), n).unwrap();
        let gt_r = PointwiseMap::new("s", "t", rho.iter().map(|&i| truth[i]).collect(), n).unwrap();
        let (_, mean) = normalized_euclidean_error(&pi, &gt, &mesh).unwrap();
        let (_, mean_r) = normalized_euclidean_error(&pi_r, &gt_r, &mesh).unwrap();
        assert!((mean - mean_r).abs() < 1e-12);
    }

    #[test]
    fn error_curve_basics() {
        let zeros = vec![0.0; 10];
        let curve = error_curve(&zeros, &[0.0, 0.5, 1.0]);
        assert_eq!(curve, vec![1.0, 1.0, 1.0]);

        assert!(error_curve(&[1.0, 2.0], &[]).is_empty());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let uniform: Vec<f64> = (0..40_000).map(|_| rng.gen::<f64>()).collect();
        let curve = error_curve(&uniform, &[0.5]);
        assert!((curve[0] - 0.5).abs() < 0.02, "fraction {}", curve[0]);

        // monotone, ends at 1
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0 * 1.2).collect();
        let curve = error_curve(&uniform, &grid);
        for w in curve.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert_eq!(*curve.last().unwrap(), 1.0);
    }
}
