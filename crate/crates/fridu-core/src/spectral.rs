//! Laplace–Beltrami eigenbasis: generalized eigensolver and mass-weighted
//! norms.
//!
//! The pencil `W phi = lambda A phi` (A = diagonal lumped mass) is reduced to
//! the standard symmetric problem `S y = lambda y` with
//! `S = A^{-1/2} W A^{-1/2}`. Small problems use a dense solver; large ones a
//! shift-invert Lanczos iteration backed by a banded Cholesky factorization
//! after reverse Cuthill-McKee reordering.

use crate::error::{Error, Result};
use crate::laplace::SparseSym;
use crate::mesh::TriangleMesh;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Problems at or below this size (or with k close to n) take the dense path.
const DENSE_LIMIT: usize = 600;

/// Leading eigenpairs of one mesh plus its mass weights.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub mesh_id: String,
    /// Basis dimension.
    pub k: usize,
    /// `n x k`, columns are eigenfunctions in ascending eigenvalue order.
    pub phi: DMatrix<f64>,
    /// Nonnegative eigenvalues, ascending.
    pub lambda: DVector<f64>,
    /// Diagonal of the lumped mass matrix.
    pub mass: DVector<f64>,
}

impl SpectralBasis {
    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    /// `Phi^T A`, the mass-weighted pseudoinverse (exact under
    /// mass-orthonormality). `k x n`.
    pub fn phi_pinv(&self) -> DMatrix<f64> {
        let mut pt = self.phi.transpose();
        for j in 0..pt.ncols() {
            let m = self.mass[j];
            for i in 0..pt.nrows() {
                pt[(i, j)] *= m;
            }
        }
        pt
    }

    /// Leading `k_use` columns of phi.
    pub fn phi_lead(&self, k_use: usize) -> DMatrix<f64> {
        self.phi.columns(0, k_use).into_owned()
    }

    /// Max-entry deviation of `Phi^T A Phi` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.phi_pinv() * &self.phi;
        let mut worst = 0.0f64;
        for i in 0..self.k {
            for j in 0..self.k {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

/// Convenience: stiffness + mass + eigendecomposition of a mesh.
pub fn spectral_basis(mesh: &TriangleMesh, k: usize) -> Result<SpectralBasis> {
    let w = crate::laplace::cotangent_laplacian(mesh);
    let mass = crate::laplace::lumped_mass(mesh);
    eigendecompose(&w, &mass, k, &mesh.mesh_id)
}

/// Solves `W phi = lambda A phi` for the `k` smallest eigenvalues.
pub fn eigendecompose(w: &SparseSym, mass: &[f64], k: usize, mesh_id: &str) -> Result<SpectralBasis> {
    let n = w.n;
    if mass.len() != n {
        return Err(Error::Dimension(format!("mass length {} vs matrix size {n}", mass.len())));
    }
    if k == 0 || k >= n {
        return Err(Error::Dimension(format!("basis size k={k} must satisfy 0 < k < n={n}")));
    }
    if mass.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::Validation("mass weights must be strictly positive".into()));
    }

    let inv_sqrt_m: Vec<f64> = mass.iter().map(|&m| 1.0 / m.sqrt()).collect();
    let s = scale_symmetric(w, &inv_sqrt_m);

    let (lambda, y) = if n <= DENSE_LIMIT || 3 * k >= n {
        dense_smallest(&s, k)?
    } else {
        let total_area: f64 = mass.iter().sum();
        let shift = 4.0 * std::f64::consts::PI * k as f64 / total_area;
        match lanczos_smallest(&s, k, shift) {
            Ok(pair) => pair,
            // banded shift-invert can fail on pathological connectivity;
            // fall back to the dense solver when that is still tractable
            Err(e) if n <= 4096 => {
                log::warn!("shift-invert Lanczos failed ({e}); using dense fallback");
                dense_smallest(&s, k)?
            }
            Err(e) => return Err(e),
        }
    };

    // phi = A^{-1/2} y keeps Euclidean-orthonormal y mass-orthonormal
    let mut phi = y;
    for i in 0..n {
        for j in 0..k {
            phi[(i, j)] *= inv_sqrt_m[i];
        }
    }

    let mut lambda = lambda;
    for l in lambda.iter_mut() {
        if *l < 0.0 {
            if *l < -1e-6 {
                return Err(Error::Solver(format!("negative eigenvalue {l} from PSD pencil")));
            }
            *l = 0.0;
        }
    }

    apply_sign_convention(&mut phi);

    Ok(SpectralBasis {
        mesh_id: mesh_id.to_string(),
        k,
        phi,
        lambda: DVector::from_vec(lambda),
        mass: DVector::from_column_slice(mass),
    })
}

/// Mass-weighted squared Frobenius norm: `sum_i mass[i] * ||F_i||^2`.
pub fn mass_norm_sq(f: &DMatrix<f64>, mass: &[f64]) -> Result<f64> {
    if f.nrows() != mass.len() {
        return Err(Error::Dimension(format!(
            "matrix has {} rows but mass has {} entries",
            f.nrows(),
            mass.len()
        )));
    }
    let mut total = 0.0;
    for i in 0..f.nrows() {
        let mut row = 0.0;
        for j in 0..f.ncols() {
            row += f[(i, j)] * f[(i, j)];
        }
        total += mass[i] * row;
    }
    Ok(total)
}

fn scale_symmetric(w: &SparseSym, inv_sqrt_m: &[f64]) -> SparseSym {
    let mut scaled = w.clone();
    for i in 0..w.n {
        for idx in w.row_ptr[i]..w.row_ptr[i + 1] {
            let j = w.col_idx[idx];
            scaled.vals[idx] = w.vals[idx] * inv_sqrt_m[i] * inv_sqrt_m[j];
        }
    }
    scaled
}

/// Deterministic eigenvector orientation: the entry of largest magnitude in
/// each column is made positive (first occurrence wins ties).
fn apply_sign_convention(phi: &mut DMatrix<f64>) {
    for j in 0..phi.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..phi.nrows() {
            let a = phi[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if phi[(best, j)] < 0.0 {
            for i in 0..phi.nrows() {
                phi[(i, j)] = -phi[(i, j)];
            }
        }
    }
}

fn dense_smallest(s: &SparseSym, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let dense = s.to_dense();
    let eig = dense.symmetric_eigen();
    let mut order: Vec<usize> = (0..s.n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut lambda = Vec::with_capacity(k);
    let mut y = DMatrix::zeros(s.n, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        lambda.push(eig.eigenvalues[idx]);
        y.set_column(col, &eig.eigenvectors.column(idx));
    }
    Ok((lambda, y))
}

// ---------------------------------------------------------------------------
// Shift-invert Lanczos
// ---------------------------------------------------------------------------

fn lanczos_smallest(s: &SparseSym, k: usize, mut shift: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = s.n;
    let (perm, bandwidth) = reverse_cuthill_mckee(s);
    if bandwidth + 1 > 2048 {
        return Err(Error::Solver(format!("RCM bandwidth {bandwidth} too large for banded factorization")));
    }

    // factor M = S + shift*I, inflating the shift if a pivot fails
    let mut chol = None;
    for _ in 0..6 {
        match BandedCholesky::factor(s, &perm, bandwidth, shift) {
            Ok(c) => {
                chol = Some(c);
                break;
            }
            Err(_) => shift *= 10.0,
        }
    }
    let chol = chol.ok_or_else(|| Error::Solver("banded Cholesky failed for all shifts".into()))?;

    // Rayleigh-Ritz on an explicitly orthonormalized subspace driven by the
    // shift-invert operator. Unlike the plain three-term recurrence this
    // survives exact eigenvalue multiplicities (symmetric meshes): when the
    // inertia certificate reports a missing cluster member a fresh random
    // direction is injected into the subspace.
    let j_max = (4 * k + 100).min(n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c_705e);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(j_max); // V, orthonormal
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(j_max); // W = M^{-1} V
    let mut h = DMatrix::<f64>::zeros(j_max, j_max); // V^T M^{-1} V

    let mut v = random_unit(&mut rng, n);
    let mut work = vec![0.0; n];
    let mut inject = false;

    for j in 0..j_max {
        if inject {
            // certificate failure: bring in a direction outside the Krylov span
            v = random_unit(&mut rng, n);
            inject = false;
        }
        orthogonalize(&mut v, &basis);
        let nv = norm_slice(&v);
        if nv < 1e-12 {
            v = random_unit(&mut rng, n);
            orthogonalize(&mut v, &basis);
            let nv2 = norm_slice(&v);
            if nv2 < 1e-12 {
                break; // subspace spans everything reachable
            }
            scale(1.0 / nv2, &mut v);
        } else {
            scale(1.0 / nv, &mut v);
        }

        permute(&v, &perm, &mut work);
        let solved = chol.solve(&work);
        unpermute(&solved, &perm, &mut work);
        let w = work.clone();

        for i in 0..basis.len() {
            let hij = dot_slice(&basis[i], &w);
            let hji = dot_slice(&v, &images[i]);
            let sym = 0.5 * (hij + hji);
            h[(i, j)] = sym;
            h[(j, i)] = sym;
        }
        h[(j, j)] = dot_slice(&v, &w);
        basis.push(v.clone());
        images.push(w.clone());

        // drive the next iterate with the operator image
        v = w;

        let j_now = basis.len();
        let enough = j_now >= (2 * k + 10).min(j_max);
        if enough && (j_now % 10 == 0 || j_now == j_max) {
            if let Some(result) = extract_ritz(s, &basis, &h, k, shift)? {
                match certify_complete(s, &perm, bandwidth, &result.0, &result.2) {
                    Certificate::Complete => {
                        return Ok((result.0, result.1));
                    }
                    Certificate::Missing => inject = true,
                    Certificate::Unavailable => {
                        return Ok((result.0, result.1));
                    }
                }
            }
        }
    }

    Err(Error::Solver(format!(
        "shift-invert iteration did not converge for k={k} within {j_max} iterations"
    )))
}

enum Certificate {
    Complete,
    Missing,
    Unavailable,
}

/// Sylvester inertia certificate: the number of eigenvalues strictly below a
/// threshold just above the k-th Ritz value must equal k. Extra counted
/// eigenvalues are accepted when the trailing Ritz values show they belong to
/// the same cluster as the k-th (any subset of a tied cluster is valid).
fn certify_complete(
    s: &SparseSym,
    perm: &[usize],
    bw: usize,
    lambda: &[f64],
    ritz_tail: &[f64],
) -> Certificate {
    let k = lambda.len();
    let last = lambda[k - 1];
    let spread = (last - lambda[0]).abs().max(1.0);
    let cluster_tol = 1e-6 * (1.0 + last.abs());
    for attempt in 0..4 {
        let threshold = last + spread * 1e-7 * 10f64.powi(attempt);
        match banded_inertia(s, perm, bw, threshold) {
            Some(count) if count <= k => return Certificate::Complete,
            Some(count) => {
                // surplus below the threshold: fine only if the tail Ritz
                // values sit in the same cluster as lambda_k
                let surplus = count - k;
                let tail_in_cluster = ritz_tail
                    .iter()
                    .take(surplus)
                    .filter(|&&lam| (lam - last).abs() <= cluster_tol)
                    .count();
                return if tail_in_cluster == surplus {
                    Certificate::Complete
                } else {
                    Certificate::Missing
                };
            }
            None => continue, // pivot breakdown: nudge the threshold
        }
    }
    Certificate::Unavailable
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot_slice(v, b);
            axpy(-c, b, v);
        }
    }
}

/// Count of eigenvalues of `S` below `threshold` via the inertia of the
/// banded LDL^T factorization of `S - threshold*I`. Returns None on pivot
/// breakdown.
fn banded_inertia(s: &SparseSym, perm: &[usize], bw: usize, threshold: f64) -> Option<usize> {
    let n = s.n;
    let stride = bw + 1;
    let mut band = vec![0.0; n * stride];
    let mut scale_est = 0.0f64;
    for i_old in 0..n {
        let i = perm[i_old];
        for idx in s.row_ptr[i_old]..s.row_ptr[i_old + 1] {
            let j = perm[s.col_idx[idx]];
            if j <= i {
                band[i * stride + (j + bw - i)] = s.vals[idx];
            }
            scale_est = scale_est.max(s.vals[idx].abs());
        }
        band[i * stride + bw] -= threshold;
    }
    let tiny = (scale_est + threshold.abs()) * 1e-14;
    let mut diag = vec![0.0; n];
    let mut negatives = 0usize;
    for i in 0..n {
        let j_lo = i.saturating_sub(bw);
        for j in j_lo..=i {
            let mut sum = band[i * stride + (j + bw - i)];
            let k_lo = j_lo.max(j.saturating_sub(bw));
            for k in k_lo..j {
                sum -= band[i * stride + (k + bw - i)] * band[j * stride + (k + bw - j)] * diag[k];
            }
            if i == j {
                if sum.abs() <= tiny {
                    return None;
                }
                diag[i] = sum;
                if sum < 0.0 {
                    negatives += 1;
                }
            } else {
                band[i * stride + (j + bw - i)] = sum / diag[j];
            }
        }
    }
    Some(negatives)
}

/// Rayleigh-Ritz extraction from the projected operator `H = V^T M^{-1} V`.
/// Returns the k smallest eigenpair estimates plus the trailing Ritz values,
/// or None while residuals are still too large.
fn extract_ritz(
    s: &SparseSym,
    basis: &[Vec<f64>],
    h: &DMatrix<f64>,
    k: usize,
    shift: f64,
) -> Result<Option<(Vec<f64>, DMatrix<f64>, Vec<f64>)>> {
    let j = basis.len();
    if j < k {
        return Ok(None);
    }
    let eig = h.view((0, 0), (j, j)).into_owned().symmetric_eigen();
    // largest mu of M^{-1} correspond to smallest lambda of S
    let mut order: Vec<usize> = (0..j).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let n = s.n;
    let mut lambda = Vec::with_capacity(k);
    let mut y = DMatrix::zeros(n, k);
    let mut sy = vec![0.0; n];
    for (col, &idx) in order.iter().take(k).enumerate() {
        let mu = eig.eigenvalues[idx];
        if mu <= 0.0 {
            return Ok(None);
        }
        let lam = 1.0 / mu - shift;
        let mut vec = vec![0.0; n];
        for (b, row) in basis.iter().zip(eig.eigenvectors.column(idx).iter()) {
            axpy(*row, b, &mut vec);
        }
        let nv = norm_slice(&vec);
        if nv < 1e-12 {
            return Ok(None);
        }
        scale(1.0 / nv, &mut vec);
        // direct residual in the original operator
        s.matvec(&vec, &mut sy);
        let mut res = 0.0f64;
        for i in 0..n {
            let r = sy[i] - lam * vec[i];
            res += r * r;
        }
        let res = res.sqrt();
        if res > 1e-7 * (1.0 + lam.abs()) {
            return Ok(None);
        }
        lambda.push(lam);
        for i in 0..n {
            y[(i, col)] = vec[i];
        }
    }
    let ritz_tail: Vec<f64> = order
        .iter()
        .skip(k)
        .map(|&idx| {
            let mu = eig.eigenvalues[idx];
            if mu > 0.0 {
                1.0 / mu - shift
            } else {
                f64::INFINITY
            }
        })
        .collect();

    // ascending lambda + strict orthonormalization of the returned block
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| lambda[a].partial_cmp(&lambda[b]).unwrap());
    let lambda_sorted: Vec<f64> = order.iter().map(|&i| lambda[i]).collect();
    let mut y_sorted = DMatrix::zeros(n, k);
    for (col, &idx) in order.iter().enumerate() {
        y_sorted.set_column(col, &y.column(idx));
    }
    gram_schmidt(&mut y_sorted);
    Ok(Some((lambda_sorted, y_sorted, ritz_tail)))
}

fn gram_schmidt(m: &mut DMatrix<f64>) {
    let (n, k) = m.shape();
    for j in 0..k {
        for _ in 0..2 {
            for p in 0..j {
                let mut c = 0.0;
                for i in 0..n {
                    c += m[(i, j)] * m[(i, p)];
                }
                for i in 0..n {
                    m[(i, j)] -= c * m[(i, p)];
                }
            }
        }
        let mut nrm = 0.0;
        for i in 0..n {
            nrm += m[(i, j)] * m[(i, j)];
        }
        let nrm = nrm.sqrt().max(1e-300);
        for i in 0..n {
            m[(i, j)] /= nrm;
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    let nrm = norm_slice(&v).max(1e-300);
    scale(1.0 / nrm, &mut v);
    v
}

fn dot_slice(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_slice(a: &[f64]) -> f64 {
    dot_slice(a, a).sqrt()
}

fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

fn scale(c: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= c;
    }
}

fn permute(x: &[f64], perm: &[usize], out: &mut [f64]) {
    for (old, &new) in perm.iter().enumerate() {
        out[new] = x[old];
    }
}

fn unpermute(x: &[f64], perm: &[usize], out: &mut [f64]) {
    for (old, &new) in perm.iter().enumerate() {
        out[old] = x[new];
    }
}

/// Reverse Cuthill-McKee ordering; returns `perm[old] = new` and the
/// half-bandwidth of the permuted matrix.
fn reverse_cuthill_mckee(s: &SparseSym) -> (Vec<usize>, usize) {
    let n = s.n;
    let neighbors = |i: usize| {
        s.col_idx[s.row_ptr[i]..s.row_ptr[i + 1]]
            .iter()
            .copied()
            .filter(move |&j| j != i)
    };
    let degree: Vec<usize> = (0..n).map(|i| neighbors(i).count()).collect();

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        // lowest-degree unvisited vertex seeds the next component
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        visited[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = neighbors(v).filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    let mut perm = vec![0usize; n];
    for (new, &old) in order.iter().enumerate() {
        perm[old] = new;
    }
    let mut bandwidth = 0usize;
    for i in 0..n {
        for idx in s.row_ptr[i]..s.row_ptr[i + 1] {
            let j = s.col_idx[idx];
            bandwidth = bandwidth.max(perm[i].abs_diff(perm[j]));
        }
    }
    (perm, bandwidth)
}

/// Cholesky factorization of a banded SPD matrix, lower band stored row-major.
struct BandedCholesky {
    n: usize,
    bw: usize,
    /// `band[i * (bw+1) + (j - i + bw)]` holds `L[i][j]` for `i-bw <= j <= i`.
    band: Vec<f64>,
}

impl BandedCholesky {
    fn factor(s: &SparseSym, perm: &[usize], bw: usize, shift: f64) -> Result<Self> {
        let n = s.n;
        let stride = bw + 1;
        let mut band = vec![0.0; n * stride];
        for i_old in 0..n {
            let i = perm[i_old];
            for idx in s.row_ptr[i_old]..s.row_ptr[i_old + 1] {
                let j = perm[s.col_idx[idx]];
                if j <= i {
                    band[i * stride + (j + bw - i)] = s.vals[idx];
                }
            }
            band[i * stride + bw] += shift;
        }
        for i in 0..n {
            let j_lo = i.saturating_sub(bw);
            for j in j_lo..=i {
                let mut sum = band[i * stride + (j + bw - i)];
                let k_lo = j_lo.max(j.saturating_sub(bw));
                for k in k_lo..j {
                    sum -= band[i * stride + (k + bw - i)] * band[j * stride + (k + bw - j)];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::Solver(format!("non-positive pivot {sum:.3e} at row {i}")));
                    }
                    band[i * stride + bw] = sum.sqrt();
                } else {
                    band[i * stride + (j + bw - i)] = sum / band[j * stride + bw];
                }
            }
        }
        Ok(Self { n, bw, band })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let stride = self.bw + 1;
        let mut x = b.to_vec();
        for i in 0..self.n {
            let j_lo = i.saturating_sub(self.bw);
            let mut sum = x[i];
            for j in j_lo..i {
                sum -= self.band[i * stride + (j + self.bw - i)] * x[j];
            }
            x[i] = sum / self.band[i * stride + self.bw];
        }
        for i in (0..self.n).rev() {
            let j_hi = (i + self.bw).min(self.n - 1);
            let mut sum = x[i];
            for j in (i + 1)..=j_hi {
                sum -= self.band[j * stride + (i + self.bw - j)] * x[j];
            }
            x[i] = sum / self.band[i * stride + self.bw];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::{cotangent_laplacian, lumped_mass};
    use crate::mesh::primitives;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closed_mesh_has_constant_kernel() {
        let mesh = primitives::torus_grid(8, 10, 2.0, 0.6);
        let basis = spectral_basis(&mesh, 5).unwrap();
        assert!(basis.lambda[0] < 1e-8, "lambda0 = {}", basis.lambda[0]);
        // first eigenfunction is constant
        let c0 = basis.phi[(0, 0)];
        for i in 0..mesh.n_vertices() {
            assert!((basis.phi[(i, 0)] - c0).abs() < 1e-6 * c0.abs().max(1.0));
        }
        for j in 1..5 {
            assert!(basis.lambda[j] >= basis.lambda[j - 1]);
        }
    }

    #[test]
    fn mass_orthonormality_dense_path() {
        let mesh = primitives::icosphere(2, 1.0); // n=162 -> dense
        let basis = spectral_basis(&mesh, 20).unwrap();
        assert!(basis.orthonormality_defect() < 1e-6);
    }

    #[test]
    fn sphere_spectrum_matches_analytic_lanczos_path() {
        // n=642 exceeds the dense threshold, exercising shift-invert Lanczos.
        let mesh = primitives::icosphere(3, 1.0);
        assert!(mesh.n_vertices() > DENSE_LIMIT);
        let basis = spectral_basis(&mesh, 10).unwrap();
        assert!(basis.orthonormality_defect() < 1e-6);
        assert!(basis.lambda[0] < 1e-8);
        let area = mesh.total_area();
        // continuous unit sphere: lambda_{1..3} = l(l+1) = 2
        for j in 1..=3 {
            let normalized = basis.lambda[j] * area / (4.0 * std::f64::consts::PI);
            assert!((normalized - 2.0).abs() / 2.0 < 0.05, "lambda[{j}] normalized = {normalized}");
        }
        // the l=2 band sits near 6
        for j in 4..=8 {
            let normalized = basis.lambda[j] * area / (4.0 * std::f64::consts::PI);
            assert!((normalized - 6.0).abs() / 6.0 < 0.05, "lambda[{j}] normalized = {normalized}");
        }
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let mesh = primitives::torus_grid(24, 30, 2.0, 0.7); // n=720
        let w = cotangent_laplacian(&mesh);
        let mass = lumped_mass(&mesh);
        let inv_sqrt: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        let s = scale_symmetric(&w, &inv_sqrt);

        let (dense_l, _) = dense_smallest(&s, 12).unwrap();
        let total_area: f64 = mass.iter().sum();
        let shift = 4.0 * std::f64::consts::PI * 12.0 / total_area;
        let (lanczos_l, y) = lanczos_smallest(&s, 12, shift).unwrap();
        for (a, b) in dense_l.iter().zip(&lanczos_l) {
            assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()), "dense {a} vs lanczos {b}");
        }
        // orthonormal block
        let g = y.transpose() * &y;
        for i in 0..12 {
            for j in 0..12 {
                let t = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - t).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn recompute_is_bitwise_identical() {
        let mesh = primitives::icosphere(3, 1.0);
        let b1 = spectral_basis(&mesh, 8).unwrap();
        let b2 = spectral_basis(&mesh, 8).unwrap();
        assert_eq!(b1.phi.as_slice(), b2.phi.as_slice());
        assert_eq!(b1.lambda.as_slice(), b2.lambda.as_slice());
    }

    #[test]
    fn k_out_of_range_rejected() {
        let mesh = primitives::regular_tetrahedron();
        let w = cotangent_laplacian(&mesh);
        let mass = lumped_mass(&mesh);
        assert!(matches!(
            eigendecompose(&w, &mass, 4, "t"),
            Err(Error::Dimension(_))
        ));
        assert!(eigendecompose(&w, &mass, 3, "t").is_ok());
    }

    #[test]
    fn mass_norm_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = DMatrix::from_fn(3, 2, |_, _| rng.gen::<f64>() - 0.5);
        let mass = [1.0, 2.0, 3.0];
        let mut brute = 0.0;
        for i in 0..3 {
            for j in 0..2 {
                brute += mass[i] * f[(i, j)] * f[(i, j)];
            }
        }
        assert!((mass_norm_sq(&f, &mass).unwrap() - brute).abs() < 1e-15);
    }

    #[test]
    fn mass_norm_uniform_equals_frobenius() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = DMatrix::from_fn(5, 4, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let uniform = vec![1.0; 5];
        let got = mass_norm_sq(&f, &uniform).unwrap();
        // same row-major accumulation so unit mass is bit-exact
        let frob: f64 = (0..5)
            .map(|i| (0..4).map(|j| f[(i, j)] * f[(i, j)]).sum::<f64>())
            .sum();
        assert_eq!(got, frob);
    }

    #[test]
    fn mass_norm_edge_cases() {
        let zero = DMatrix::<f64>::zeros(4, 3);
        assert_eq!(mass_norm_sq(&zero, &[1.0; 4]).unwrap(), 0.0);
        let ones = DMatrix::<f64>::from_element(4, 3, 1.0);
        let mass = [0.5, 1.5, 2.0, 1.0]; // sums to 5
        assert!((mass_norm_sq(&ones, &mass).unwrap() - 15.0).abs() < 1e-12);
        assert!(mass_norm_sq(&ones, &[1.0; 3]).is_err());
    }
}
