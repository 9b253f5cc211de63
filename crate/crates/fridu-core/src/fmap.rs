//! Functional-map algebra: ground-truth maps from correspondences,
//! descriptor-based initial maps, point-to-point extraction, and spectral
//! upsampling (ZoomOut).

use crate::descriptors::DescriptorSet;
use crate::error::{Error, Result};
use crate::spectral::SpectralBasis;
use nalgebra::DMatrix;

/// A `k2 x k1` matrix mapping coefficient vectors in the source basis
/// (`Phi_1` of `source_mesh_id`) to coefficient vectors in the target basis
/// (`Phi_2` of `target_mesh_id`).
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalMap {
    pub source_mesh_id: String,
    pub target_mesh_id: String,
    pub c: DMatrix<f64>,
}

impl FunctionalMap {
    pub fn new(source_mesh_id: impl Into<String>, target_mesh_id: impl Into<String>, c: DMatrix<f64>) -> Result<Self> {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("functional map contains non-finite entries".into()));
        }
        Ok(Self {
            source_mesh_id: source_mesh_id.into(),
            target_mesh_id: target_mesh_id.into(),
            c,
        })
    }

    pub fn k1(&self) -> usize {
        self.c.ncols()
    }

    pub fn k2(&self) -> usize {
        self.c.nrows()
    }

    /// Constants map to constants for maps derived from valid
    /// correspondences: row 0 should be dominated by its first entry. Logs a
    /// warning when that fails; never an error.
    pub fn warn_if_constant_row_degenerate(&self) {
        let first = self.c[(0, 0)].abs();
        let worst_rest = (1..self.k1()).map(|j| self.c[(0, j)].abs()).fold(0.0, f64::max);
        if worst_rest > first {
            log::warn!(
                "functional map {}->{}: row 0 is not dominated by C[0,0] ({first:.3e} vs {worst_rest:.3e})",
                self.source_mesh_id,
                self.target_mesh_id
            );
        }
    }
}

/// Vertex-to-vertex assignment: `assignment[i]` is the vertex of the source
/// mesh (`M1`) that vertex `i` of the target mesh (`M2`) maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointwiseMap {
    pub source_mesh_id: String,
    pub target_mesh_id: String,
    pub assignment: Vec<usize>,
}

impl PointwiseMap {
    pub fn new(
        source_mesh_id: impl Into<String>,
        target_mesh_id: impl Into<String>,
        assignment: Vec<usize>,
        n1: usize,
    ) -> Result<Self> {
        if let Some(&bad) = assignment.iter().find(|&&v| v >= n1) {
            return Err(Error::Index(format!("assignment targets vertex {bad} but source mesh has {n1} vertices")));
        }
        Ok(Self {
            source_mesh_id: source_mesh_id.into(),
            target_mesh_id: target_mesh_id.into(),
            assignment,
        })
    }

    pub fn n2(&self) -> usize {
        self.assignment.len()
    }
}

/// A function sampled on mesh vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub mesh_id: String,
    pub values: Vec<f64>,
}

/// Ground-truth style construction `C = Phi_2^T A_2 Phi_1[assignment, :]`,
/// the mass-weighted projection of the pulled-back basis.
pub fn fmap_from_p2p(pi: &PointwiseMap, basis1: &SpectralBasis, basis2: &SpectralBasis) -> Result<FunctionalMap> {
    fmap_from_p2p_k(pi, basis1, basis2, basis1.k, basis2.k)
}

/// Same as [`fmap_from_p2p`] restricted to the leading `k1_use`/`k2_use`
/// columns of each basis.
pub fn fmap_from_p2p_k(
    pi: &PointwiseMap,
    basis1: &SpectralBasis,
    basis2: &SpectralBasis,
    k1_use: usize,
    k2_use: usize,
) -> Result<FunctionalMap> {
    if pi.n2() != basis2.n() {
        return Err(Error::Dimension(format!(
            "assignment length {} vs target mesh size {}",
            pi.n2(),
            basis2.n()
        )));
    }
    if k1_use > basis1.k || k2_use > basis2.k {
        return Err(Error::Dimension(format!(
            "requested ({k2_use} x {k1_use}) map exceeds basis sizes ({}, {})",
            basis2.k, basis1.k
        )));
    }
    if pi.assignment.iter().any(|&j| j >= basis1.n()) {
        return Err(Error::Index("assignment exceeds source mesh size".into()));
    }
    // pulled-back basis Pi * Phi_1, rows gathered by the assignment
    let gathered = DMatrix::from_fn(pi.n2(), k1_use, |i, j| basis1.phi[(pi.assignment[i], j)]);
    // Phi_2^T A_2 * gathered, with A_2 diagonal
    let mut weighted = gathered;
    for i in 0..weighted.nrows() {
        let m = basis2.mass[i];
        for j in 0..weighted.ncols() {
            weighted[(i, j)] *= m;
        }
    }
    let c = basis2.phi_lead(k2_use).transpose() * weighted;
    FunctionalMap::new(&basis1.mesh_id, &basis2.mesh_id, c)
}

/// Exact nearest source row for every query row, ties broken by smallest
/// index. Distances are expanded through a block matrix product; results
/// match the naive scan.
pub fn nearest_rows(queries: &DMatrix<f64>, candidates: &DMatrix<f64>) -> Vec<usize> {
    assert_eq!(queries.ncols(), candidates.ncols(), "embedding dims differ");
    let n_q = queries.nrows();
    let n_c = candidates.nrows();
    let cand_sq: Vec<f64> = (0..n_c)
        .map(|j| candidates.row(j).iter().map(|v| v * v).sum())
        .collect();
    let mut result = vec![0usize; n_q];
    let block = 256usize;
    let cand_t = candidates.transpose();
    let mut start = 0;
    while start < n_q {
        let rows = block.min(n_q - start);
        let gram = queries.rows(start, rows) * &cand_t;
        for r in 0..rows {
            let mut best = 0usize;
            let mut best_val = f64::INFINITY;
            for j in 0..n_c {
                let val = cand_sq[j] - 2.0 * gram[(r, j)];
                if val < best_val {
                    best_val = val;
                    best = j;
                }
            }
            result[start + r] = best;
        }
        start += rows;
    }
    result
}

/// Recovers the pointwise map by nearest-neighbor search between the rows of
/// `Phi_2 C` and the rows of `Phi_1`, using the leading `k_use` block.
pub fn p2p_from_fmap(
    map: &FunctionalMap,
    basis1: &SpectralBasis,
    basis2: &SpectralBasis,
    k_use: Option<usize>,
) -> Result<PointwiseMap> {
    let k_max = map.k1().min(map.k2());
    let k_use = k_use.unwrap_or(k_max);
    if k_use == 0 || k_use > k_max {
        return Err(Error::Dimension(format!("k_use={k_use} outside 1..={k_max}")));
    }
    if map.k1() > basis1.k || map.k2() > basis2.k {
        return Err(Error::Dimension(format!(
            "map is ({} x {}) but bases have ({}, {}) columns",
            map.k2(),
            map.k1(),
            basis2.k,
            basis1.k
        )));
    }
    let c_block = map.c.view((0, 0), (k_use, k_use));
    let embedded = basis2.phi_lead(k_use) * c_block;
    let targets = basis1.phi_lead(k_use);
    let assignment = nearest_rows(&embedded, &targets);
    PointwiseMap::new(&basis1.mesh_id, &basis2.mesh_id, assignment, basis1.n())
}

/// ZoomOut spectral upsampling: alternate pointwise extraction and
/// functional-map recomputation while growing the spectral dimension from
/// `k_start` to `k_end` in increments of `step`.
pub fn zoomout(
    c_init: &FunctionalMap,
    basis1: &SpectralBasis,
    basis2: &SpectralBasis,
    k_start: usize,
    k_end: usize,
    step: usize,
) -> Result<FunctionalMap> {
    if k_start == 0 || step == 0 {
        return Err(Error::Dimension("k_start and step must be positive".into()));
    }
    if k_start > k_end || k_end > basis1.k.min(basis2.k) {
        return Err(Error::Dimension(format!(
            "upsampling schedule {k_start}..{k_end} exceeds basis sizes ({}, {})",
            basis1.k, basis2.k
        )));
    }
    if c_init.k1() < k_start || c_init.k2() < k_start {
        return Err(Error::Dimension(format!(
            "initial map ({} x {}) smaller than k_start={k_start}",
            c_init.k2(),
            c_init.k1()
        )));
    }

    let block = c_init.c.view((0, 0), (k_start, k_start)).into_owned();
    let mut current = FunctionalMap::new(&c_init.source_mesh_id, &c_init.target_mesh_id, block)?;
    if k_start == k_end {
        // single projection round trip
        let pi = p2p_from_fmap(&current, basis1, basis2, None)?;
        return fmap_from_p2p_k(&pi, basis1, basis2, k_end, k_end);
    }
    let mut k = k_start;
    while k < k_end {
        let pi = p2p_from_fmap(&current, basis1, basis2, None)?;
        k = (k + step).min(k_end);
        current = fmap_from_p2p_k(&pi, basis1, basis2, k, k)?;
    }
    Ok(current)
}

/// Descriptor-preservation least squares with Laplacian-commutativity
/// regularization: minimizes
/// `||C (Phi_1^+ D_1) - (Phi_2^+ D_2)||_F^2 + lambda_lap ||C L1 - L2 C||_F^2`.
/// The commutator term is diagonal per entry, so the system solves row-wise
/// in closed form.
pub fn fmap_from_descriptors(
    desc1: &DescriptorSet,
    desc2: &DescriptorSet,
    basis1: &SpectralBasis,
    basis2: &SpectralBasis,
    lambda_lap: f64,
) -> Result<FunctionalMap> {
    if desc1.d() != desc2.d() {
        return Err(Error::Dimension(format!(
            "descriptor widths differ: {} vs {}",
            desc1.d(),
            desc2.d()
        )));
    }
    if desc1.n() != basis1.n() || desc2.n() != basis2.n() {
        return Err(Error::Dimension("descriptor row counts do not match mesh sizes".into()));
    }
    if lambda_lap < 0.0 {
        return Err(Error::Config(format!("lambda_lap={lambda_lap} must be nonnegative")));
    }
    let (k1, k2) = (basis1.k, basis2.k);
    if desc1.d() < k1 {
        log::warn!(
            "only {} descriptor columns for a {k2}x{k1} map; the least-squares system is underdetermined without regularization",
            desc1.d()
        );
    }

    // spectral coefficients of the descriptors
    let g1 = basis1.phi_pinv() * &desc1.values; // k1 x d
    let g2 = basis2.phi_pinv() * &desc2.values; // k2 x d
    let gram = &g1 * g1.transpose(); // k1 x k1
    let rhs = &g2 * g1.transpose(); // k2 x k1

    let mut c = DMatrix::zeros(k2, k1);
    for i in 0..k2 {
        // row i sees the Gram matrix plus its own diagonal commutator weights
        let mut system = gram.clone();
        for j in 0..k1 {
            let diff = basis1.lambda[j] - basis2.lambda[i];
            system[(j, j)] += lambda_lap * diff * diff;
        }
        let chol = system.cholesky().ok_or_else(|| {
            Error::SingularSystem(format!(
                "descriptor Gram matrix is rank-deficient at row {i} (d={}, lambda_lap={lambda_lap})",
                desc1.d()
            ))
        })?;
        let sol = chol.solve(&rhs.row(i).transpose());
        for j in 0..k1 {
            c[(i, j)] = sol[j];
        }
    }
    FunctionalMap::new(&basis1.mesh_id, &basis2.mesh_id, c)
}
