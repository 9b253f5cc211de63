//! Pointwise shape descriptors: wave kernel signatures, landmark indicator
//! functions, and ingestion of externally computed descriptor files.

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::spectral::SpectralBasis;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DescriptorKind {
    Wks,
    External,
}

/// Parameters that produced a descriptor set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DescriptorMeta {
    Wks {
        n_descr: usize,
        subsample_step: usize,
        n_eigs: usize,
    },
    Landmarks {
        indices: Vec<usize>,
    },
    External {
        path: String,
    },
}

/// One descriptor function per column, row order = mesh vertex order.
#[derive(Debug, Clone)]
pub struct DescriptorSet {
    pub mesh_id: String,
    pub kind: DescriptorKind,
    pub values: DMatrix<f64>,
    pub meta: DescriptorMeta,
}

impl DescriptorSet {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    fn check_no_zero_column(values: &DMatrix<f64>) -> Result<()> {
        for j in 0..values.ncols() {
            if values.column(j).iter().all(|&v| v == 0.0) {
                return Err(Error::Validation(format!("descriptor column {j} is identically zero")));
            }
        }
        Ok(())
    }

    /// Horizontally stacks two descriptor sets of the same mesh, scaling the
    /// appended columns by `weight`.
    pub fn append_weighted(&self, extra: &DescriptorSet, weight: f64) -> Result<DescriptorSet> {
        if extra.n() != self.n() {
            return Err(Error::Dimension(format!(
                "cannot append descriptors with {} rows to {} rows",
                extra.n(),
                self.n()
            )));
        }
        let mut values = DMatrix::zeros(self.n(), self.d() + extra.d());
        values.view_mut((0, 0), (self.n(), self.d())).copy_from(&self.values);
        for j in 0..extra.d() {
            for i in 0..self.n() {
                values[(i, self.d() + j)] = weight * extra.values[(i, j)];
            }
        }
        Ok(DescriptorSet {
            mesh_id: self.mesh_id.clone(),
            kind: self.kind,
            values,
            meta: self.meta.clone(),
        })
    }
}

/// Sparse correspondences used as extra functional constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    /// `(vertex on M1, vertex on M2)` pairs.
    pub pairs: Vec<(usize, usize)>,
}

impl LandmarkSet {
    pub fn new(pairs: Vec<(usize, usize)>, n1: usize, n2: usize) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for &(a, b) in &pairs {
            if a >= n1 || b >= n2 {
                return Err(Error::Index(format!("landmark pair ({a}, {b}) out of range ({n1}, {n2})")));
            }
            if !seen.insert(a) {
                return Err(Error::Validation(format!("duplicate landmark source index {a}")));
            }
        }
        Ok(Self { pairs })
    }

    pub fn source_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    pub fn target_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.1).collect()
    }
}

/// Wave kernel signature in the standard band-pass form
/// `f_E(x) = sum_l phi_l(x)^2 exp(-(log E - log lambda_l)^2 / (2 sigma_w^2))`
/// with `n_descr` energies log-spaced over the positive spectrum, each column
/// normalized by its mass-weighted integral, keeping every
/// `subsample_step`-th energy.
pub fn wks(basis: &SpectralBasis, n_descr: usize, subsample_step: usize, n_eigs: usize) -> Result<DescriptorSet> {
    if basis.k < n_eigs {
        return Err(Error::Dimension(format!(
            "WKS needs a basis of at least {n_eigs} eigenpairs, got {}",
            basis.k
        )));
    }
    if n_eigs < 3 {
        return Err(Error::Dimension("WKS needs at least 3 eigenpairs".into()));
    }
    if subsample_step == 0 || n_descr < subsample_step {
        return Err(Error::Dimension(format!(
            "n_descr={n_descr} must be at least subsample_step={subsample_step} > 0"
        )));
    }
    // eigenvalue 0 has no log-energy; use indices 1..n_eigs
    let lambda: Vec<f64> = (1..n_eigs).map(|i| basis.lambda[i]).collect();
    if lambda[0] <= 0.0 {
        return Err(Error::Validation("spectrum has no positive eigenvalue after the kernel".into()));
    }
    let mut e_min = lambda[0].ln();
    let mut e_max = lambda[lambda.len() - 1].ln();
    if !(e_max > e_min) {
        return Err(Error::Validation("degenerate spectrum: all eigenvalues equal".into()));
    }
    let sigma_w = 7.0 * (e_max - e_min) / n_descr as f64;
    // inset the band ends by 2 sigma so no energy loses half its band-pass
    // mass to spectrum truncation; clamped to keep a nonempty range
    let inset = (2.0 * sigma_w).min(0.2 * (e_max - e_min));
    e_min += inset;
    e_max -= inset;
    let spacing = (e_max - e_min) / (n_descr.max(2) - 1) as f64;

    let n = basis.n();
    let energies: Vec<f64> = (0..n_descr).map(|t| e_min + t as f64 * spacing).collect();
    let kept: Vec<usize> = (0..n_descr).step_by(subsample_step).take(n_descr / subsample_step).collect();

    let mut values = DMatrix::zeros(n, kept.len());
    for (col, &t) in kept.iter().enumerate() {
        let e = energies[t];
        let weights: Vec<f64> = lambda
            .iter()
            .map(|&l| (-(e - l.ln()).powi(2) / (2.0 * sigma_w * sigma_w)).exp())
            .collect();
        let mut integral = 0.0;
        for i in 0..n {
            let mut acc = 0.0;
            for (l_idx, &w) in weights.iter().enumerate() {
                let phi = basis.phi[(i, l_idx + 1)];
                acc += phi * phi * w;
            }
            values[(i, col)] = acc;
            integral += basis.mass[i] * acc;
        }
        for i in 0..n {
            values[(i, col)] /= integral;
        }
    }

    DescriptorSet::check_no_zero_column(&values)?;
    Ok(DescriptorSet {
        mesh_id: basis.mesh_id.clone(),
        kind: DescriptorKind::Wks,
        values,
        meta: DescriptorMeta::Wks {
            n_descr,
            subsample_step,
            n_eigs,
        },
    })
}

/// One column per landmark: the vertex indicator smoothed by projection onto
/// the basis, `Phi (Phi^T A delta_v)`. Matched columns on both shapes act as
/// extra descriptor constraints.
pub fn landmark_functions(basis: &SpectralBasis, indices: &[usize]) -> Result<DescriptorSet> {
    let n = basis.n();
    for &v in indices {
        if v >= n {
            return Err(Error::Index(format!("landmark vertex {v} out of range (n={n})")));
        }
    }
    if indices.is_empty() {
        log::warn!("landmark_functions called with zero landmarks; returning an empty descriptor set");
    }
    let mut values = DMatrix::zeros(n, indices.len());
    for (col, &v) in indices.iter().enumerate() {
        // coefficients of the projected indicator: mass[v] * phi[v, :]
        let m = basis.mass[v];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..basis.k {
                acc += basis.phi[(i, j)] * basis.phi[(v, j)];
            }
            values[(i, col)] = m * acc;
        }
    }
    Ok(DescriptorSet {
        mesh_id: basis.mesh_id.clone(),
        kind: DescriptorKind::Wks,
        values,
        meta: DescriptorMeta::Landmarks {
            indices: indices.to_vec(),
        },
    })
}

/// Reads an externally computed descriptor file: CSV or whitespace-separated
/// text, `n` rows, `d` columns, no header, row order = vertex order.
pub fn load_external_descriptors(path: &std::path::Path, mesh: &TriangleMesh) -> Result<DescriptorSet> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad value '{t}' at line {}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse(format!(
                    "ragged descriptor file: line {} has {} values, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.len() != mesh.n_vertices() {
        return Err(Error::Dimension(format!(
            "descriptor file has {} rows but mesh '{}' has {} vertices",
            rows.len(),
            mesh.mesh_id,
            mesh.n_vertices()
        )));
    }
    let d = rows[0].len();
    let values = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    DescriptorSet::check_no_zero_column(&values)?;
    Ok(DescriptorSet {
        mesh_id: mesh.mesh_id.clone(),
        kind: DescriptorKind::External,
        values,
        meta: DescriptorMeta::External {
            path: path.display().to_string(),
        },
    })
}
