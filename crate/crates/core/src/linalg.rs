//! Condensed sparse SPD systems over the free degrees of freedom.

use nalgebra::DVector;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::{PsiError, Result};

/// Pivots below this fraction of the largest diagonal entry mark a singular matrix.
const PIVOT_RATIO: f64 = 1e-12;

/// Sparse row vector stored as `(column, value)` pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    pub entries: Vec<(usize, f64)>,
}

impl SparseRow {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(j, v)| v * x[j]).sum()
    }

    /// `y += alpha * row^T`
    pub fn axpy_transpose(&self, alpha: f64, y: &mut [f64]) {
        for &(j, v) in &self.entries {
            y[j] += alpha * v;
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(j, v) in &self.entries {
            out[j] += v;
        }
        out
    }
}

/// Split of the DOFs into free and prescribed sets.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    n_dofs: usize,
    free: Vec<usize>,
    slot: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(n_dofs: usize, prescribed: impl IntoIterator<Item = usize>) -> Self {
        let mut is_prescribed = vec![false; n_dofs];
        for d in prescribed {
            is_prescribed[d] = true;
        }
        let mut slot = vec![None; n_dofs];
        let mut free = Vec::new();
        for (d, &p) in is_prescribed.iter().enumerate() {
            if !p {
                slot[d] = Some(free.len());
                free.push(d);
            }
        }
        Self { n_dofs, free, slot }
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn slot(&self, dof: usize) -> Option<usize> {
        self.slot[dof]
    }

    pub fn is_free(&self, dof: usize) -> bool {
        self.slot[dof].is_some()
    }

    /// Picks the free entries out of a full-length vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }

    /// Scatters free values into a full-length vector whose other entries come from `base`.
    pub fn expand(&self, free_values: &[f64], base: &[f64]) -> Vec<f64> {
        let mut out = base.to_vec();
        for (&d, &v) in self.free.iter().zip(free_values) {
            out[d] = v;
        }
        out
    }
}

/// Assembles `sum_e coeff_e * row_e^T row_e` restricted to the free DOFs.
pub fn assemble_gram(rows: &[SparseRow], coeffs: &[f64], dofs: &DofMap) -> CscMatrix<f64> {
    let n = dofs.n_free();
    let mut coo = CooMatrix::new(n, n);
    for (row, &k) in rows.iter().zip(coeffs) {
        for &(i, vi) in &row.entries {
            let Some(si) = dofs.slot(i) else { continue };
            for &(j, vj) in &row.entries {
                if let Some(sj) = dofs.slot(j) {
                    coo.push(si, sj, k * vi * vj);
                }
            }
        }
    }
    CscMatrix::from(&coo)
}

/// Cholesky factorization of a condensed SPD matrix.
pub struct SpdSolver {
    n: usize,
    chol: Option<CscCholesky<f64>>,
}

impl std::fmt::Debug for SpdSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpdSolver").field("n", &self.n).finish()
    }
}

impl SpdSolver {
    /// Factorizes `matrix`, rejecting it when it is not numerically positive definite.
    pub fn factor(matrix: &CscMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 {
            return Ok(Self { n, chol: None });
        }
        let mut max_diag = 0.0f64;
        for (i, j, v) in matrix.triplet_iter() {
            if i == j {
                max_diag = max_diag.max(*v);
            }
        }
        if !(max_diag > 0.0) {
            return Err(PsiError::Linear(
                "matrix has no positive diagonal entry".into(),
            ));
        }
        let chol = CscCholesky::factor(matrix)
            .map_err(|e| PsiError::Linear(format!("Cholesky factorization failed: {e:?}")))?;
        let l = chol.l();
        for (i, j, v) in l.triplet_iter() {
            if i == j && v * v <= PIVOT_RATIO * max_diag {
                return Err(PsiError::Linear(format!(
                    "near-zero pivot at condensed row {i} ({:e} vs max diagonal {max_diag:e})",
                    v * v
                )));
            }
        }
        Ok(Self {
            n,
            chol: Some(chol),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n, "right-hand side length");
        match &self.chol {
            None => Vec::new(),
            Some(chol) => {
                let b = DVector::from_column_slice(rhs);
                chol.solve(&b).column(0).iter().copied().collect()
            }
        }
    }
}

/// `y = A x` for a CSC matrix.
pub fn csc_mul(a: &CscMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    for (i, j, v) in a.triplet_iter() {
        y[i] += v * x[j];
    }
    y
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
