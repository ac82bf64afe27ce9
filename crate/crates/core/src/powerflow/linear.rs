use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::laplacian::{build_laplacian, LaplacianMatrix, Weight};

/// `theta = H^{-1} p` for a reduced susceptance Laplacian.
pub fn dc_pf(h: &LaplacianMatrix, p: &DVector<f64>) -> Result<DVector<f64>> {
    if p.len() != h.dim() {
        return Err(Error::Dimension(format!(
            "injection vector has {} entries, Laplacian has {}",
            p.len(),
            h.dim()
        )));
    }
    let chol = h
        .values
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("reduced Laplacian is not positive definite".into()))?;
    Ok(chol.solve(p))
}

/// Solves the linearized coupled model
///
/// ```text
/// [ H_g   H_b ] [ v     ]   [ p ]
/// [ H_b  -H_g ] [ theta ] = [ q ]
/// ```
///
/// returning `(v, theta)`, both deviations from the flat profile.
pub fn lc_pf(
    h_beta: &LaplacianMatrix,
    h_g: &LaplacianMatrix,
    p: &DVector<f64>,
    q: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = h_beta.dim();
    if h_g.dim() != n || h_g.labels != h_beta.labels || p.len() != n || q.len() != n {
        return Err(Error::Dimension("mismatched coupled power-flow inputs".into()));
    }
    let m = coupled_matrix(h_beta, h_g);
    let lu = m.lu();
    let mut rhs = DVector::zeros(2 * n);
    rhs.rows_mut(0, n).copy_from(p);
    rhs.rows_mut(n, n).copy_from(q);
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("coupled power-flow matrix is singular".into()))?;
    Ok((x.rows(0, n).into_owned(), x.rows(n, n).into_owned()))
}

fn coupled_matrix(h_beta: &LaplacianMatrix, h_g: &LaplacianMatrix) -> DMatrix<f64> {
    let n = h_beta.dim();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&h_g.values);
    m.view_mut((0, n), (n, n)).copy_from(&h_beta.values);
    m.view_mut((n, 0), (n, n)).copy_from(&h_beta.values);
    m.view_mut((n, n), (n, n)).copy_from(&(-&h_g.values));
    m
}

/// DC power flow with the inverse Laplacian cached for batch solves.
#[derive(Clone, Debug)]
pub struct DcSolver {
    pub h: LaplacianMatrix,
    j: DMatrix<f64>,
}

impl DcSolver {
    pub fn new(grid: &Grid) -> Result<Self> {
        let h = build_laplacian(grid, Weight::Susceptance);
        let j = h.inverse()?;
        Ok(DcSolver { h, j })
    }

    pub fn solve(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.j * p
    }

    /// Phases for each row of a `T x N` injection matrix.
    pub fn solve_rows(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        p * &self.j
    }
}

/// Linearized coupled model with its inverse cached for batch solves.
#[derive(Clone, Debug)]
pub struct LcSolver {
    n: usize,
    inverse: DMatrix<f64>,
}

impl LcSolver {
    pub fn new(grid: &Grid) -> Result<Self> {
        let hb = build_laplacian(grid, Weight::Susceptance);
        let hg = build_laplacian(grid, Weight::Conductance);
        let inverse = coupled_matrix(&hb, &hg)
            .try_inverse()
            .ok_or_else(|| Error::Singular("coupled power-flow matrix is singular".into()))?;
        Ok(LcSolver {
            n: hb.dim(),
            inverse,
        })
    }

    pub fn solve(&self, p: &DVector<f64>, q: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.n;
        let x = self.inverse.columns(0, n) * p + self.inverse.columns(n, n) * q;
        (x.rows(0, n).into_owned(), x.rows(n, n).into_owned())
    }

    /// `(v, theta)` for each row of `T x N` injection matrices.
    pub fn solve_rows(&self, p: &DMatrix<f64>, q: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n;
        let inv_t = self.inverse.transpose();
        let x = p * inv_t.rows(0, n) + q * inv_t.rows(n, n);
        (x.columns(0, n).into_owned(), x.columns(n, n).into_owned())
    }

    /// The `2N x 2N` map from `(p, q)` to `(v, theta)`.
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }
}
