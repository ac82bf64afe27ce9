//! Reference-reduced weighted Laplacians and Kron reduction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Grid, NodeId};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weight {
    Susceptance,
    Conductance,
}

/// Dense symmetric matrix indexed by node labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianMatrix {
    pub values: DMatrix<f64>,
    pub labels: Vec<NodeId>,
}

impl LaplacianMatrix {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.labels.iter().position(|&l| l == id)
    }

    pub fn get(&self, a: NodeId, b: NodeId) -> Option<f64> {
        Some(self.values[(self.index_of(a)?, self.index_of(b)?)])
    }

    /// Sub-matrix over `rows x cols`, given as labels.
    pub fn block(&self, rows: &[NodeId], cols: &[NodeId]) -> Result<DMatrix<f64>> {
        let ri = linalg::positions(&self.labels, rows)?;
        let ci = linalg::positions(&self.labels, cols)?;
        Ok(linalg::select(&self.values, &ri, &ci))
    }

    /// Inverse of the reduced Laplacian, `J = H^{-1}`.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        linalg::spd_inverse(&self.values).ok_or_else(|| {
            Error::Singular("reduced Laplacian is not positive definite".into())
        })
    }
}

/// Reduced weighted Laplacian over the grid's non-reference nodes, ordered
/// as [`Grid::labels`]. The diagonal includes lines to the reference.
pub fn build_laplacian(grid: &Grid, weight: Weight) -> LaplacianMatrix {
    let labels = grid.labels();
    let n = labels.len();
    let mut index = vec![None; grid.nodes().last().map_or(0, |n| n.id + 1)];
    for (k, &id) in labels.iter().enumerate() {
        index[id] = Some(k);
    }
    let mut values = DMatrix::zeros(n, n);
    for line in grid.lines() {
        let w = match weight {
            Weight::Susceptance => line.beta,
            Weight::Conductance => line.g,
        };
        let (a, b) = (index[line.i], index[line.j]);
        if let Some(a) = a {
            values[(a, a)] += w;
        }
        if let Some(b) = b {
            values[(b, b)] += w;
        }
        if let (Some(a), Some(b)) = (a, b) {
            values[(a, b)] -= w;
            values[(b, a)] -= w;
        }
    }
    LaplacianMatrix { values, labels }
}

/// Schur complement eliminating the nodes in `eliminate`:
/// `H_cc - H_cu H_uu^{-1} H_uc`, labeled by the remaining nodes in their
/// original order.
pub fn kron_reduce(h: &LaplacianMatrix, eliminate: &[NodeId]) -> Result<LaplacianMatrix> {
    if eliminate.is_empty() {
        return Ok(h.clone());
    }
    for &u in eliminate {
        if h.index_of(u).is_none() {
            return Err(Error::UnknownLabel(u));
        }
    }
    let keep: Vec<NodeId> = h
        .labels
        .iter()
        .copied()
        .filter(|l| !eliminate.contains(l))
        .collect();
    let h_uu = h.block(eliminate, eliminate)?;
    let h_uc = h.block(eliminate, &keep)?;
    let h_cc = h.block(&keep, &keep)?;
    let lu = h_uu.clone().full_piv_lu();
    if !lu.is_invertible() {
        return Err(Error::Singular(
            "eliminated block of the Laplacian is singular".into(),
        ));
    }
    let solved = lu
        .solve(&h_uc)
        .ok_or_else(|| Error::Singular("eliminated block of the Laplacian is singular".into()))?;
    let mut values = h_cc - h_uc.transpose() * solved;
    linalg::symmetrize(&mut values);
    Ok(LaplacianMatrix {
        values,
        labels: keep,
    })
}
