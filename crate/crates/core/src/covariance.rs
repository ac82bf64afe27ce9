//! Second-order statistics of voltage samples: empirical and analytic
//! covariances, guarded inversion, and the noise/SNR quantities that set
//! the learner's thresholds.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{Grid, NodeId};
use crate::laplacian::{build_laplacian, LaplacianMatrix, Weight};
use crate::linalg;
use crate::powerflow::{LcSolver, SampleSet};

/// Condition numbers above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Symmetric covariance over labeled nodes. `sample_count` is `None` for
/// analytic matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix {
    pub values: DMatrix<f64>,
    pub labels: Vec<NodeId>,
    pub sample_count: Option<usize>,
}

impl CovarianceMatrix {
    pub fn new(values: DMatrix<f64>, labels: Vec<NodeId>, sample_count: Option<usize>) -> Result<Self> {
        if values.nrows() != labels.len() || values.ncols() != labels.len() {
            return Err(Error::Dimension(format!(
                "{}x{} covariance with {} labels",
                values.nrows(),
                values.ncols(),
                labels.len()
            )));
        }
        Ok(CovarianceMatrix {
            values,
            labels,
            sample_count,
        })
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.labels.iter().position(|&l| l == id)
    }

    pub fn get(&self, a: NodeId, b: NodeId) -> Option<f64> {
        Some(self.values[(self.index_of(a)?, self.index_of(b)?)])
    }

    /// Principal sub-matrix over `keep`, in that order.
    pub fn restrict(&self, keep: &[NodeId]) -> Result<CovarianceMatrix> {
        let idx = linalg::positions(&self.labels, keep)?;
        Ok(CovarianceMatrix {
            values: linalg::select(&self.values, &idx, &idx),
            labels: keep.to_vec(),
            sample_count: self.sample_count,
        })
    }

    pub fn sigma_min(&self) -> f64 {
        linalg::eig_extremes(&self.values).0.max(0.0)
    }

    pub fn sigma_max(&self) -> f64 {
        linalg::eig_extremes(&self.values).1.max(0.0)
    }
}

/// Covariance of stacked `[v; theta]` over `labels`; the first `N` rows
/// and columns are magnitudes, the last `N` phases.
#[derive(Clone, Debug, PartialEq)]
pub struct JointCovariance {
    pub values: DMatrix<f64>,
    pub labels: Vec<NodeId>,
    pub sample_count: Option<usize>,
}

impl JointCovariance {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    fn stacked_positions(&self, keep: &[NodeId]) -> Result<Vec<usize>> {
        let idx = linalg::positions(&self.labels, keep)?;
        let n = self.dim();
        Ok(idx.iter().copied().chain(idx.iter().map(|k| k + n)).collect())
    }

    pub fn restrict(&self, keep: &[NodeId]) -> Result<JointCovariance> {
        let idx = self.stacked_positions(keep)?;
        Ok(JointCovariance {
            values: linalg::select(&self.values, &idx, &idx),
            labels: keep.to_vec(),
            sample_count: self.sample_count,
        })
    }

    /// Phase block.
    pub fn theta(&self) -> CovarianceMatrix {
        let n = self.dim();
        CovarianceMatrix {
            values: self.values.view((n, n), (n, n)).into_owned(),
            labels: self.labels.clone(),
            sample_count: self.sample_count,
        }
    }

    /// Magnitude block.
    pub fn v(&self) -> CovarianceMatrix {
        let n = self.dim();
        CovarianceMatrix {
            values: self.values.view((0, 0), (n, n)).into_owned(),
            labels: self.labels.clone(),
            sample_count: self.sample_count,
        }
    }
}

fn centered_gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let t = x.nrows() as f64;
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.sum() / t;
        col.add_scalar_mut(-mean);
    }
    let mut cov = centered.tr_mul(&centered) / t;
    linalg::symmetrize(&mut cov);
    cov
}

/// `(1/T) sum_t x_t x_t^T` of the mean-removed phase samples.
pub fn empirical_covariance(samples: &SampleSet) -> Result<CovarianceMatrix> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    CovarianceMatrix::new(
        centered_gram(&samples.theta),
        samples.labels.clone(),
        Some(samples.len()),
    )
}

/// Empirical covariance of `[v; theta]`; requires magnitude samples.
pub fn empirical_joint_covariance(samples: &SampleSet) -> Result<JointCovariance> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let v = samples.v.as_ref().ok_or_else(|| {
        Error::InvalidArgument("joint covariance needs voltage-magnitude samples".into())
    })?;
    let n = samples.dim();
    let mut stacked = DMatrix::zeros(samples.len(), 2 * n);
    stacked.columns_mut(0, n).copy_from(v);
    stacked.columns_mut(n, n).copy_from(&samples.theta);
    Ok(JointCovariance {
        values: centered_gram(&stacked),
        labels: samples.labels.clone(),
        sample_count: Some(samples.len()),
    })
}

fn check_no_excitation_on(sigma: &DMatrix<f64>, labels: &[NodeId], zero: &[NodeId], what: &str) -> Result<()> {
    for &u in zero {
        let k = labels
            .iter()
            .position(|&l| l == u)
            .ok_or(Error::UnknownLabel(u))?;
        if sigma.row(k).iter().any(|&x| x != 0.0) || sigma.column(k).iter().any(|&x| x != 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{what} is nonzero on zero-injection node {u}"
            )));
        }
    }
    Ok(())
}

/// Exact DC phase covariance `J Sigma_p J` with `J = H^{-1}`. `sigma_p` is
/// indexed like `h.labels` and must vanish on the `zero` nodes.
pub fn analytic_theta_covariance(
    h: &LaplacianMatrix,
    sigma_p: &DMatrix<f64>,
    zero: &[NodeId],
) -> Result<CovarianceMatrix> {
    let n = h.dim();
    if sigma_p.nrows() != n || sigma_p.ncols() != n {
        return Err(Error::Dimension(format!(
            "injection covariance must be {n}x{n}"
        )));
    }
    check_no_excitation_on(sigma_p, &h.labels, zero, "injection covariance")?;
    let j = h.inverse()?;
    let mut values = &j * sigma_p * &j;
    linalg::symmetrize(&mut values);
    CovarianceMatrix::new(values, h.labels.clone(), None)
}

/// Exact covariance of `[v; theta]` under the linearized coupled model for
/// active, reactive, and cross injection covariances.
pub fn analytic_joint_covariance(
    grid: &Grid,
    sigma_p: &DMatrix<f64>,
    sigma_q: &DMatrix<f64>,
    sigma_pq: &DMatrix<f64>,
) -> Result<JointCovariance> {
    let labels = grid.labels();
    let n = labels.len();
    for m in [sigma_p, sigma_q, sigma_pq] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Dimension(format!(
                "injection covariances must be {n}x{n}"
            )));
        }
    }
    let zero = grid.zero_injection();
    check_no_excitation_on(sigma_p, &labels, &zero, "active injection covariance")?;
    check_no_excitation_on(sigma_q, &labels, &zero, "reactive injection covariance")?;
    let mut s = DMatrix::zeros(2 * n, 2 * n);
    s.view_mut((0, 0), (n, n)).copy_from(sigma_p);
    s.view_mut((n, n), (n, n)).copy_from(sigma_q);
    s.view_mut((0, n), (n, n)).copy_from(sigma_pq);
    s.view_mut((n, 0), (n, n)).copy_from(&sigma_pq.transpose());
    let m = LcSolver::new(grid)?.inverse().clone();
    let mut values = &m * s * m.transpose();
    linalg::symmetrize(&mut values);
    Ok(JointCovariance {
        values,
        labels,
        sample_count: None,
    })
}

/// Symmetric inverse of a positive definite matrix with condition number at
/// most [`MAX_CONDITION`].
pub fn inverse_matrix(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = c.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let (lo, hi) = linalg::eig_extremes(c);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let mut inv = linalg::spd_inverse(c).ok_or(Error::IllConditioned { condition })?;
    let eye = DMatrix::<f64>::identity(n, n);
    // One Newton-Schulz step tightens the residual for poorly scaled input.
    let resid = c * &inv - &eye;
    if resid.amax() > 1e-12 {
        inv = &inv - &inv * resid;
        linalg::symmetrize(&mut inv);
    }
    // The attainable residual is roughly machine epsilon times the
    // condition number, so near the conditioning limit it cannot meet 1e-8.
    let resid = (c * &inv - eye).amax();
    if resid > 1e-8 {
        log::warn!("inverse residual {resid:e} at condition number {condition:e}");
    }
    Ok(inv)
}

pub fn inverse_covariance(c: &CovarianceMatrix) -> Result<DMatrix<f64>> {
    inverse_matrix(&c.values)
}

/// Grid and signal-to-noise quantities that drive the noise margins.
#[derive(Clone, Debug, PartialEq)]
pub struct SnrParams {
    pub beta_min: f64,
    /// Largest weighted degree over `beta_min`.
    pub s_id: f64,
    /// `sigma_min(Sigma_theta over U_c) / sigma_max(Sigma_n)`; infinite
    /// without noise.
    pub snr: f64,
    pub sigma_min: f64,
    pub noise_max: f64,
}

pub fn snr_params(
    grid: &Grid,
    sigma_theta_uc: &CovarianceMatrix,
    sigma_n: &CovarianceMatrix,
) -> SnrParams {
    let h = build_laplacian(grid, Weight::Susceptance);
    let beta_min = grid.beta_min();
    let max_diag = h.values.diagonal().max();
    let sigma_min = sigma_theta_uc.sigma_min();
    let noise_max = sigma_n.sigma_max();
    let snr = if noise_max > 0.0 {
        sigma_min / noise_max
    } else {
        f64::INFINITY
    };
    SnrParams {
        beta_min,
        s_id: max_diag / beta_min,
        snr,
        sigma_min,
        noise_max,
    }
}

/// Change in the inverse covariance caused by additive noise,
/// `Sigma^{-1} - (Sigma + Sigma_n)^{-1}`, computed through the Woodbury form
/// `Sigma^{-1} (Sigma_n^{-1} + Sigma^{-1})^{-1} Sigma^{-1}` and checked
/// against the direct difference.
pub fn woodbury_deviation(sigma: &DMatrix<f64>, sigma_n: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if sigma.shape() != sigma_n.shape() {
        return Err(Error::Dimension("signal and noise covariances differ in size".into()));
    }
    let s_inv = inverse_matrix(sigma)?;
    let n_inv = linalg::spd_inverse(sigma_n)
        .ok_or_else(|| Error::Singular("noise covariance is not positive definite".into()))?;
    let mid = linalg::spd_inverse(&(&n_inv + &s_inv))
        .ok_or_else(|| Error::Singular("Woodbury middle factor is singular".into()))?;
    let mut wood = &s_inv * mid * &s_inv;
    linalg::symmetrize(&mut wood);

    let total_inv = linalg::spd_inverse(&(sigma + sigma_n))
        .ok_or_else(|| Error::Singular("noisy covariance is singular".into()))?;
    let direct = &s_inv - total_inv;
    let gap = (&direct - &wood).amax();
    let scale = s_inv.amax().max(1.0);
    if gap > 1e-8 * scale {
        return Err(Error::Numerical(format!(
            "Woodbury and direct deviations differ by {gap:e}"
        )));
    }
    Ok(wood)
}

/// Diagonal noise covariance for relative noise `r` on a clean covariance:
/// `r * diag(Sigma)`.
pub fn relative_noise_covariance(clean: &CovarianceMatrix, r: f64) -> CovarianceMatrix {
    CovarianceMatrix {
        values: DMatrix::from_diagonal(&(clean.values.diagonal() * r)),
        labels: clean.labels.clone(),
        sample_count: clean.sample_count,
    }
}

/// `eps * I` over the given labels.
pub fn isotropic_noise(labels: &[NodeId], eps: f64) -> CovarianceMatrix {
    CovarianceMatrix {
        values: DMatrix::from_diagonal(&DVector::from_element(labels.len(), eps)),
        labels: labels.to_vec(),
        sample_count: None,
    }
}
