//! Constrained least-squares regressions of one node's voltage on the
//! others, the discriminator for zero-injection buses.
//!
//! Every problem is a convex quadratic program
//! `min x^T Q x - 2 c^T x + d` over a polytope. The real problems live on
//! the clipped simplex `{x >= 0, 1^T x <= 1}` and are solved exactly with
//! Wolfe's minimum-norm-point method after homogenizing with a slack
//! coordinate. The complex problem eliminates its imaginary block, solves
//! the remaining simplex problem the same way, and falls back to
//! accelerated projected gradient with an active-set polish when the
//! eliminated block hits its bounds.

mod apg;
mod wolfe;

use nalgebra::{DMatrix, DVector};

use crate::covariance::{CovarianceMatrix, JointCovariance};
use crate::error::{Error, Result};
use crate::grid::NodeId;
use crate::linalg;

pub use apg::{project_clipped_simplex, Block, FeasibleSet, SumRule};

/// Relative tolerance of the positive-semidefiniteness check.
const PSD_TOLERANCE: f64 = 1e-9;
const APG_TOLERANCE: f64 = 1e-10;
const APG_MAX_ITER: usize = 100_000;

/// `x^T Q x - 2 c^T x + d`. With `Q = Sigma_{-i,-i}`, `c = Sigma_{-i,i}` and
/// `d = Sigma_{i,i}` this is the mean squared error of predicting node `i`
/// from the others with weights `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticObjective {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub d: f64,
}

impl QuadraticObjective {
    pub fn new(q: DMatrix<f64>, c: DVector<f64>, d: f64) -> Result<Self> {
        if q.nrows() != q.ncols() || q.nrows() != c.len() {
            return Err(Error::Dimension(format!(
                "objective with {}x{} Q and {} linear terms",
                q.nrows(),
                q.ncols(),
                c.len()
            )));
        }
        let mut q = q;
        linalg::symmetrize(&mut q);
        Ok(QuadraticObjective { q, c, d })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.q * x)) - 2.0 * self.c.dot(x) + self.d
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.q * x - &self.c) * 2.0
    }

    fn scale(&self) -> f64 {
        let s = self
            .q
            .diagonal()
            .amax()
            .max(self.c.amax())
            .max(self.d.abs());
        if s > 0.0 && s.is_finite() {
            s
        } else {
            1.0
        }
    }

    fn scaled(&self, s: f64) -> QuadraticObjective {
        QuadraticObjective {
            q: &self.q / s,
            c: &self.c / s,
            d: self.d / s,
        }
    }

    fn check_psd(&self) -> Result<DVector<f64>> {
        if self.dim() == 0 {
            return Ok(DVector::zeros(0));
        }
        let eig = self.q.clone().symmetric_eigen().eigenvalues;
        let top = eig.amax();
        let low = eig.min();
        if low < -PSD_TOLERANCE * top.max(f64::MIN_POSITIVE) {
            return Err(Error::NotPositiveSemidefinite(low));
        }
        Ok(eig)
    }
}

/// Optimal weights of a real regression. `labels[k]` is the regressor node
/// for `x[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionSolution {
    pub x: DVector<f64>,
    pub cost: f64,
    /// Optimality gap normalized by the objective's scale.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub labels: Vec<NodeId>,
}

impl RegressionSolution {
    pub fn coefficient(&self, id: NodeId) -> Option<f64> {
        self.labels.iter().position(|&l| l == id).map(|k| self.x[k])
    }

    /// Regressors whose weight is at least `threshold`.
    pub fn support(&self, threshold: f64) -> Vec<NodeId> {
        self.labels
            .iter()
            .zip(self.x.iter())
            .filter(|(_, &x)| x >= threshold)
            .map(|(&l, _)| l)
            .collect()
    }
}

/// Optimal complex weights `re + j im` of the coupled regression.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexRegressionSolution {
    pub re: DVector<f64>,
    pub im: DVector<f64>,
    pub cost: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub labels: Vec<NodeId>,
}

impl ComplexRegressionSolution {
    pub fn modulus(&self) -> DVector<f64> {
        self.re.zip_map(&self.im, |a, b| a.hypot(b))
    }

    /// Regressors whose weight has modulus at least `threshold`.
    pub fn support(&self, threshold: f64) -> Vec<NodeId> {
        self.labels
            .iter()
            .zip(self.modulus().iter())
            .filter(|(_, &m)| m >= threshold)
            .map(|(&l, _)| l)
            .collect()
    }
}

/// Homogenized Gram matrix: for `z = (x, 1 - 1^T x)` on the standard
/// simplex, `z^T P z` equals the objective at `x`.
fn homogenize(obj: &QuadraticObjective) -> DMatrix<f64> {
    let m = obj.dim();
    let mut p = DMatrix::zeros(m + 1, m + 1);
    for i in 0..m {
        for j in 0..m {
            p[(i, j)] = obj.q[(i, j)] - obj.c[i] - obj.c[j] + obj.d;
        }
        p[(i, m)] = obj.d - obj.c[i];
        p[(m, i)] = obj.d - obj.c[i];
    }
    p[(m, m)] = obj.d;
    p
}

/// Smallest constant `alpha >= 0` with `f + alpha >= 0` on all of `R^m`,
/// or `None` if `f` is unbounded below there.
fn lower_bound_shift(obj: &QuadraticObjective) -> Option<f64> {
    let eig = obj.q.clone().symmetric_eigen();
    let top = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut quad = 0.0;
    for k in 0..obj.dim() {
        let lam = eig.eigenvalues[k];
        let proj = eig.eigenvectors.column(k).dot(&obj.c);
        if lam <= 1e-12 * top {
            if proj.abs() > 1e-9 * obj.c.amax().max(1.0) {
                return None;
            }
        } else {
            quad += proj * proj / lam;
        }
    }
    Some((quad - obj.d).max(0.0))
}

fn simplex_qp(obj: &QuadraticObjective) -> Result<(DVector<f64>, f64, usize)> {
    let m = obj.dim();
    let mut p = homogenize(obj);
    if linalg::eig_extremes(&p).0 < -1e-12 {
        if let Some(alpha) = lower_bound_shift(obj) {
            p.add_scalar_mut(alpha + 1e-12);
        }
    }
    let res = wolfe::min_norm_point(&p, 1e-15, 50 * (m + 1) + 100);
    let x = res.z.rows(0, m).into_owned();
    Ok((x, res.gap, res.iterations))
}

fn obj_lipschitz(obj: &QuadraticObjective) -> f64 {
    obj.q.clone().symmetric_eigen().eigenvalues.max().max(1e-300)
}

fn apg_qp(obj: &QuadraticObjective, set: &FeasibleSet, start: &DVector<f64>) -> (DVector<f64>, f64, usize) {
    let res = apg::accelerated_projected_gradient(obj, set, start, APG_TOLERANCE, APG_MAX_ITER);
    let mut x = res.x;
    for tol in [1e-9, 1e-7, 1e-5] {
        if let Some(cand) = apg::polish(obj, set, &x, tol) {
            if obj.value(&cand) <= obj.value(&x) + 1e-15 {
                x = cand;
                break;
            }
        }
    }
    let resid = apg::pg_residual(obj, set, &x, 2.0 * obj_lipschitz(obj));
    (x, resid, res.iterations)
}

/// Global minimizer over the clipped simplex `{x >= 0, 1^T x <= 1}`.
pub fn qp_solve(obj: &QuadraticObjective) -> Result<RegressionSolution> {
    obj.check_psd()?;
    let m = obj.dim();
    if m == 0 {
        return Ok(RegressionSolution {
            x: DVector::zeros(0),
            cost: obj.d,
            kkt_residual: 0.0,
            iterations: 0,
            labels: Vec::new(),
        });
    }
    let s = obj.scale();
    let norm = obj.scaled(s);
    let (mut x, mut gap, mut iterations) = simplex_qp(&norm)?;
    if !(gap <= 1e-9) {
        let set = FeasibleSet::clipped_simplex(m);
        let lip = 2.0 * obj_lipschitz(&norm);
        // The active set of Wolfe's iterate is usually right even when its
        // gap is not; a polish is much cheaper than a projected gradient run.
        if let Some(y) = apg::polish(&norm, &set, &x, 1e-9) {
            let resid = apg::pg_residual(&norm, &set, &y, lip);
            if resid <= 1e-9 && norm.value(&y) <= norm.value(&x) + 1e-15 {
                x = y;
                gap = resid;
            }
        }
    }
    if !(gap <= 1e-9) {
        let set = FeasibleSet::clipped_simplex(m);
        let (y, resid, it) = apg_qp(&norm, &set, &x);
        iterations += it;
        if norm.value(&y) < norm.value(&x) {
            x = y;
            gap = resid;
        }
    }
    Ok(RegressionSolution {
        cost: norm.value(&x) * s,
        x,
        kkt_residual: gap,
        iterations,
        labels: Vec::new(),
    })
}

/// Global minimizer over an arbitrary [`FeasibleSet`] by accelerated
/// projected gradient and an active-set polish.
pub fn qp_solve_on(obj: &QuadraticObjective, set: &FeasibleSet) -> Result<RegressionSolution> {
    obj.check_psd()?;
    if set.dim() != obj.dim() {
        return Err(Error::Dimension("feasible set and objective differ in size".into()));
    }
    let s = obj.scale();
    let norm = obj.scaled(s);
    let start = set.project(&DVector::zeros(obj.dim()));
    let (x, resid, iterations) = apg_qp(&norm, set, &start);
    Ok(RegressionSolution {
        cost: norm.value(&x) * s,
        x,
        kkt_residual: resid,
        iterations,
        labels: Vec::new(),
    })
}

/// Objective for regressing `target` on `regressors` under covariance
/// `sigma`.
pub fn regression_objective(
    sigma: &CovarianceMatrix,
    target: NodeId,
    regressors: &[NodeId],
) -> Result<QuadraticObjective> {
    let t = linalg::positions(&sigma.labels, &[target])?[0];
    let r = linalg::positions(&sigma.labels, regressors)?;
    let q = linalg::select(&sigma.values, &r, &r);
    let c = DVector::from_fn(r.len(), |k, _| sigma.values[(r[k], t)]);
    QuadraticObjective::new(q, c, sigma.values[(t, t)])
}

fn labeled(mut sol: RegressionSolution, labels: Vec<NodeId>) -> RegressionSolution {
    sol.labels = labels;
    sol
}

/// Best convex-or-less combination of all other nodes predicting node `i`.
/// Zero cost marks a zero-injection node.
pub fn solve_nodal_regression(i: NodeId, sigma: &CovarianceMatrix) -> Result<RegressionSolution> {
    let regressors: Vec<NodeId> = sigma.labels.iter().copied().filter(|&l| l != i).collect();
    let obj = regression_objective(sigma, i, &regressors)?;
    Ok(labeled(qp_solve(&obj)?, regressors))
}

/// Regression of zero-injection node `i` on the excited nodes only (the
/// labels of `sigma` outside `zero`). Its support is the neighborhood of
/// `i`.
pub fn solve_constrained_nodal_regression(
    i: NodeId,
    zero: &[NodeId],
    sigma: &CovarianceMatrix,
) -> Result<RegressionSolution> {
    if !zero.contains(&i) {
        return Err(Error::InvalidArgument(format!(
            "constrained regression needs a zero-injection target; node {i} is not in the set"
        )));
    }
    let regressors: Vec<NodeId> = sigma
        .labels
        .iter()
        .copied()
        .filter(|l| !zero.contains(l))
        .collect();
    let obj = regression_objective(sigma, i, &regressors)?;
    Ok(labeled(qp_solve(&obj)?, regressors))
}

/// Objective of the coupled regression in the stacked variable
/// `(Re x, Im x)`: the expected squared modulus of
/// `(v_i - j theta_i) - sum_k x_k (v_k - j theta_k)`.
pub fn complex_regression_objective(
    sigma: &JointCovariance,
    target: NodeId,
    regressors: &[NodeId],
) -> Result<QuadraticObjective> {
    let n = sigma.dim();
    let t = linalg::positions(&sigma.labels, &[target])?[0];
    let r = linalg::positions(&sigma.labels, regressors)?;
    let m = r.len();
    // a = (v_R, theta_R), b = K a = (theta_R, -v_R).
    let a_idx: Vec<usize> = r.iter().copied().chain(r.iter().map(|k| k + n)).collect();
    let s_aa = linalg::select(&sigma.values, &a_idx, &a_idx);
    let mut k = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        k[(i, m + i)] = 1.0;
        k[(m + i, i)] = -1.0;
    }
    let q = &s_aa + &k * &s_aa * k.transpose();
    let s_a_v = DVector::from_fn(2 * m, |row, _| sigma.values[(a_idx[row], t)]);
    let s_a_theta = DVector::from_fn(2 * m, |row, _| sigma.values[(a_idx[row], t + n)]);
    let c = s_a_v + &k * s_a_theta;
    let d = sigma.values[(t, t)] + sigma.values[(t + n, t + n)];
    QuadraticObjective::new(q, c, d)
}

/// Pseudo-inverse of a symmetric PSD matrix, dropping eigenvalues below
/// `rel * max`.
fn psd_pinv(a: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    if a.is_empty() {
        return a.clone();
    }
    let eig = a.clone().symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let inv = eig
        .eigenvalues
        .map(|l| if l > rel * top && l > 0.0 { 1.0 / l } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// Exact route for the coupled regression: a primal active-set method on
/// the imaginary weights. With some of them pinned at `+-1`, the others are
/// minimized out on their affine sum constraint and the real block is
/// solved as a simplex problem; the iterate then moves toward that
/// minimizer until it hits the box, pinning the blocking weight. At a
/// feasible minimizer, a pinned weight with the wrong multiplier sign is
/// released.
fn complex_active_set(obj: &QuadraticObjective) -> Option<(DVector<f64>, f64, usize)> {
    let m = obj.dim() / 2;
    if m == 0 {
        return None;
    }
    let mut pinned: Vec<Option<f64>> = vec![None; m];
    let mut w = DVector::<f64>::zeros(m);
    let mut iterations = 0;
    for _round in 0..4 * m + 4 {
        let (x, it) = complex_with_pins(obj, &pinned)?;
        iterations += it;
        let target = x.rows(m, m).into_owned();
        let mut step = 1.0;
        let mut blocking = None;
        for k in (0..m).filter(|&k| pinned[k].is_none()) {
            let delta = target[k] - w[k];
            let room = if target[k] > 1.0 {
                (1.0 - w[k]) / delta
            } else if target[k] < -1.0 {
                (-1.0 - w[k]) / delta
            } else {
                continue;
            };
            if room < step {
                step = room.max(0.0);
                blocking = Some(k);
            }
        }
        if let Some(k) = blocking {
            w += (&target - &w) * step;
            w[k] = target[k].signum();
            pinned[k] = Some(w[k]);
            continue;
        }
        w = target;
        // Release a pinned weight whose multiplier has the wrong sign.
        let grad = obj.gradient(&x);
        let free: Vec<usize> = (0..m).filter(|&k| pinned[k].is_none()).collect();
        let lambda = -free.iter().map(|&k| grad[m + k]).sum::<f64>() / free.len().max(1) as f64;
        let scale = grad.amax().max(obj.c.amax()).max(1e-300);
        let release = (0..m)
            .filter_map(|k| {
                let wrong = match pinned[k]? {
                    s if s > 0.0 => grad[m + k] + lambda,
                    _ => -(grad[m + k] + lambda),
                };
                (wrong > 1e-7 * scale).then_some((k, wrong))
            })
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match release {
            Some((k, _)) => pinned[k] = None,
            None => {
                let set = FeasibleSet::complex_regression(m);
                let x = set.project(&x);
                let resid = apg::pg_residual(obj, &set, &x, 2.0 * obj_lipschitz(obj));
                return Some((x, resid, iterations));
            }
        }
    }
    None
}

/// Minimizer with the given imaginary weights pinned and the others free
/// of their box.
fn complex_with_pins(obj: &QuadraticObjective, pinned: &[Option<f64>]) -> Option<(DVector<f64>, usize)> {
    let m = pinned.len();
    let free: Vec<usize> = (0..m).filter(|&k| pinned[k].is_none()).collect();
    let r = free.len();
    if r == 0 {
        return None;
    }
    let pinned_sum: f64 = pinned.iter().flatten().sum();
    // w = w0 + N z over the free coordinates, with N an orthonormal basis
    // of their zero-sum subspace and w0 meeting the sum constraint.
    let mut w0 = DVector::zeros(m);
    for k in 0..m {
        w0[k] = pinned[k].unwrap_or(-pinned_sum / r as f64);
    }
    let nb = if r > 1 {
        let mut basis = DMatrix::zeros(r, r);
        basis.column_mut(0).fill(1.0 / (r as f64).sqrt());
        for j in 1..r {
            basis[(j, j)] = 1.0;
        }
        let q = basis.qr().q().columns(1, r - 1).into_owned();
        let mut full = DMatrix::zeros(m, r - 1);
        for (a, &k) in free.iter().enumerate() {
            full.row_mut(k).copy_from(&q.row(a));
        }
        full
    } else {
        DMatrix::zeros(m, 0)
    };
    let quu = obj.q.view((0, 0), (m, m)).into_owned();
    let quw = obj.q.view((0, m), (m, m)).into_owned();
    let qww = obj.q.view((m, m), (m, m)).into_owned();
    let cu = obj.c.rows(0, m).into_owned();
    let cw = obj.c.rows(m, m).into_owned();

    // Shift to the affine point, then eliminate z.
    let cu0 = &cu - &quw * &w0;
    let cw0 = &cw - &qww * &w0;
    let d0 = obj.d - 2.0 * cw.dot(&w0) + w0.dot(&(&qww * &w0));
    let a_pinv = psd_pinv(&(nb.transpose() * &qww * &nb), 1e-13);
    let g = &nb * a_pinv * nb.transpose();
    let mut rq = &quu - &quw * &g * quw.transpose();
    linalg::symmetrize(&mut rq);
    let reduced = QuadraticObjective {
        q: rq,
        c: &cu0 - &quw * &g * &cw0,
        d: d0 - cw0.dot(&(&g * &cw0)),
    };
    let (u, _, iterations) = simplex_qp(&reduced).ok()?;
    let w = w0 + &g * (&cw0 - quw.transpose() * &u);
    let mut x = DVector::zeros(2 * m);
    x.rows_mut(0, m).copy_from(&u);
    x.rows_mut(m, m).copy_from(&w);
    x.iter().all(|v| v.is_finite()).then_some((x, iterations))
}

fn solve_complex(obj: &QuadraticObjective, labels: Vec<NodeId>) -> Result<ComplexRegressionSolution> {
    obj.check_psd()?;
    let m = labels.len();
    if m == 0 {
        return Ok(ComplexRegressionSolution {
            re: DVector::zeros(0),
            im: DVector::zeros(0),
            cost: obj.d,
            kkt_residual: 0.0,
            iterations: 0,
            labels,
        });
    }
    let s = obj.scale();
    let norm = obj.scaled(s);
    let set = FeasibleSet::complex_regression(m);
    let lip = 2.0 * obj_lipschitz(&norm);
    let polished = |found: (DVector<f64>, f64, usize)| {
        if found.1 <= 1e-8 {
            return Ok(found);
        }
        for tol in [1e-9, 1e-7] {
            if let Some(y) = apg::polish(&norm, &set, &found.0, tol) {
                let resid = apg::pg_residual(&norm, &set, &y, lip);
                if resid <= 1e-8 && norm.value(&y) <= norm.value(&found.0) + 1e-15 {
                    return Ok((y, resid, found.2));
                }
            }
        }
        Err(found.0)
    };
    let (x, resid, iterations) = match complex_active_set(&norm).map(polished) {
        Some(Ok(found)) => found,
        other => {
            let start = match other {
                Some(Err(x)) => x,
                _ => set.project(&DVector::zeros(2 * m)),
            };
            apg_qp(&norm, &set, &start)
        }
    };
    Ok(ComplexRegressionSolution {
        re: x.rows(0, m).into_owned(),
        im: x.rows(m, m).into_owned(),
        cost: norm.value(&x) * s,
        kkt_residual: resid,
        iterations,
        labels,
    })
}

/// Coupled magnitude/phase regression of node `i` on all other nodes.
pub fn solve_complex_regression(i: NodeId, sigma: &JointCovariance) -> Result<ComplexRegressionSolution> {
    let regressors: Vec<NodeId> = sigma.labels.iter().copied().filter(|&l| l != i).collect();
    let obj = complex_regression_objective(sigma, i, &regressors)?;
    solve_complex(&obj, regressors)
}

/// Coupled regression of zero-injection node `i` on the excited nodes.
pub fn solve_constrained_complex_regression(
    i: NodeId,
    zero: &[NodeId],
    sigma: &JointCovariance,
) -> Result<ComplexRegressionSolution> {
    if !zero.contains(&i) {
        return Err(Error::InvalidArgument(format!(
            "constrained regression needs a zero-injection target; node {i} is not in the set"
        )));
    }
    let regressors: Vec<NodeId> = sigma
        .labels
        .iter()
        .copied()
        .filter(|l| !zero.contains(l))
        .collect();
    let obj = complex_regression_objective(sigma, i, &regressors)?;
    solve_complex(&obj, regressors)
}

#[cfg(test)]
mod tests;
