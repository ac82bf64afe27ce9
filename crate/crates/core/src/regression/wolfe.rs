//! Wolfe's minimum-norm-point method on the standard simplex.
//!
//! Minimizes `z^T P z` over `{z >= 0, 1^T z = 1}` for a matrix `P` that is
//! positive semidefinite on the simplex's tangent space. The iterate is
//! always a convex combination of a small "corral" of vertices, and each
//! minor cycle solves the affine subproblem on that corral exactly, so the
//! method terminates in finitely many steps with an exact optimum.

use nalgebra::{DMatrix, DVector};

pub(crate) struct WolfeResult {
    pub z: DVector<f64>,
    #[allow(dead_code)]
    pub value: f64,
    /// Frank-Wolfe gap `z^T P z - min_j (P z)_j`; zero at the optimum.
    pub gap: f64,
    pub iterations: usize,
}

/// Minimizer of `z^T P z` on the affine hull of `support`: solves the
/// bordered system `[P_SS 1; 1^T 0] [mu; nu] = [0; 1]`.
fn affine_minimizer(p: &DMatrix<f64>, support: &[usize]) -> Option<DVector<f64>> {
    let k = support.len();
    let mut m = DMatrix::zeros(k + 1, k + 1);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            m[(a, b)] = p[(i, j)];
        }
        m[(a, k)] = 1.0;
        m[(k, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = m.clone().full_piv_lu().solve(&rhs).filter(|s| {
        let r = &m * s - &rhs;
        r.amax() <= 1e-9 && s.iter().all(|x| x.is_finite())
    });
    let sol = match sol {
        Some(s) => s,
        // Affinely dependent corral: fall back to the least-norm solution.
        None => m.svd(true, true).solve(&rhs, 1e-13).ok()?,
    };
    let mu = sol.rows(0, k).into_owned();
    let total = mu.sum();
    if !total.is_finite() || total.abs() < 1e-12 {
        return None;
    }
    Some(mu / total)
}

pub(crate) fn min_norm_point(p: &DMatrix<f64>, tol: f64, max_iter: usize) -> WolfeResult {
    let n = p.nrows();
    let start = (0..n)
        .min_by(|&a, &b| p[(a, a)].total_cmp(&p[(b, b)]))
        .expect("non-empty problem");
    let mut support = vec![start];
    let mut lambda = DVector::zeros(n);
    lambda[start] = 1.0;

    let mut iterations = 0;
    let mut gap = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut stalls = 0;
    while iterations < max_iter {
        iterations += 1;
        let g = p * &lambda;
        let value = lambda.dot(&g);
        // Major cycles decrease the value strictly in exact arithmetic; a
        // few non-decreasing ones mean roundoff has taken over.
        if value < best {
            best = value;
            stalls = 0;
        } else {
            stalls += 1;
            if stalls >= 3 {
                gap = value - g.min();
                break;
            }
        }
        let (j, gmin) = g
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, &v)| (j, v))
            .unwrap();
        gap = value - gmin;
        if gap <= tol || support.contains(&j) {
            break;
        }
        support.push(j);

        // Minor cycles: move toward the affine minimizer of the corral,
        // dropping vertices whose weight hits zero.
        loop {
            let Some(mu) = affine_minimizer(p, &support) else {
                support.pop();
                break;
            };
            if mu.iter().all(|&m| m > 1e-15) {
                for (a, &i) in support.iter().enumerate() {
                    lambda[i] = mu[a];
                }
                break;
            }
            let mut step = 1.0f64;
            for (a, &i) in support.iter().enumerate() {
                if mu[a] <= 1e-15 {
                    let denom = lambda[i] - mu[a];
                    if denom > 0.0 {
                        step = step.min(lambda[i] / denom);
                    }
                }
            }
            for (a, &i) in support.iter().enumerate() {
                lambda[i] += step * (mu[a] - lambda[i]);
            }
            let before = support.len();
            support.retain(|&i| lambda[i] > 1e-15);
            for i in 0..n {
                if !support.contains(&i) {
                    lambda[i] = 0.0;
                }
            }
            if support.is_empty() {
                // Numerically degenerate; restart from the best vertex.
                support.push(j);
                lambda.fill(0.0);
                lambda[j] = 1.0;
                break;
            }
            if support.len() == before {
                break;
            }
        }
        let total = lambda.sum();
        lambda /= total;
    }
    let value = lambda.dot(&(p * &lambda));
    WolfeResult {
        z: lambda,
        value,
        gap: gap.max(0.0),
        iterations,
    }
}
