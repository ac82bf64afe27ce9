use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{Grid, Line, NodeId};

const MAX_ITERATIONS: usize = 50;
const TOLERANCE: f64 = 1e-8;

/// Converged AC power-flow state over the non-reference nodes, ordered as
/// [`Grid::labels`]. `v` is the magnitude (not a deviation).
#[derive(Clone, Debug, PartialEq)]
pub struct AcSolution {
    pub v: DVector<f64>,
    pub theta: DVector<f64>,
    pub iterations: usize,
    pub mismatch: f64,
}

/// Newton-Raphson AC power flow. The reference bus is the slack at
/// `1.0 /_ 0`; every other bus is PQ.
#[derive(Clone, Debug)]
pub struct AcSolver {
    lines: Vec<Line>,
    labels: Vec<NodeId>,
    /// Position of each node id in the unknown vector; `None` for the
    /// reference.
    index: Vec<Option<usize>>,
}

pub fn ac_pf(grid: &Grid, p: &DVector<f64>, q: &DVector<f64>) -> Result<AcSolution> {
    AcSolver::new(grid).solve(p, q)
}

impl AcSolver {
    pub fn new(grid: &Grid) -> Self {
        let labels = grid.labels();
        let max_id = grid.nodes().last().map_or(0, |n| n.id);
        let mut index = vec![None; max_id + 1];
        for (k, &id) in labels.iter().enumerate() {
            index[id] = Some(k);
        }
        AcSolver {
            lines: grid.lines().to_vec(),
            labels,
            index,
        }
    }

    pub fn labels(&self) -> &[NodeId] {
        &self.labels
    }

    /// Net injections `(P, Q)` at the non-reference buses for a given
    /// state.
    pub fn injections(&self, v: &DVector<f64>, theta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.labels.len();
        let mut p = DVector::zeros(n);
        let mut q = DVector::zeros(n);
        for line in &self.lines {
            let (a, b) = (self.index[line.i], self.index[line.j]);
            let (va, ta) = a.map_or((1.0, 0.0), |k| (v[k], theta[k]));
            let (vb, tb) = b.map_or((1.0, 0.0), |k| (v[k], theta[k]));
            let (s, c) = (ta - tb).sin_cos();
            if let Some(a) = a {
                p[a] += line.g * (va * va - va * vb * c) + line.beta * va * vb * s;
                q[a] += line.beta * (va * va - va * vb * c) - line.g * va * vb * s;
            }
            if let Some(b) = b {
                // sin is odd in the angle difference, cos even.
                p[b] += line.g * (vb * vb - va * vb * c) - line.beta * va * vb * s;
                q[b] += line.beta * (vb * vb - va * vb * c) + line.g * va * vb * s;
            }
        }
        (p, q)
    }

    /// Jacobian of `(P, Q)` with respect to `(v, theta)`.
    pub fn jacobian(&self, v: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        let n = self.labels.len();
        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        for line in &self.lines {
            let (a, b) = (self.index[line.i], self.index[line.j]);
            // Contributions to row `i` from its neighbor `j`.
            for (i, j) in [(a, b), (b, a)] {
                let Some(i) = i else { continue };
                let (vi, ti) = (v[i], theta[i]);
                let (vj, tj) = j.map_or((1.0, 0.0), |k| (v[k], theta[k]));
                let (s, c) = (ti - tj).sin_cos();
                let (g, bt) = (line.g, line.beta);
                let (pr, qr) = (i, n + i);
                let (vi_col, ti_col) = (i, n + i);

                jac[(pr, ti_col)] += vi * vj * (g * s + bt * c);
                jac[(pr, vi_col)] += g * (2.0 * vi - vj * c) + bt * vj * s;
                jac[(qr, ti_col)] += vi * vj * (bt * s - g * c);
                jac[(qr, vi_col)] += bt * (2.0 * vi - vj * c) - g * vj * s;

                if let Some(j) = j {
                    let (vj_col, tj_col) = (j, n + j);
                    jac[(pr, tj_col)] -= vi * vj * (g * s + bt * c);
                    jac[(pr, vj_col)] += vi * (bt * s - g * c);
                    jac[(qr, tj_col)] += vi * vj * (g * c - bt * s);
                    jac[(qr, vj_col)] -= vi * (bt * c + g * s);
                }
            }
        }
        jac
    }

    /// Solves for the state that draws injections `(p, q)`, starting flat.
    pub fn solve(&self, p: &DVector<f64>, q: &DVector<f64>) -> Result<AcSolution> {
        let n = self.labels.len();
        if p.len() != n || q.len() != n {
            return Err(Error::Dimension(format!(
                "AC power flow expects {n} injections per bus"
            )));
        }
        let mut v = DVector::from_element(n, 1.0);
        let mut theta = DVector::zeros(n);
        let mut mismatch = f64::INFINITY;
        for iteration in 0..=MAX_ITERATIONS {
            let (pc, qc) = self.injections(&v, &theta);
            let mut f = DVector::zeros(2 * n);
            f.rows_mut(0, n).copy_from(&(pc - p));
            f.rows_mut(n, n).copy_from(&(qc - q));
            mismatch = f.amax();
            if !mismatch.is_finite() {
                break;
            }
            if mismatch <= TOLERANCE {
                return Ok(AcSolution {
                    v,
                    theta,
                    iterations: iteration,
                    mismatch,
                });
            }
            if iteration == MAX_ITERATIONS {
                break;
            }
            let Some(step) = self.jacobian(&v, &theta).lu().solve(&f) else {
                break;
            };
            v -= step.rows(0, n);
            theta -= step.rows(n, n);
        }
        Err(Error::PowerFlowDiverged {
            iterations: MAX_ITERATIONS,
            mismatch,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fixtures;
    use crate::powerflow::linear::{dc_pf, LcSolver};
    use crate::laplacian::{build_laplacian, Weight};

    fn pattern(grid: &Grid, scale: f64, phase: f64) -> DVector<f64> {
        let labels = grid.labels();
        DVector::from_fn(labels.len(), |k, _| {
            if grid.is_zero_injection(labels[k]) {
                0.0
            } else {
                scale * (1.3 * k as f64 + phase).sin()
            }
        })
    }

    #[test]
    fn zero_injection_gives_flat_profile() {
        let g = fixtures::ieee33_loopy();
        let sol = ac_pf(&g, &DVector::zeros(32), &DVector::zeros(32)).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.v.iter().all(|&x| x == 1.0));
        assert!(sol.theta.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = fixtures::ieee33_loopy();
        let solver = AcSolver::new(&g);
        let n = 32;
        let v = DVector::from_fn(n, |k, _| 1.0 + 0.01 * (k as f64).cos());
        let theta = DVector::from_fn(n, |k, _| 0.02 * (0.7 * k as f64).sin());
        let jac = solver.jacobian(&v, &theta);
        let h = 1e-6;
        for col in 0..2 * n {
            let (mut vp, mut tp) = (v.clone(), theta.clone());
            let (mut vm, mut tm) = (v.clone(), theta.clone());
            if col < n {
                vp[col] += h;
                vm[col] -= h;
            } else {
                tp[col - n] += h;
                tm[col - n] -= h;
            }
            let (pp, qp) = solver.injections(&vp, &tp);
            let (pm, qm) = solver.injections(&vm, &tm);
            for row in 0..n {
                let dp = (pp[row] - pm[row]) / (2.0 * h);
                let dq = (qp[row] - qm[row]) / (2.0 * h);
                let scale = 1.0 + jac[(row, col)].abs();
                assert!((dp - jac[(row, col)]).abs() < 1e-5 * scale, "P {row} {col}");
                assert!((dq - jac[(n + row, col)]).abs() < 1e-5 * scale, "Q {row} {col}");
            }
        }
    }

    #[test]
    fn flat_jacobian_is_the_coupled_matrix() {
        let g = fixtures::ieee33_radial();
        let solver = AcSolver::new(&g);
        let jac = solver.jacobian(&DVector::from_element(32, 1.0), &DVector::zeros(32));
        let lc = LcSolver::new(&g).unwrap();
        let m = lc.inverse().clone().try_inverse().unwrap();
        assert!((jac - m).amax() < 1e-8);
    }

    #[test]
    fn converged_mismatch_meets_tolerance() {
        let g = fixtures::ieee33_loopy();
        let p = pattern(&g, 0.05, 0.3);
        let q = pattern(&g, 0.02, 1.1);
        let sol = ac_pf(&g, &p, &q).unwrap();
        assert!(sol.mismatch <= 1e-8);
        let (pc, qc) = AcSolver::new(&g).injections(&sol.v, &sol.theta);
        assert!((pc - p).amax() <= 1e-8 && (qc - q).amax() <= 1e-8);
    }

    #[test]
    fn small_lossless_injections_match_dc() {
        for g in [fixtures::ieee33_radial(), fixtures::ieee33_loopy()] {
            let g = g.map_conductance(|_| 0.0).unwrap();
            let p = pattern(&g, 0.01, 0.0);
            let sol = ac_pf(&g, &p, &DVector::zeros(32)).unwrap();
            let dc = dc_pf(&build_laplacian(&g, Weight::Susceptance), &p).unwrap();
            assert!((sol.theta - dc).amax() < 1e-3);
        }
    }

    #[test]
    fn linearization_error_is_second_order() {
        let g = fixtures::ieee33_loopy();
        let lc = LcSolver::new(&g).unwrap();
        let solver = AcSolver::new(&g);
        let scales = [0.04, 0.02, 0.01, 0.005];
        let mut logs = Vec::new();
        for s in scales {
            let p = pattern(&g, s, 0.4);
            let q = pattern(&g, 0.3 * s, 2.0);
            let sol = solver.solve(&p, &q).unwrap();
            let (_, theta) = lc.solve(&p, &q);
            logs.push(((s as f64).ln(), (sol.theta - theta).amax().ln()));
        }
        let mx = logs.iter().map(|l| l.0).sum::<f64>() / 4.0;
        let my = logs.iter().map(|l| l.1).sum::<f64>() / 4.0;
        let slope = logs.iter().map(|l| (l.0 - mx) * (l.1 - my)).sum::<f64>()
            / logs.iter().map(|l| (l.0 - mx).powi(2)).sum::<f64>();
        assert!(slope >= 1.8, "slope {slope}");
    }

    #[test]
    fn divergence_is_reported() {
        let g = fixtures::g2();
        let err = ac_pf(&g, &DVector::from_element(2, -50.0), &DVector::from_element(2, -50.0))
            .unwrap_err();
        assert!(matches!(err, Error::PowerFlowDiverged { .. }), "{err}");
    }
}
