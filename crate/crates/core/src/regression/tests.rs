use super::*;
use crate::covariance::{analytic_joint_covariance, analytic_theta_covariance, isotropic_noise};
use crate::grid::{fixtures, random, Grid, Line, Node};
use crate::laplacian::{build_laplacian, Weight};
use crate::powerflow::InjectionModel;
use approx::assert_relative_eq;
use nalgebra::{dmatrix, dvector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn theta_cov(grid: &Grid) -> CovarianceMatrix {
    let h = build_laplacian(grid, Weight::Susceptance);
    let inj = InjectionModel::gaussian(grid, 1.0);
    analytic_theta_covariance(&h, &inj.active_covariance(), &grid.zero_injection()).unwrap()
}

fn joint_cov(grid: &Grid) -> JointCovariance {
    let inj = InjectionModel::gaussian(grid, 1.0);
    let n = grid.size();
    analytic_joint_covariance(
        grid,
        &inj.active_covariance(),
        &inj.reactive_covariance(),
        &DMatrix::zeros(n, n),
    )
    .unwrap()
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose()
}

#[test]
fn hand_examples() {
    let obj = QuadraticObjective::new(DMatrix::identity(2, 2), dvector![0.0, 0.0], 3.0).unwrap();
    let sol = qp_solve(&obj).unwrap();
    assert!(sol.x.amax() < 1e-14);
    assert_relative_eq!(sol.cost, 3.0);

    let obj = QuadraticObjective::new(DMatrix::identity(2, 2), dvector![1.0, 1.0], 2.0).unwrap();
    let sol = qp_solve(&obj).unwrap();
    assert!((sol.x.clone() - dvector![0.5, 0.5]).amax() < 1e-12);
    assert_relative_eq!(sol.cost, 0.5, epsilon = 1e-12);
    assert!(sol.kkt_residual <= 1e-9);

    // Negative optimal value: d - 1.5 with d = 0.
    let obj = QuadraticObjective::new(DMatrix::identity(2, 2), dvector![1.0, 1.0], 0.0).unwrap();
    assert_relative_eq!(qp_solve(&obj).unwrap().cost, -1.5, epsilon = 1e-12);
}

#[test]
fn rejects_indefinite_q() {
    let obj = QuadraticObjective::new(dmatrix![1.0, 0.0; 0.0, -1.0], dvector![0.0, 0.0], 0.0).unwrap();
    assert!(matches!(qp_solve(&obj), Err(Error::NotPositiveSemidefinite(_))));
    assert!(QuadraticObjective::new(DMatrix::identity(2, 2), dvector![1.0], 0.0).is_err());
}

#[test]
fn g3_regressions() {
    let g = fixtures::g3();
    let sigma = theta_cov(&g);
    let sol = solve_nodal_regression(2, &sigma).unwrap();
    assert!(sol.cost.abs() < 1e-12);
    assert_relative_eq!(sol.coefficient(1).unwrap(), 0.5, epsilon = 1e-9);
    assert_relative_eq!(sol.coefficient(3).unwrap(), 0.5, epsilon = 1e-9);

    let bound = (6.0 - 32f64.sqrt()) / 21.0;
    for i in [1, 3] {
        let sol = solve_nodal_regression(i, &sigma).unwrap();
        assert!(sol.cost > bound, "node {i}: {}", sol.cost);
    }

    let sol = solve_constrained_nodal_regression(2, &[2], &sigma).unwrap();
    assert_eq!(sol.labels, vec![1, 3]);
    assert!((sol.x.clone() - dvector![0.5, 0.5]).amax() < 1e-9);
    assert!(sol.cost.abs() < 1e-12);
    assert!(solve_constrained_nodal_regression(1, &[2], &sigma).is_err());
}

#[test]
fn gstar_weights_follow_susceptances() {
    let g = fixtures::gstar();
    let sigma = theta_cov(&g);
    let sol = solve_constrained_nodal_regression(1, &[1], &sigma).unwrap();
    for (leaf, beta) in [(2, 2.0), (3, 3.0), (4, 4.0)] {
        assert_relative_eq!(sol.coefficient(leaf).unwrap(), beta / 10.0, epsilon = 1e-9);
    }
}

#[test]
fn fully_excited_costs_are_positive() {
    let sigma = theta_cov(&fixtures::g2());
    for i in [1, 2] {
        assert!(solve_nodal_regression(i, &sigma).unwrap().cost > 0.1);
    }
}

#[test]
fn wolfe_matches_projected_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for k in 0..200 {
        let n = 2 + k % 9;
        let rank = 1 + (k % n);
        let q = random_psd(&mut rng, n, rank);
        let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let d = rng.random_range(0.0..2.0);
        let obj = QuadraticObjective::new(q, c, d).unwrap();
        let exact = qp_solve(&obj).unwrap();
        let iterative = qp_solve_on(&obj, &FeasibleSet::clipped_simplex(n)).unwrap();
        assert!(exact.kkt_residual <= 1e-9, "case {k}: {}", exact.kkt_residual);
        assert!(exact.x.min() >= -1e-12 && exact.x.sum() <= 1.0 + 1e-12);
        assert!(
            exact.cost <= iterative.cost + 1e-9,
            "case {k}: {} vs {}",
            exact.cost,
            iterative.cost
        );
        assert!((exact.cost - iterative.cost).abs() < 1e-7, "case {k}");
    }
}

/// A zero-cost regression on an analytic covariance describes a vector in
/// the row space of the zero-injection rows of the Laplacian, so it
/// annihilates the excited columns of the inverse Laplacian.
#[test]
fn zero_cost_solutions_lie_in_the_laplacian_row_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for k in 0..30 {
        let opts = random::RandomGridOptions {
            nodes: 6 + k % 15,
            extra_lines: k % 3,
            ..Default::default()
        };
        let g = random::random_grid(&opts, &mut rng);
        let h = build_laplacian(&g, Weight::Susceptance);
        let j = h.inverse().unwrap();
        let sigma = theta_cov(&g);
        let excited = linalg::positions(&h.labels, &g.excited()).unwrap();
        for &i in &g.labels() {
            let sol = solve_nodal_regression(i, &sigma).unwrap();
            if sol.cost > 1e-10 {
                continue;
            }
            let mut y = DVector::zeros(h.dim());
            y[h.index_of(i).unwrap()] = 1.0;
            for (l, x) in sol.labels.iter().zip(sol.x.iter()) {
                y[h.index_of(*l).unwrap()] = -x;
            }
            for &col in &excited {
                let v: f64 = (0..h.dim()).map(|r| y[r] * j[(r, col)]).sum();
                assert!(v.abs() <= 1e-6, "grid {k} node {i}: {v}");
            }
        }
    }
}

/// With noise added, the zero-injection costs stay below twice the
/// largest noise variance.
#[test]
fn noisy_zero_injection_cost_is_bounded_by_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for k in 0..30 {
        let opts = random::RandomGridOptions {
            nodes: 6 + k % 20,
            extra_lines: k % 3,
            ..Default::default()
        };
        let g = random::random_grid(&opts, &mut rng);
        let clean = theta_cov(&g);
        let eps = 0.01 * clean.values.diagonal().max();
        let noisy = CovarianceMatrix {
            values: &clean.values + isotropic_noise(&clean.labels, eps).values,
            ..clean.clone()
        };
        for u in g.zero_injection() {
            let sol = solve_nodal_regression(u, &noisy).unwrap();
            assert!(sol.cost <= 2.0 * eps, "{} > {}", sol.cost, 2.0 * eps);
        }
    }
}

#[test]
fn lossless_complex_regression_matches_phase_regression() {
    let g = fixtures::g3();
    let joint = joint_cov(&g);
    let theta = joint.theta();
    for i in [1, 2, 3] {
        let c = solve_complex_regression(i, &joint).unwrap();
        let r = solve_nodal_regression(i, &theta).unwrap();
        assert!((c.re.clone() - &r.x).amax() < 1e-7, "node {i}");
        assert!(c.im.amax() < 1e-7);
    }
}

#[test]
fn lossy_g3_complex_costs() {
    let g = fixtures::g3().map_conductance(|l| l.beta).unwrap();
    let joint = joint_cov(&g);
    let zero = solve_complex_regression(2, &joint).unwrap();
    assert!(zero.cost.abs() < 1e-10, "{}", zero.cost);
    assert!(zero.im.sum().abs() < 1e-9);
    for i in [1, 3] {
        let sol = solve_complex_regression(i, &joint).unwrap();
        assert!(sol.cost > 1e-3, "node {i}: {}", sol.cost);
        assert!(sol.im.sum().abs() < 1e-9);
    }
}

#[test]
fn lossy_constrained_complex_weights_are_admittance_ratios() {
    // Nonuniform r/x: weights are y_uj / sum_k y_uk as complex numbers.
    // Node 2 is kept off the reference so the weights sum to a real number.
    let g = Grid::new(
        vec![
            Node::reference(0),
            Node::excited(1),
            Node::zero_injection(2),
            Node::excited(3),
            Node::excited(4),
        ],
        vec![
            Line::new(0, 1, 1.0, 0.5),
            Line::new(1, 2, 2.0, 0.4),
            Line::new(2, 3, 3.0, 1.5),
            Line::new(2, 4, 4.0, 4.0),
        ],
    )
    .unwrap();
    let joint = joint_cov(&g);
    let sol = solve_constrained_complex_regression(2, &[2], &joint).unwrap();
    assert!(sol.cost.abs() < 1e-9, "{}", sol.cost);
    let total: (f64, f64) = g
        .lines()
        .iter()
        .filter(|l| l.i == 2 || l.j == 2)
        .fold((0.0, 0.0), |acc, l| (acc.0 + l.g, acc.1 + l.beta));
    let norm = total.0 * total.0 + total.1 * total.1;
    for leaf in [1, 3, 4] {
        let l = g.line_between(2, leaf).unwrap();
        let re = (l.g * total.0 + l.beta * total.1) / norm;
        let im = (l.beta * total.0 - l.g * total.1) / norm;
        let k = sol.labels.iter().position(|&x| x == leaf).unwrap();
        assert!((sol.re[k] - re).abs() < 1e-7 && (sol.im[k] - im).abs() < 1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solutions_are_feasible(seed in 0u64..100_000, n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_psd(&mut rng, n, 1 + seed as usize % n);
        let c = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let obj = QuadraticObjective::new(q, c, 1.0).unwrap();
        let sol = qp_solve(&obj).unwrap();
        prop_assert!(sol.x.min() >= -1e-12);
        prop_assert!(sol.x.sum() <= 1.0 + 1e-12);
        prop_assert!((obj.value(&sol.x) - sol.cost).abs() <= 1e-9 * (1.0 + sol.cost.abs()));
    }

    #[test]
    fn complex_solutions_are_feasible(seed in 0u64..100_000, n in 1usize..7, deficit in 0usize..4, reach in 1.0f64..8.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_psd(&mut rng, 2 * n, (2 * n).saturating_sub(deficit).max(1));
        let c = DVector::from_fn(2 * n, |_, _| rng.random_range(-reach..reach));
        let obj = QuadraticObjective::new(q, c, 3.0).unwrap();
        let labels: Vec<NodeId> = (1..=n).collect();
        let sol = solve_complex(&obj, labels).unwrap();
        prop_assert!(sol.re.min() >= -1e-12 && sol.re.sum() <= 1.0 + 1e-12);
        prop_assert!(sol.im.amax() <= 1.0 + 1e-12);
        prop_assert!(sol.im.sum().abs() <= 1e-9);
        let generic = qp_solve_on(&obj, &FeasibleSet::complex_regression(n)).unwrap();
        prop_assert!(sol.cost <= generic.cost + 1e-7);
    }
}
