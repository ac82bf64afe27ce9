use super::*;
use crate::covariance::{analytic_joint_covariance, isotropic_noise};
use crate::grid::{fixtures, random, Line, Node};
use crate::powerflow::{generate_samples, InjectionModel, Model};
use crate::topology::topology_error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn phase_cov(grid: &Grid, sigma: f64) -> CovarianceMatrix {
    let h = build_laplacian(grid, Weight::Susceptance);
    let inj = InjectionModel::gaussian(grid, sigma);
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

fn no_noise(grid: &Grid) -> CovarianceMatrix {
    let ex = grid.excited();
    CovarianceMatrix::new(DMatrix::zeros(ex.len(), ex.len()), ex, None).unwrap()
}

fn theorem_config(grid: &Grid) -> LearnerConfig {
    let n = grid.size();
    theoretical_thresholds(grid, &DMatrix::identity(n, n), &no_noise(grid))
        .unwrap()
        .config
}

fn edges(list: &[(NodeId, NodeId)]) -> BTreeSet<Edge> {
    list.iter().map(|&(a, b)| Edge::new(a, b)).collect()
}

#[test]
fn g3_theorem_thresholds() {
    let g = fixtures::g3();
    let report = theoretical_thresholds(&g, &DMatrix::identity(3, 3), &no_noise(&g)).unwrap();
    let expected_tau1 = (6.0 - 32f64.sqrt()) / 21.0;
    assert!((report.config.tau1 - expected_tau1).abs() < 1e-12);
    assert!((report.config.tau2 - 0.25).abs() < 1e-15);
    assert!((report.config.tau3 - 1.0).abs() < 1e-15);
    assert!(report.snr.snr.is_infinite());
    assert!(report.snr_ok());
}

#[test]
fn uniform_susceptance_scaling_keeps_tau2() {
    let g = fixtures::ieee33_radial();
    let scaled = g.scale_susceptance(7.5).unwrap();
    let a = theorem_config(&g);
    let b = theorem_config(&scaled);
    assert!((a.tau2 - b.tau2).abs() < 1e-12);
}

#[test]
fn config_rejects_non_positive_thresholds() {
    assert!(LearnerConfig::new(0.0, 1.0, 1.0).is_err());
    assert!(LearnerConfig::new(1.0, -1.0, 1.0).is_err());
    assert!(LearnerConfig::new(1.0, 1.0, f64::NAN).is_err());
    assert_eq!("LC".parse::<Mode>().unwrap(), Mode::Lc);
    assert!("ac".parse::<Mode>().is_err());
}

#[test]
fn stage_examples_on_small_grids() {
    let g3 = phase_cov(&fixtures::g3(), 1.0);
    let zero = identify_zero_injection(&g3, 0.0163).unwrap();
    assert_eq!(zero, BTreeSet::from([2]));
    let (u_edges, n2) = estimate_u_neighbors(&zero, &g3, 0.25).unwrap();
    assert_eq!(u_edges, edges(&[(1, 2), (2, 3)]));
    assert_eq!(n2, edges(&[(1, 3)]));
    let uc = g3.restrict(&[1, 3]).unwrap();
    assert!(detect_uc_edges(&uc, &n2, 0.5).unwrap().is_empty());
    assert_eq!(detect_uc_edges(&uc, &BTreeSet::new(), 0.5).unwrap(), edges(&[(1, 3)]));

    let g2 = phase_cov(&fixtures::g2(), 1.0);
    assert!(identify_zero_injection(&g2, 0.0163).unwrap().is_empty());
    let (e, n2) = estimate_u_neighbors(&BTreeSet::new(), &g2, 0.25).unwrap();
    assert!(e.is_empty() && n2.is_empty());
    assert_eq!(detect_uc_edges(&g2, &n2, 1.0).unwrap(), edges(&[(1, 2)]));

    let star = phase_cov(&fixtures::gstar(), 1.0);
    let (e, n2) = estimate_u_neighbors(&BTreeSet::from([1]), &star, 0.1).unwrap();
    assert_eq!(e, edges(&[(1, 2), (1, 3), (1, 4)]));
    assert_eq!(n2, edges(&[(2, 3), (2, 4), (3, 4)]));
}

#[test]
fn non_adjacent_pair_with_common_neighbor_is_not_an_edge() {
    // 0 - 1 - 2 - 3 with every node excited: 1 and 3 share neighbor 2.
    let g = fixtures::g3().with_zero_injection(&[]).unwrap();
    let sigma = phase_cov(&g, 1.0);
    let inv = inverse_matrix(&sigma.values).unwrap();
    let (a, b) = (sigma.index_of(1).unwrap(), sigma.index_of(3).unwrap());
    assert!(inv[(a, b)] > 0.0);
    assert_eq!(detect_uc_edges(&sigma, &BTreeSet::new(), 0.5).unwrap(), edges(&[(1, 2), (2, 3)]));
}

#[test]
fn analytic_fixtures_are_recovered_exactly() {
    for g in [
        fixtures::g2(),
        fixtures::g3(),
        fixtures::gstar(),
        fixtures::ieee33_radial(),
        fixtures::ieee33_loopy(),
    ] {
        let config = theorem_config(&g);
        let mut learner = TopologyLearner::new(Statistics::Phase(phase_cov(&g, 1.0)));
        let out = learner.learn(&config).unwrap();
        assert_eq!(topology_error(&g, &out.estimate).unwrap(), 0.0);
        assert_eq!(
            out.estimate.zero_injection_nodes,
            g.zero_injection().into_iter().collect()
        );
        assert!(out.n2.is_disjoint(&out.estimate.edges));
    }
}

#[test]
fn coupled_mode_recovers_lossy_grids() {
    for g in [fixtures::g3(), fixtures::ieee33_radial(), fixtures::ieee33_loopy()] {
        let lossy = if g.lines().iter().all(|l| l.g == 0.0) {
            g.map_conductance(|l| 0.5 * l.beta).unwrap()
        } else {
            g.clone()
        };
        let config = theorem_config(&lossy).with_mode(Mode::Lc);
        let mut learner = TopologyLearner::new(Statistics::Joint(joint_cov(&lossy)));
        let out = learner.learn(&config).unwrap();
        assert_eq!(topology_error(&lossy, &out.estimate).unwrap(), 0.0);
    }
}

#[test]
fn g3_samples_are_recovered() {
    let g = fixtures::g3();
    let inj = InjectionModel::gaussian(&g, 0.1);
    let samples = generate_samples(&g, Model::DcLinear, &inj, 10_000, 0.0, 3).unwrap();
    let n = g.size();
    let report =
        theoretical_thresholds(&g, &inj.active_covariance(), &no_noise(&g)).unwrap();
    let out = learn_topology(&samples, &report.config).unwrap();
    assert_eq!(topology_error(&g, &out.estimate).unwrap(), 0.0);
    assert!(out.merges.is_empty());
    assert_eq!(out.diagnostics.node_costs.len(), n);

    let short = samples.truncate(1);
    let err = learn_topology(&short, &report.config).unwrap_err();
    assert!(matches!(err.source, Error::TooFewSamples { .. }));
}

#[test]
fn coupled_mode_needs_magnitudes() {
    let g = fixtures::g3();
    let inj = InjectionModel::gaussian(&g, 0.1);
    let samples = generate_samples(&g, Model::DcLinear, &inj, 50, 0.0, 3).unwrap();
    let config = theorem_config(&g).with_mode(Mode::Lc);
    assert!(learn_topology(&samples, &config).is_err());
}

fn grid_with_terminal_zero_node() -> Grid {
    Grid::new(
        vec![
            Node::reference(0),
            Node::excited(1),
            Node::excited(2),
            Node::zero_injection(3),
        ],
        vec![Line::new(0, 1, 1.0, 0.0), Line::new(1, 2, 1.0, 0.0), Line::new(2, 3, 2.0, 0.0)],
    )
    .unwrap()
}

#[test]
fn terminal_zero_injection_node_is_merged() {
    let g = grid_with_terminal_zero_node();
    let inj = InjectionModel::gaussian(&g, 0.1);
    let samples = generate_samples(&g, Model::DcLinear, &inj, 200, 0.0, 1).unwrap();
    let (reduced, merges) = merge_overlapping_nodes(&samples, 1e-10).unwrap();
    assert_eq!(
        merges,
        vec![Merge {
            representative: 2,
            removed: 3
        }]
    );
    assert_eq!(reduced.labels, vec![1, 2]);

    let config = LearnerConfig::new(1e-6, 0.25, 10.0).unwrap();
    let out = learn_topology(&samples, &config).unwrap();
    assert_eq!(topology_error(&g, &out.estimate).unwrap(), 0.0);

    let (same, none) = merge_overlapping_nodes(&reduced, 1e-10).unwrap();
    assert!(none.is_empty());
    assert_eq!(same, reduced);

    let noisy = generate_samples(&g, Model::DcLinear, &inj, 200, 0.01, 1).unwrap();
    assert!(merge_overlapping_nodes(&noisy, 0.0).unwrap().1.is_empty());
}

#[test]
fn joint_identification_matches_two_stage_on_trees() {
    for g in [fixtures::g3(), fixtures::gstar(), fixtures::ieee33_radial()] {
        let sigma = phase_cov(&g, 1.0);
        let config = theorem_config(&g);
        let (zero, joint_edges) = joint_identify(&sigma, config.tau1, config.tau2).unwrap();
        let two_stage_zero = identify_zero_injection(&sigma, config.tau1).unwrap();
        assert_eq!(zero, two_stage_zero);
        let (two_stage_edges, _) = estimate_u_neighbors(&zero, &sigma, config.tau2).unwrap();
        assert_eq!(joint_edges, two_stage_edges);
    }
    let star = phase_cov(&fixtures::gstar(), 1.0);
    let (_, e) = joint_identify(&star, 1e-9, 0.1).unwrap();
    assert_eq!(e, edges(&[(1, 2), (1, 3), (1, 4)]));
}

#[test]
fn report_sections_round_trip() {
    let g = fixtures::g3();
    let mut learner = TopologyLearner::new(Statistics::Phase(phase_cov(&g, 1.0)));
    let out = learner.learn(&theorem_config(&g)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    write_report(&out, &path).unwrap();
    let sections = parse_report_sections(&fs::read_to_string(&path).unwrap());
    assert_eq!(sections["edges"], vec!["1,2", "2,3"]);
    assert_eq!(sections["zero_injection"], vec!["2"]);
    assert_eq!(sections["two_hop_pairs"], vec!["1,3"]);
    assert_eq!(sections["node_costs"].len(), 3);
    assert!(sections["merges"].is_empty());
    assert_eq!(sections["thresholds"].len(), 3);
}

#[test]
fn noisy_identification_separates_at_the_snr_bound() {
    let g = fixtures::g3();
    let n = g.size();
    let clean = phase_cov(&g, 1.0);
    let report = theoretical_thresholds(&g, &DMatrix::identity(n, n), &no_noise(&g)).unwrap();
    let eps = report.snr.sigma_min / (2.0 * report.required[0]);
    let noisy = CovarianceMatrix {
        values: &clean.values + isotropic_noise(&clean.labels, eps).values,
        ..clean
    };
    let mut learner = TopologyLearner::new(Statistics::Phase(noisy));
    let costs = learner.node_costs().unwrap();
    for (i, c) in costs {
        assert_eq!(c <= report.config.tau1, g.is_zero_injection(i), "node {i}: {c}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn raising_tau3_never_adds_excited_edges(seed in 0u64..10_000, lo in 0.01f64..1.0, factor in 1.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let opts = random::RandomGridOptions { nodes: 8 + (seed % 10) as usize, extra_lines: (seed % 3) as usize, ..Default::default() };
        let g = random::random_grid(&opts, &mut rng);
        let base = theorem_config(&g);
        let mut learner = TopologyLearner::new(Statistics::Phase(phase_cov(&g, 1.0)));
        let small = learner.learn(&base.clone().with_thresholds(base.tau1, base.tau2, lo).unwrap()).unwrap();
        let large = learner.learn(&base.clone().with_thresholds(base.tau1, base.tau2, lo * factor).unwrap()).unwrap();
        prop_assert!(large.estimate.edges.is_subset(&small.estimate.edges));
        prop_assert!(small.n2.is_disjoint(&small.estimate.edges));
        // No true line joins two neighbors of a zero-injection node.
        for e in &small.n2 {
            prop_assert!(!g.has_edge(e.0, e.1));
        }
    }
}
