//! Three-stage topology learning for grids with zero-injection nodes.
//!
//! 1. Nodes whose phase (or complex voltage) is an exact convex-type
//!    combination of the others are classified as zero-injection.
//! 2. A constrained regression of each zero-injection node on the excited
//!    nodes recovers its neighbors. Pairs of neighbors of the same node are
//!    collected as two-hop pairs and are never reported as lines.
//! 3. Lines between excited nodes are read off negative entries of the
//!    inverse covariance restricted to the excited nodes.
//!
//! [`TopologyLearner`] caches the threshold-independent parts (regression
//! costs, neighbor coefficients, inverse covariances), so sweeping the
//! thresholds costs little more than a single run.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::covariance::{
    analytic_theta_covariance, empirical_covariance, empirical_joint_covariance, inverse_matrix,
    snr_params, CovarianceMatrix, JointCovariance, SnrParams,
};
use crate::error::{Error, Result};
use crate::grid::{Edge, Grid, NodeId};
use crate::laplacian::{build_laplacian, Weight};
use crate::powerflow::SampleSet;
use crate::regression::{
    solve_complex_regression, solve_constrained_complex_regression,
    solve_constrained_nodal_regression, solve_nodal_regression,
};
use crate::topology::TopologyEstimate;

/// Which measurement model the learner assumes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    /// Phase angles only.
    #[default]
    Dc,
    /// Magnitudes and phases under the lossy linear model.
    Lc,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Dc => "dc",
            Mode::Lc => "lc",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dc" => Ok(Mode::Dc),
            "lc" => Ok(Mode::Lc),
            other => Err(Error::InvalidArgument(format!(
                "unknown learner mode `{other}` (expected dc or lc)"
            ))),
        }
    }
}

pub const DEFAULT_OVERLAP_TOLERANCE: f64 = 1e-10;

/// Quantity compared against `-tau3` when deciding lines between excited
/// nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EdgeStatistic {
    /// Raw inverse-covariance entry.
    #[default]
    Precision,
    /// Inverse-covariance entry divided by the geometric mean of the two
    /// diagonal entries. Same sign pattern as the raw entry, but comparable
    /// across nodes whose phases vary on very different scales.
    Normalized,
}

impl fmt::Display for EdgeStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeStatistic::Precision => "precision",
            EdgeStatistic::Normalized => "normalized",
        })
    }
}

impl FromStr for EdgeStatistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "precision" => Ok(EdgeStatistic::Precision),
            "normalized" => Ok(EdgeStatistic::Normalized),
            other => Err(Error::InvalidArgument(format!(
                "unknown edge statistic `{other}` (expected precision or normalized)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerConfig {
    /// Largest regression cost still classified as zero-injection.
    pub tau1: f64,
    /// Smallest regression weight accepted as a neighbor.
    pub tau2: f64,
    /// Edge statistics at or below `-tau3` are lines.
    pub tau3: f64,
    pub mode: Mode,
    pub statistic: EdgeStatistic,
    /// Read zero-injection neighbors off the unconstrained regression
    /// instead of running the constrained one.
    pub joint: bool,
    /// Mean squared phase difference at or below which two nodes are
    /// treated as the same measurement point. Zero disables merging.
    pub overlap_tolerance: f64,
}

impl LearnerConfig {
    pub fn new(tau1: f64, tau2: f64, tau3: f64) -> Result<Self> {
        for (name, t) in [("tau1", tau1), ("tau2", tau2), ("tau3", tau3)] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {t}"
                )));
            }
        }
        Ok(LearnerConfig {
            tau1,
            tau2,
            tau3,
            mode: Mode::Dc,
            statistic: EdgeStatistic::Precision,
            joint: false,
            overlap_tolerance: DEFAULT_OVERLAP_TOLERANCE,
        })
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_statistic(mut self, statistic: EdgeStatistic) -> Self {
        self.statistic = statistic;
        self
    }

    pub fn with_joint(mut self, joint: bool) -> Self {
        self.joint = joint;
        self
    }

    pub fn with_overlap_tolerance(mut self, tol: f64) -> Self {
        self.overlap_tolerance = tol.max(0.0);
        self
    }

    pub fn with_thresholds(mut self, tau1: f64, tau2: f64, tau3: f64) -> Result<Self> {
        let fresh = LearnerConfig::new(tau1, tau2, tau3)?;
        self.tau1 = fresh.tau1;
        self.tau2 = fresh.tau2;
        self.tau3 = fresh.tau3;
        Ok(self)
    }
}

/// Node kept and node dropped by the overlap preprocessing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Merge {
    pub representative: NodeId,
    pub removed: NodeId,
}

/// Intermediate quantities of a run, kept even when a stage fails.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageDiagnostics {
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    /// Regression cost of every node, ascending by node id.
    pub node_costs: Vec<(NodeId, f64)>,
    /// `(zero-injection node, regressor, weight)`, with the modulus of the
    /// complex weight in the coupled mode.
    pub neighbor_weights: Vec<(NodeId, NodeId, f64)>,
    /// Edge statistic for every pair of excited nodes.
    pub pair_statistics: Vec<(NodeId, NodeId, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnOutcome {
    pub estimate: TopologyEstimate,
    /// Pairs of nodes that share an identified zero-injection neighbor.
    pub n2: BTreeSet<Edge>,
    pub diagnostics: StageDiagnostics,
    pub merges: Vec<Merge>,
}

/// A stage failure together with everything computed before it.
#[derive(Debug, thiserror::Error)]
#[error("{stage} failed: {source}")]
pub struct LearnFailure {
    pub stage: &'static str,
    #[source]
    pub source: Error,
    pub diagnostics: StageDiagnostics,
}

impl From<LearnFailure> for Error {
    fn from(f: LearnFailure) -> Self {
        f.source
    }
}

/// Second-order statistics the learner runs on.
#[derive(Clone, Debug)]
pub enum Statistics {
    Phase(CovarianceMatrix),
    Joint(JointCovariance),
}

impl Statistics {
    pub fn labels(&self) -> &[NodeId] {
        match self {
            Statistics::Phase(c) => &c.labels,
            Statistics::Joint(c) => &c.labels,
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            Statistics::Phase(_) => Mode::Dc,
            Statistics::Joint(_) => Mode::Lc,
        }
    }
}

/// Regression output reduced to what the thresholds act on.
#[derive(Clone, Debug)]
struct Fit {
    cost: f64,
    weights: Vec<(NodeId, f64)>,
}

fn fit_unconstrained(stats: &Statistics, i: NodeId) -> Result<Fit> {
    Ok(match stats {
        Statistics::Phase(c) => {
            let s = solve_nodal_regression(i, c)?;
            Fit {
                cost: s.cost,
                weights: s.labels.iter().copied().zip(s.x.iter().copied()).collect(),
            }
        }
        Statistics::Joint(c) => {
            let s = solve_complex_regression(i, c)?;
            Fit {
                cost: s.cost,
                weights: s.labels.iter().copied().zip(s.modulus().iter().copied()).collect(),
            }
        }
    })
}

fn fit_constrained(stats: &Statistics, i: NodeId, zero: &[NodeId]) -> Result<Fit> {
    Ok(match stats {
        Statistics::Phase(c) => {
            let s = solve_constrained_nodal_regression(i, zero, c)?;
            Fit {
                cost: s.cost,
                weights: s.labels.iter().copied().zip(s.x.iter().copied()).collect(),
            }
        }
        Statistics::Joint(c) => {
            let s = solve_constrained_complex_regression(i, zero, c)?;
            Fit {
                cost: s.cost,
                weights: s.labels.iter().copied().zip(s.modulus().iter().copied()).collect(),
            }
        }
    })
}

/// Per-pair edge statistic over `keep`: the inverse covariance entry, or
/// in the coupled mode the sum of the magnitude and phase entries.
fn pair_statistic_matrix(stats: &Statistics, keep: &[NodeId]) -> Result<DMatrix<f64>> {
    match stats {
        Statistics::Phase(c) => inverse_matrix(&c.restrict(keep)?.values),
        Statistics::Joint(c) => {
            let inv = inverse_matrix(&c.restrict(keep)?.values)?;
            let n = keep.len();
            Ok(DMatrix::from_fn(n, n, |a, b| inv[(a, b)] + inv[(a + n, b + n)]))
        }
    }
}

/// Learner over fixed statistics with caches for repeated threshold
/// choices.
pub struct TopologyLearner {
    stats: Statistics,
    unconstrained: Option<Vec<(NodeId, Fit)>>,
    constrained: HashMap<Vec<NodeId>, Vec<(NodeId, Fit)>>,
    pairs: HashMap<Vec<NodeId>, (Vec<NodeId>, DMatrix<f64>)>,
}

impl TopologyLearner {
    pub fn new(stats: Statistics) -> Self {
        TopologyLearner {
            stats,
            unconstrained: None,
            constrained: HashMap::new(),
            pairs: HashMap::new(),
        }
    }

    /// Builds the statistics a given mode needs from samples. The coupled
    /// mode requires magnitudes.
    pub fn from_samples(samples: &SampleSet, mode: Mode) -> Result<Self> {
        let stats = match mode {
            Mode::Dc => Statistics::Phase(empirical_covariance(samples)?),
            Mode::Lc => Statistics::Joint(empirical_joint_covariance(samples)?),
        };
        Ok(TopologyLearner::new(stats))
    }

    pub fn statistics(&self) -> &Statistics {
        &self.stats
    }

    fn ensure_unconstrained(&mut self) -> Result<&[(NodeId, Fit)]> {
        if self.unconstrained.is_none() {
            let fits = self
                .stats
                .labels()
                .iter()
                .map(|&i| fit_unconstrained(&self.stats, i).map(|f| (i, f)))
                .collect::<Result<Vec<_>>>()?;
            self.unconstrained = Some(fits);
        }
        Ok(self.unconstrained.as_deref().unwrap())
    }

    /// Unconstrained regression cost of every node, ascending by id.
    pub fn node_costs(&mut self) -> Result<Vec<(NodeId, f64)>> {
        let mut costs: Vec<(NodeId, f64)> = self
            .ensure_unconstrained()?
            .iter()
            .map(|(i, f)| (*i, f.cost))
            .collect();
        costs.sort_by_key(|c| c.0);
        Ok(costs)
    }

    fn constrained_fits(&mut self, zero: &[NodeId]) -> Result<&[(NodeId, Fit)]> {
        if !self.constrained.contains_key(zero) {
            let fits = zero
                .iter()
                .map(|&u| fit_constrained(&self.stats, u, zero).map(|f| (u, f)))
                .collect::<Result<Vec<_>>>()?;
            self.constrained.insert(zero.to_vec(), fits);
        }
        Ok(&self.constrained[zero])
    }

    fn pair_statistics(&mut self, zero: &[NodeId]) -> Result<&(Vec<NodeId>, DMatrix<f64>)> {
        if !self.pairs.contains_key(zero) {
            let keep: Vec<NodeId> = self
                .stats
                .labels()
                .iter()
                .copied()
                .filter(|l| !zero.contains(l))
                .collect();
            let m = if keep.is_empty() {
                DMatrix::zeros(0, 0)
            } else {
                pair_statistic_matrix(&self.stats, &keep)?
            };
            self.pairs.insert(zero.to_vec(), (keep, m));
        }
        Ok(&self.pairs[zero])
    }

    /// Runs all three stages with the thresholds of `config`. The mode is
    /// fixed by the statistics; overlap merging happens before the learner
    /// is built and is not repeated here.
    pub fn learn(&mut self, config: &LearnerConfig) -> std::result::Result<LearnOutcome, LearnFailure> {
        let mut diagnostics = StageDiagnostics {
            tau1: config.tau1,
            tau2: config.tau2,
            tau3: config.tau3,
            ..Default::default()
        };
        macro_rules! stage {
            ($name:expr, $e:expr) => {
                match $e {
                    Ok(v) => v,
                    Err(source) => {
                        return Err(LearnFailure {
                            stage: $name,
                            source,
                            diagnostics,
                        })
                    }
                }
            };
        }

        diagnostics.node_costs = stage!("zero-injection identification", self.node_costs());
        let zero: Vec<NodeId> = diagnostics
            .node_costs
            .iter()
            .filter(|(_, c)| *c <= config.tau1)
            .map(|(i, _)| *i)
            .collect();

        let fits: Vec<(NodeId, Fit)> = if config.joint {
            let all = stage!("zero-injection identification", self.ensure_unconstrained());
            all.iter().filter(|(i, _)| zero.contains(i)).cloned().collect()
        } else {
            stage!("neighbor estimation", self.constrained_fits(&zero)).to_vec()
        };
        let mut edges = BTreeSet::new();
        let mut n2 = BTreeSet::new();
        for (u, fit) in &fits {
            let selected = neighbors_from_weights(&fit.weights, config.tau2);
            for &j in &selected {
                edges.insert(Edge::new(*u, j));
            }
            add_pairs(&selected, &mut n2);
            diagnostics
                .neighbor_weights
                .extend(fit.weights.iter().map(|&(j, w)| (*u, j, w)));
        }

        let (keep, stat) = stage!("excited-node edge detection", self.pair_statistics(&zero));
        let keep = keep.clone();
        let stat = match config.statistic {
            EdgeStatistic::Precision => stat.clone(),
            EdgeStatistic::Normalized => normalize_statistic(stat),
        };
        for a in 0..keep.len() {
            for b in a + 1..keep.len() {
                diagnostics.pair_statistics.push((keep[a], keep[b], stat[(a, b)]));
            }
        }
        edges.extend(edges_from_statistics(&keep, &stat, &n2, config.tau3));

        Ok(LearnOutcome {
            estimate: TopologyEstimate {
                edges,
                zero_injection_nodes: zero.into_iter().collect(),
            },
            n2,
            diagnostics,
            merges: Vec::new(),
        })
    }
}

fn neighbors_from_weights(weights: &[(NodeId, f64)], tau2: f64) -> Vec<NodeId> {
    weights
        .iter()
        .filter(|(_, w)| *w >= tau2)
        .map(|(j, _)| *j)
        .collect()
}

fn add_pairs(nodes: &[NodeId], n2: &mut BTreeSet<Edge>) {
    for (a, &j) in nodes.iter().enumerate() {
        for &k in &nodes[a + 1..] {
            n2.insert(Edge::new(j, k));
        }
    }
}

fn normalize_statistic(stat: &DMatrix<f64>) -> DMatrix<f64> {
    let d = stat.diagonal().map(|x| x.abs().sqrt());
    DMatrix::from_fn(stat.nrows(), stat.ncols(), |a, b| stat[(a, b)] / (d[a] * d[b]))
}

fn edges_from_statistics(
    labels: &[NodeId],
    stat: &DMatrix<f64>,
    n2: &BTreeSet<Edge>,
    tau3: f64,
) -> BTreeSet<Edge> {
    let mut edges = BTreeSet::new();
    for a in 0..labels.len() {
        for b in a + 1..labels.len() {
            let e = Edge::new(labels[a], labels[b]);
            if stat[(a, b)] <= -tau3 && !n2.contains(&e) {
                edges.insert(e);
            }
        }
    }
    edges
}

/// Groups nodes whose phases (and magnitudes, when present) coincide up
/// to `tol` in mean squared difference, keeping the lowest id of each
/// group. Dropped nodes are reported as terminal zero-injection
/// candidates hanging off their representative.
pub fn merge_overlapping_nodes(samples: &SampleSet, tol: f64) -> Result<(SampleSet, Vec<Merge>)> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let n = samples.dim();
    let t = samples.len() as f64;
    let msd = |a: usize, b: usize| -> f64 {
        let mut s: f64 = (0..samples.len())
            .map(|r| (samples.theta[(r, a)] - samples.theta[(r, b)]).powi(2))
            .sum();
        if let Some(v) = &samples.v {
            s += (0..samples.len())
                .map(|r| (v[(r, a)] - v[(r, b)]).powi(2))
                .sum::<f64>();
        }
        s / t
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&k| samples.labels[k]);
    let mut rep_of: Vec<Option<usize>> = vec![None; n];
    let mut merges = Vec::new();
    for (pos, &a) in order.iter().enumerate() {
        if rep_of[a].is_some() {
            continue;
        }
        for &b in &order[pos + 1..] {
            if rep_of[b].is_none() && msd(a, b) <= tol {
                rep_of[b] = Some(a);
                merges.push(Merge {
                    representative: samples.labels[a],
                    removed: samples.labels[b],
                });
            }
        }
    }
    if merges.is_empty() {
        return Ok((samples.clone(), merges));
    }
    let keep: Vec<NodeId> = samples
        .labels
        .iter()
        .copied()
        .enumerate()
        .filter(|(k, _)| rep_of[*k].is_none())
        .map(|(_, l)| l)
        .collect();
    Ok((samples.select(&keep)?, merges))
}

/// Nodes whose unconstrained regression cost is at most `tau1`.
pub fn identify_zero_injection(sigma: &CovarianceMatrix, tau1: f64) -> Result<BTreeSet<NodeId>> {
    let mut zero = BTreeSet::new();
    for &i in &sigma.labels {
        if solve_nodal_regression(i, sigma)?.cost <= tau1 {
            zero.insert(i);
        }
    }
    Ok(zero)
}

/// Lines from each zero-injection node to the excited nodes whose
/// constrained regression weight is at least `tau2`, and the pairs of such
/// neighbors.
pub fn estimate_u_neighbors(
    zero: &BTreeSet<NodeId>,
    sigma: &CovarianceMatrix,
    tau2: f64,
) -> Result<(BTreeSet<Edge>, BTreeSet<Edge>)> {
    let zero: Vec<NodeId> = zero.iter().copied().collect();
    let stats = Statistics::Phase(sigma.clone());
    let mut edges = BTreeSet::new();
    let mut n2 = BTreeSet::new();
    for &u in &zero {
        let fit = fit_constrained(&stats, u, &zero)?;
        let selected = neighbors_from_weights(&fit.weights, tau2);
        edges.extend(selected.iter().map(|&j| Edge::new(u, j)));
        add_pairs(&selected, &mut n2);
    }
    Ok((edges, n2))
}

/// Lines among the excited nodes from the phase covariance restricted to
/// them.
pub fn detect_uc_edges(sigma_uc: &CovarianceMatrix, n2: &BTreeSet<Edge>, tau3: f64) -> Result<BTreeSet<Edge>> {
    let stat = pair_statistic_matrix(&Statistics::Phase(sigma_uc.clone()), &sigma_uc.labels)?;
    Ok(edges_from_statistics(&sigma_uc.labels, &stat, n2, tau3))
}

/// Coupled-model version of [`detect_uc_edges`].
pub fn detect_uc_edges_joint(
    sigma_uc: &JointCovariance,
    n2: &BTreeSet<Edge>,
    tau3: f64,
) -> Result<BTreeSet<Edge>> {
    let stat = pair_statistic_matrix(&Statistics::Joint(sigma_uc.clone()), &sigma_uc.labels)?;
    Ok(edges_from_statistics(&sigma_uc.labels, &stat, n2, tau3))
}

/// Single-pass variant: the unconstrained regression of each node gives
/// both its classification and, for zero-injection nodes, its neighbors.
pub fn joint_identify(
    sigma: &CovarianceMatrix,
    tau1: f64,
    tau2: f64,
) -> Result<(BTreeSet<NodeId>, BTreeSet<Edge>)> {
    let stats = Statistics::Phase(sigma.clone());
    let mut zero = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for &i in &sigma.labels {
        let fit = fit_unconstrained(&stats, i)?;
        if fit.cost <= tau1 {
            zero.insert(i);
            edges.extend(neighbors_from_weights(&fit.weights, tau2).into_iter().map(|j| Edge::new(i, j)));
        }
    }
    Ok((zero, edges))
}

fn failure(stage: &'static str, source: Error, config: &LearnerConfig) -> LearnFailure {
    LearnFailure {
        stage,
        source,
        diagnostics: StageDiagnostics {
            tau1: config.tau1,
            tau2: config.tau2,
            tau3: config.tau3,
            ..Default::default()
        },
    }
}

/// Samples after overlap merging, ready for repeated threshold choices.
pub struct SampleLearner {
    learner: TopologyLearner,
    merges: Vec<Merge>,
}

impl SampleLearner {
    /// Merges overlapping nodes and estimates the statistics for
    /// `config.mode`; the thresholds of `config` are not used yet.
    pub fn prepare(samples: &SampleSet, config: &LearnerConfig) -> std::result::Result<Self, LearnFailure> {
        let (reduced, merges) = merge_overlapping_nodes(samples, config.overlap_tolerance)
            .map_err(|e| failure("overlap merging", e, config))?;
        if config.mode == Mode::Lc && reduced.v.is_none() {
            return Err(failure(
                "covariance estimation",
                Error::InvalidArgument("the coupled mode needs voltage magnitude samples".into()),
                config,
            ));
        }
        let learner = TopologyLearner::from_samples(&reduced, config.mode)
            .map_err(|e| failure("covariance estimation", e, config))?;
        Ok(SampleLearner { learner, merges })
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Runs the stages; merged nodes come back as zero-injection leaves of
    /// their representatives.
    pub fn learn(&mut self, config: &LearnerConfig) -> std::result::Result<LearnOutcome, LearnFailure> {
        let mut outcome = self.learner.learn(config)?;
        for m in &self.merges {
            outcome
                .estimate
                .edges
                .insert(Edge::new(m.representative, m.removed));
            outcome.estimate.zero_injection_nodes.insert(m.removed);
        }
        outcome.merges = self.merges.clone();
        Ok(outcome)
    }
}

/// Full pipeline on samples: overlap merging, empirical statistics, and
/// the three stages.
pub fn learn_topology(
    samples: &SampleSet,
    config: &LearnerConfig,
) -> std::result::Result<LearnOutcome, LearnFailure> {
    SampleLearner::prepare(samples, config)?.learn(config)
}

/// Threshold values that guarantee recovery given the true grid, plus the
/// signal-to-noise check behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdReport {
    pub config: LearnerConfig,
    pub snr: SnrParams,
    /// Smallest SNR at which each stage's margin is guaranteed:
    /// identification, neighbor weights, excited-node lines.
    pub required: [f64; 3],
}

impl ThresholdReport {
    pub fn required_snr(&self) -> f64 {
        self.required.iter().copied().fold(0.0, f64::max)
    }

    pub fn snr_ok(&self) -> bool {
        self.snr.snr >= self.required_snr()
    }
}

/// Thresholds from the grid, the injection covariance `sigma_p` (over
/// [`Grid::labels`]; zero-injection rows are ignored) and the noise
/// covariance over the excited nodes.
pub fn theoretical_thresholds(
    grid: &Grid,
    sigma_p: &DMatrix<f64>,
    sigma_n: &CovarianceMatrix,
) -> Result<ThresholdReport> {
    let h = build_laplacian(grid, Weight::Susceptance);
    let zero = grid.zero_injection();
    if sigma_p.shape() != (h.dim(), h.dim()) {
        return Err(Error::Dimension(format!(
            "injection covariance is {}x{}, grid has {} non-reference nodes",
            sigma_p.nrows(),
            sigma_p.ncols(),
            h.dim()
        )));
    }
    // Zero-injection rows carry no injection by definition; ignore them so
    // callers may pass e.g. an identity.
    let zi = crate::linalg::positions(&h.labels, &zero)?;
    let sigma_p = DMatrix::from_fn(h.dim(), h.dim(), |a, b| {
        if zi.contains(&a) || zi.contains(&b) {
            0.0
        } else {
            sigma_p[(a, b)]
        }
    });
    let sigma_p = &sigma_p;
    let sigma_theta = analytic_theta_covariance(&h, sigma_p, &zero)?;
    let theta_uc = sigma_theta.restrict(&grid.excited())?;
    let snr = snr_params(grid, &theta_uc, sigma_n);
    let s = snr.s_id;
    let poly = 1.0 + s.powi(4) + s * s;
    let max_p = sigma_p.diagonal().max();
    let beta2 = snr.beta_min * snr.beta_min;
    let config = LearnerConfig::new(snr.sigma_min / poly, 1.0 / (2.0 * s), beta2 / max_p)?;
    let required = [
        2.0 * poly,
        16.0 * 2f64.sqrt() * s * s,
        max_p / (beta2 * snr.sigma_min),
    ];
    Ok(ThresholdReport {
        config,
        snr,
        required,
    })
}

/// Writes the outcome as CSV blocks separated by `# section: <name>`
/// lines.
pub fn format_report(outcome: &LearnOutcome) -> String {
    let d = &outcome.diagnostics;
    let mut out = String::new();
    let _ = writeln!(out, "# section: thresholds\nname,value");
    let _ = writeln!(out, "tau1,{:e}\ntau2,{:e}\ntau3,{:e}", d.tau1, d.tau2, d.tau3);
    let _ = writeln!(out, "# section: edges\ni,j");
    for e in &outcome.estimate.edges {
        let _ = writeln!(out, "{},{}", e.0, e.1);
    }
    let _ = writeln!(out, "# section: zero_injection\nnode");
    for u in &outcome.estimate.zero_injection_nodes {
        let _ = writeln!(out, "{u}");
    }
    let _ = writeln!(out, "# section: two_hop_pairs\ni,j");
    for e in &outcome.n2 {
        let _ = writeln!(out, "{},{}", e.0, e.1);
    }
    let _ = writeln!(out, "# section: merges\nrepresentative,removed");
    for m in &outcome.merges {
        let _ = writeln!(out, "{},{}", m.representative, m.removed);
    }
    let _ = writeln!(out, "# section: node_costs\nnode,cost");
    for (i, c) in &d.node_costs {
        let _ = writeln!(out, "{i},{c:e}");
    }
    let _ = writeln!(out, "# section: neighbor_weights\nzero_injection_node,node,weight");
    for (u, j, w) in &d.neighbor_weights {
        let _ = writeln!(out, "{u},{j},{w:e}");
    }
    let _ = writeln!(out, "# section: pair_statistics\ni,j,value");
    for (i, j, v) in &d.pair_statistics {
        let _ = writeln!(out, "{i},{j},{v:e}");
    }
    out
}

pub fn write_report(outcome: &LearnOutcome, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_report(outcome)).map_err(|e| Error::io(path, e))
}

/// Splits a report back into its sections (name to data rows, header
/// excluded).
pub fn parse_report_sections(text: &str) -> BTreeMap<String, Vec<String>> {
    let mut sections = BTreeMap::new();
    let mut current: Option<(String, bool)> = None;
    for line in text.lines() {
        if let Some(name) = line.strip_prefix("# section: ") {
            sections.insert(name.trim().to_string(), Vec::new());
            current = Some((name.trim().to_string(), false));
        } else if let Some((name, seen_header)) = current.as_mut() {
            if !*seen_header {
                *seen_header = true;
            } else {
                sections.get_mut(name.as_str()).unwrap().push(line.to_string());
            }
        }
    }
    sections
}

#[cfg(test)]
mod tests;
