use std::collections::BTreeSet;

use super::{Edge, Grid, NodeId};

/// Structural checks on the zero-injection set and short loops.
///
/// Cycles are enumerated up to length five, which is the longest loop the
/// checks constrain.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AssumptionReport {
    /// Zero-injection nodes of degree < 2.
    pub terminal_zero_injection: Vec<NodeId>,
    /// Lines joining two zero-injection nodes.
    pub adjacent_zero_injection: Vec<Edge>,
    /// Triangles, as ascending node triples.
    pub triangles: Vec<Vec<NodeId>>,
    /// 4-cycles that pass through a zero-injection node.
    pub four_cycles_with_zero_injection: Vec<Vec<NodeId>>,
    /// 5-cycles that pass through two or more zero-injection nodes.
    pub five_cycles_with_multiple_zero_injection: Vec<Vec<NodeId>>,
    /// Pairs `(i, j)` of zero-injection nodes where every neighbor of `j` is
    /// also a neighbor of `i`; joint identification is unreliable for `i`.
    pub nested_neighborhoods: Vec<(NodeId, NodeId)>,
}

impl AssumptionReport {
    pub fn zero_injection_internal(&self) -> bool {
        self.terminal_zero_injection.is_empty()
    }

    pub fn zero_injection_non_adjacent(&self) -> bool {
        self.adjacent_zero_injection.is_empty()
    }

    pub fn girth_at_least_four(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn no_four_cycle_through_zero_injection(&self) -> bool {
        self.four_cycles_with_zero_injection.is_empty()
    }

    pub fn five_cycles_hold_at_most_one_zero_injection(&self) -> bool {
        self.five_cycles_with_multiple_zero_injection.is_empty()
    }

    /// Internal, non-adjacent zero-injection nodes.
    pub fn zero_injection_ok(&self) -> bool {
        self.zero_injection_internal() && self.zero_injection_non_adjacent()
    }

    /// Loop conditions: girth at least four, no zero-injection node on a
    /// 4-cycle, at most one on any 5-cycle.
    pub fn loops_ok(&self) -> bool {
        self.girth_at_least_four()
            && self.no_four_cycle_through_zero_injection()
            && self.five_cycles_hold_at_most_one_zero_injection()
    }

    pub fn all_pass(&self) -> bool {
        self.zero_injection_ok() && self.loops_ok()
    }

    /// Whether a single regression per node identifies both the
    /// zero-injection set and its neighbors.
    pub fn joint_identifiable(&self) -> bool {
        self.zero_injection_ok() && self.nested_neighborhoods.is_empty()
    }
}

pub fn validate_assumptions(grid: &Grid) -> AssumptionReport {
    let zero: BTreeSet<NodeId> = grid.zero_injection().into_iter().collect();
    let mut report = AssumptionReport::default();

    for &u in &zero {
        if grid.degree(u) < 2 {
            report.terminal_zero_injection.push(u);
        }
    }
    for line in grid.lines() {
        if zero.contains(&line.i) && zero.contains(&line.j) {
            report.adjacent_zero_injection.push(line.edge());
        }
    }

    for cycle in short_cycles(grid, 5) {
        let zeros = cycle.iter().filter(|v| zero.contains(v)).count();
        let mut sorted = cycle.clone();
        sorted.sort_unstable();
        match cycle.len() {
            3 => report.triangles.push(sorted),
            4 if zeros >= 1 => report.four_cycles_with_zero_injection.push(sorted),
            5 if zeros >= 2 => report
                .five_cycles_with_multiple_zero_injection
                .push(sorted),
            _ => {}
        }
    }
    report.triangles.sort();
    report.four_cycles_with_zero_injection.sort();
    report.five_cycles_with_multiple_zero_injection.sort();

    for &i in &zero {
        let ni: BTreeSet<NodeId> = grid.neighbors(i).collect();
        for &j in &zero {
            if i != j && grid.neighbors(j).all(|k| ni.contains(&k)) {
                report.nested_neighborhoods.push((i, j));
            }
        }
    }
    report
}

/// Simple cycles of length 3..=max_len, each reported once as the node
/// sequence starting at its smallest id.
fn short_cycles(grid: &Grid, max_len: usize) -> Vec<Vec<NodeId>> {
    let mut cycles = Vec::new();
    let mut path = Vec::with_capacity(max_len);
    for start in grid.nodes().iter().map(|n| n.id) {
        path.clear();
        path.push(start);
        extend(grid, start, max_len, &mut path, &mut cycles);
    }
    cycles
}

fn extend(
    grid: &Grid,
    start: NodeId,
    max_len: usize,
    path: &mut Vec<NodeId>,
    cycles: &mut Vec<Vec<NodeId>>,
) {
    let last = *path.last().unwrap();
    for next in grid.neighbors(last) {
        if next == start {
            // Each cycle is found in both directions; keep one.
            if path.len() >= 3 && path[1] < path[path.len() - 1] {
                cycles.push(path.clone());
            }
        } else if next > start && path.len() < max_len && !path.contains(&next) {
            path.push(next);
            extend(grid, start, max_len, path, cycles);
            path.pop();
        }
    }
}
