//! Grid graph: buses, lines, and the zero-injection flags that drive the
//! learning problem.
//!
//! A [`Grid`] is validated on construction and immutable afterwards. Nodes
//! are kept in ascending id order and lines in lexicographic `(i, j)` order
//! with `i < j`, which is also the order used by the text format.

mod assumptions;
pub mod fixtures;
mod io;
pub mod random;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};

pub use assumptions::{validate_assumptions, AssumptionReport};
pub use io::{load_grid, parse_grid, save_grid, write_grid};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub is_reference: bool,
    pub has_injection: bool,
}

impl Node {
    pub fn reference(id: NodeId) -> Self {
        Node {
            id,
            is_reference: true,
            has_injection: true,
        }
    }

    pub fn excited(id: NodeId) -> Self {
        Node {
            id,
            is_reference: false,
            has_injection: true,
        }
    }

    pub fn zero_injection(id: NodeId) -> Self {
        Node {
            id,
            is_reference: false,
            has_injection: false,
        }
    }
}

/// A line with per-unit susceptance `beta` and conductance `g`.
#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub i: NodeId,
    pub j: NodeId,
    pub beta: f64,
    pub g: f64,
}

impl Line {
    pub fn new(i: NodeId, j: NodeId, beta: f64, g: f64) -> Self {
        Line { i, j, beta, g }
    }

    pub fn edge(&self) -> Edge {
        Edge::new(self.i, self.j)
    }
}

/// Undirected node pair stored with the smaller id first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge(pub NodeId, pub NodeId);

impl Edge {
    pub fn new(a: NodeId, b: NodeId) -> Self {
        if a <= b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.0 == id || self.1 == id
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.0, self.1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    nodes: Vec<Node>,
    lines: Vec<Line>,
    reference: NodeId,
    adjacency: BTreeMap<NodeId, Vec<(NodeId, usize)>>,
}

impl Grid {
    /// Validates and canonicalizes a grid. Line endpoints are reordered so
    /// that `i < j`.
    pub fn new(mut nodes: Vec<Node>, lines: Vec<Line>) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        for pair in nodes.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::DuplicateNode(pair[0].id));
            }
        }

        let mut reference = None;
        for node in &nodes {
            if node.is_reference {
                if let Some(first) = reference {
                    return Err(Error::MultipleReferences(first, node.id));
                }
                if !node.has_injection {
                    return Err(Error::ReferenceZeroInjection(node.id));
                }
                reference = Some(node.id);
            }
        }
        let reference = reference.ok_or(Error::NoReference)?;

        let known: BTreeSet<NodeId> = nodes.iter().map(|n| n.id).collect();
        let mut lines: Vec<Line> = lines
            .into_iter()
            .map(|l| {
                if l.i <= l.j {
                    l
                } else {
                    Line::new(l.j, l.i, l.beta, l.g)
                }
            })
            .collect();
        let mut seen = BTreeSet::new();
        for line in &lines {
            if !known.contains(&line.i) || !known.contains(&line.j) {
                return Err(Error::UnknownNode(line.i, line.j));
            }
            if line.i == line.j {
                return Err(Error::SelfLoop(line.i));
            }
            if !seen.insert(line.edge()) {
                return Err(Error::DuplicateEdge(line.i, line.j));
            }
            if !(line.beta > 0.0) || !line.beta.is_finite() {
                return Err(Error::NonPositiveSusceptance {
                    i: line.i,
                    j: line.j,
                    beta: line.beta,
                });
            }
            if !(line.g >= 0.0) || !line.g.is_finite() {
                return Err(Error::InvalidConductance {
                    i: line.i,
                    j: line.j,
                    g: line.g,
                });
            }
        }
        lines.sort_by_key(|l| (l.i, l.j));

        let mut adjacency: BTreeMap<NodeId, Vec<(NodeId, usize)>> =
            nodes.iter().map(|n| (n.id, Vec::new())).collect();
        for (k, line) in lines.iter().enumerate() {
            adjacency.get_mut(&line.i).unwrap().push((line.j, k));
            adjacency.get_mut(&line.j).unwrap().push((line.i, k));
        }

        let grid = Grid {
            nodes,
            lines,
            reference,
            adjacency,
        };
        grid.check_connected()?;
        Ok(grid)
    }

    fn check_connected(&self) -> Result<()> {
        let mut visited = BTreeSet::from([self.reference]);
        let mut queue = VecDeque::from([self.reference]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[&u] {
                if visited.insert(v) {
                    queue.push_back(v);
                }
            }
        }
        match self.nodes.iter().find(|n| !visited.contains(&n.id)) {
            Some(n) => Err(Error::Disconnected(n.id)),
            None => Ok(()),
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn reference(&self) -> NodeId {
        self.reference
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|k| &self.nodes[k])
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.node(id).is_some()
    }

    /// Number of non-reference nodes.
    pub fn size(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Non-reference nodes without injection, ascending.
    pub fn zero_injection(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| !n.is_reference && !n.has_injection)
            .map(|n| n.id)
            .collect()
    }

    /// Non-reference nodes with injection, ascending.
    pub fn excited(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| !n.is_reference && n.has_injection)
            .map(|n| n.id)
            .collect()
    }

    /// Non-reference node ordering used by every matrix and sample set:
    /// zero-injection nodes first, then excited nodes, each ascending.
    pub fn labels(&self) -> Vec<NodeId> {
        let mut labels = self.zero_injection();
        labels.extend(self.excited());
        labels
    }

    pub fn is_zero_injection(&self, id: NodeId) -> bool {
        self.node(id)
            .map(|n| !n.is_reference && !n.has_injection)
            .unwrap_or(false)
    }

    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency
            .get(&id)
            .into_iter()
            .flat_map(|adj| adj.iter().map(|&(v, _)| v))
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency.get(&id).map_or(0, Vec::len)
    }

    pub fn line_between(&self, a: NodeId, b: NodeId) -> Option<&Line> {
        self.adjacency
            .get(&a)?
            .iter()
            .find(|&&(v, _)| v == b)
            .map(|&(_, k)| &self.lines[k])
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.line_between(a, b).is_some()
    }

    /// All lines as undirected pairs, including lines to the reference.
    pub fn edges(&self) -> BTreeSet<Edge> {
        self.lines.iter().map(Line::edge).collect()
    }

    /// Lines between non-reference nodes: the edges a learner can observe.
    pub fn observable_edges(&self) -> BTreeSet<Edge> {
        self.edges()
            .into_iter()
            .filter(|e| !e.contains(self.reference))
            .collect()
    }

    pub fn beta_min(&self) -> f64 {
        self.lines
            .iter()
            .map(|l| l.beta)
            .fold(f64::INFINITY, f64::min)
    }

    /// Same topology with a different zero-injection set.
    pub fn with_zero_injection(&self, zero: &[NodeId]) -> Result<Grid> {
        let zero: BTreeSet<NodeId> = zero.iter().copied().collect();
        for &id in &zero {
            if !self.contains(id) {
                return Err(Error::InvalidArgument(format!("unknown node {id}")));
            }
        }
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node {
                has_injection: n.is_reference || !zero.contains(&n.id),
                ..n.clone()
            })
            .collect();
        Grid::new(nodes, self.lines.clone())
    }

    /// Same topology with every line's conductance replaced by `f(line)`.
    pub fn map_conductance(&self, f: impl Fn(&Line) -> f64) -> Result<Grid> {
        let lines = self
            .lines
            .iter()
            .map(|l| Line { g: f(l), ..l.clone() })
            .collect();
        Grid::new(self.nodes.clone(), lines)
    }

    /// Same topology with every susceptance multiplied by `factor`.
    pub fn scale_susceptance(&self, factor: f64) -> Result<Grid> {
        let lines = self
            .lines
            .iter()
            .map(|l| Line {
                beta: l.beta * factor,
                ..l.clone()
            })
            .collect();
        Grid::new(self.nodes.clone(), lines)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> (Vec<Node>, Vec<Line>) {
        (
            vec![Node::reference(0), Node::excited(1), Node::excited(2)],
            vec![Line::new(0, 1, 1.0, 0.0), Line::new(1, 2, 1.0, 0.0)],
        )
    }

    #[test]
    fn canonicalizes_line_direction_and_order() {
        let (nodes, _) = path3();
        let grid = Grid::new(
            nodes,
            vec![Line::new(2, 1, 1.0, 0.0), Line::new(1, 0, 2.0, 0.0)],
        )
        .unwrap();
        let pairs: Vec<_> = grid.lines().iter().map(|l| (l.i, l.j)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
        assert_eq!(grid.degree(1), 2);
    }

    #[test]
    fn rejects_structural_defects() {
        let (nodes, mut lines) = path3();
        lines.push(Line::new(2, 1, 0.5, 0.0));
        assert!(matches!(
            Grid::new(nodes.clone(), lines),
            Err(Error::DuplicateEdge(1, 2))
        ));

        let (_, lines) = path3();
        let no_ref = vec![Node::excited(0), Node::excited(1), Node::excited(2)];
        assert!(matches!(Grid::new(no_ref, lines), Err(Error::NoReference)));

        let (nodes, _) = path3();
        assert!(matches!(
            Grid::new(nodes.clone(), vec![Line::new(0, 1, 1.0, 0.0)]),
            Err(Error::Disconnected(2))
        ));
        assert!(matches!(
            Grid::new(
                nodes.clone(),
                vec![Line::new(0, 1, 0.0, 0.0), Line::new(1, 2, 1.0, 0.0)]
            ),
            Err(Error::NonPositiveSusceptance { .. })
        ));
        assert!(matches!(
            Grid::new(
                nodes,
                vec![Line::new(0, 1, 1.0, 0.0), Line::new(2, 2, 1.0, 0.0)]
            ),
            Err(Error::SelfLoop(2))
        ));
    }

    #[test]
    fn labels_put_zero_injection_first() {
        let grid = Grid::new(
            vec![
                Node::reference(0),
                Node::excited(1),
                Node::zero_injection(2),
                Node::excited(3),
            ],
            vec![
                Line::new(0, 1, 1.0, 0.0),
                Line::new(1, 2, 1.0, 0.0),
                Line::new(2, 3, 1.0, 0.0),
            ],
        )
        .unwrap();
        assert_eq!(grid.labels(), vec![2, 1, 3]);
        assert_eq!(
            grid.observable_edges().into_iter().collect::<Vec<_>>(),
            vec![Edge(1, 2), Edge(2, 3)]
        );
    }
}
