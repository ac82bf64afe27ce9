//! Random grids that satisfy the structural assumptions, for property
//! tests and experiments.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{validate_assumptions, Grid, Line, Node, NodeId};

#[derive(Clone, Debug)]
pub struct RandomGridOptions {
    /// Number of non-reference nodes.
    pub nodes: usize,
    /// Lines added on top of the spanning tree, each closing a loop of
    /// length at least four.
    pub extra_lines: usize,
    pub beta_range: (f64, f64),
    /// Conductance as a multiple of susceptance.
    pub g_ratio: f64,
    /// Target fraction of non-reference nodes with zero injection.
    pub zero_fraction: f64,
}

impl Default for RandomGridOptions {
    fn default() -> Self {
        RandomGridOptions {
            nodes: 12,
            extra_lines: 0,
            beta_range: (0.5, 2.0),
            g_ratio: 0.0,
            zero_fraction: 0.25,
        }
    }
}

/// Random recursive tree plus `extra_lines` loop-closing lines, with a
/// random zero-injection set grown greedily while every structural check
/// keeps passing.
pub fn random_grid<R: Rng + ?Sized>(opts: &RandomGridOptions, rng: &mut R) -> Grid {
    let n = opts.nodes;
    let (lo, hi) = opts.beta_range;
    let mut edges: Vec<(NodeId, NodeId)> = (1..=n).map(|k| (rng.random_range(0..k), k)).collect();

    let mut attempts = 0;
    let mut added = 0;
    while added < opts.extra_lines && attempts < 200 * (opts.extra_lines + 1) {
        attempts += 1;
        let a = rng.random_range(0..=n);
        let b = rng.random_range(0..=n);
        if a == b {
            continue;
        }
        if hop_distance(n + 1, &edges, a, b) >= 3 {
            edges.push((a, b));
            added += 1;
        }
    }

    let lines: Vec<Line> = edges
        .iter()
        .map(|&(i, j)| {
            let beta = if hi > lo { rng.random_range(lo..hi) } else { lo };
            Line::new(i, j, beta, opts.g_ratio * beta)
        })
        .collect();
    let mut nodes = vec![Node::reference(0)];
    nodes.extend((1..=n).map(Node::excited));
    let mut grid = Grid::new(nodes, lines).expect("random grids are connected");

    // Extra lines can still combine into triangles; drop back to the tree
    // if that happened.
    if !validate_assumptions(&grid).girth_at_least_four() {
        let lines = grid
            .lines()
            .iter()
            .filter(|l| edges[..n].contains(&(l.i, l.j)) || edges[..n].contains(&(l.j, l.i)))
            .cloned()
            .collect();
        grid = Grid::new(grid.nodes().to_vec(), lines).expect("spanning tree is connected");
    }

    let target = (opts.zero_fraction * n as f64).round() as usize;
    let mut candidates: Vec<NodeId> = (1..=n).filter(|&k| grid.degree(k) >= 2).collect();
    candidates.shuffle(rng);
    let mut zero: Vec<NodeId> = Vec::new();
    for c in candidates {
        if zero.len() >= target {
            break;
        }
        if zero.iter().any(|&u| grid.has_edge(u, c)) {
            continue;
        }
        zero.push(c);
        let trial = grid.with_zero_injection(&zero).expect("valid node ids");
        if !validate_assumptions(&trial).all_pass() {
            zero.pop();
        }
    }
    grid.with_zero_injection(&zero).expect("valid node ids")
}

fn hop_distance(n: usize, edges: &[(NodeId, NodeId)], a: NodeId, b: NodeId) -> usize {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut dist = vec![usize::MAX; n];
    dist[a] = 0;
    let mut queue = VecDeque::from([a]);
    while let Some(u) = queue.pop_front() {
        if u == b {
            return dist[u];
        }
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    usize::MAX
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_grids_satisfy_assumptions() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 0..40 {
            let opts = RandomGridOptions {
                nodes: 6 + k % 30,
                extra_lines: k % 4,
                ..Default::default()
            };
            let g = random_grid(&opts, &mut rng);
            assert_eq!(g.size(), opts.nodes);
            assert!(validate_assumptions(&g).all_pass());
            assert!(g.lines().iter().all(|l| (0.5..2.0).contains(&l.beta)));
        }
    }
}
