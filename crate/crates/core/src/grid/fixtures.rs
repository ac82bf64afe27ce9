//! Fixture grids used by tests, examples, and the experiment harness.
//!
//! The 33-bus feeders use the Baran & Wu branch data converted to per-unit
//! on a 12.66 kV / 1 MVA base. With this base an injection fluctuation of
//! 0.1 per unit is 100 kW, comparable to the feeder's average bus load, and
//! keeps phase angles small enough for the linear models to be accurate. Bus `k` of the published data is node
//! `k - 1` here, so the substation (bus 1) is the reference node 0.
//! Susceptance and conductance are the imaginary and real parts of the
//! line admittance, `beta = x / (r^2 + x^2)` and `g = r / (r^2 + x^2)`.
//!
//! The zero-injection sets of the 33-bus fixtures are representative
//! choices that satisfy the structural assumptions, not replicas of any
//! published figure: buses are spaced along each lateral so that no two are
//! adjacent, none is a terminal bus, and none touches the substation.

use super::{Grid, Line, Node, NodeId};

const BASE_KV: f64 = 12.66;
const BASE_MVA: f64 = 1.0;

/// (from bus, to bus, r ohm, x ohm), 1-based bus numbers.
const RADIAL_BRANCHES: [(usize, usize, f64, f64); 32] = [
    (1, 2, 0.0922, 0.0470),
    (2, 3, 0.4930, 0.2511),
    (3, 4, 0.3660, 0.1864),
    (4, 5, 0.3811, 0.1941),
    (5, 6, 0.8190, 0.7070),
    (6, 7, 0.1872, 0.6188),
    (7, 8, 0.7114, 0.2351),
    (8, 9, 1.0300, 0.7400),
    (9, 10, 1.0440, 0.7400),
    (10, 11, 0.1966, 0.0650),
    (11, 12, 0.3744, 0.1238),
    (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129),
    (14, 15, 0.5910, 0.5260),
    (15, 16, 0.7463, 0.5450),
    (16, 17, 1.2890, 1.7210),
    (17, 18, 0.7320, 0.5740),
    (2, 19, 0.1640, 0.1565),
    (19, 20, 1.5042, 1.3554),
    (20, 21, 0.4095, 0.4784),
    (21, 22, 0.7089, 0.9373),
    (3, 23, 0.4512, 0.3083),
    (23, 24, 0.8980, 0.7091),
    (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034),
    (26, 27, 0.2842, 0.1447),
    (27, 28, 1.0590, 0.9337),
    (28, 29, 0.8042, 0.7006),
    (29, 30, 0.5075, 0.2585),
    (30, 31, 0.9744, 0.9630),
    (31, 32, 0.3105, 0.3619),
    (32, 33, 0.3410, 0.5302),
];

/// Normally-open tie switches of the 33-bus system.
const TIE_BRANCHES: [(usize, usize, f64, f64); 5] = [
    (8, 21, 2.0, 2.0),
    (9, 15, 2.0, 2.0),
    (12, 22, 2.0, 2.0),
    (18, 33, 0.5, 0.5),
    (25, 29, 0.5, 0.5),
];

/// Zero-injection buses (1-based) for the radial feeder: every third bus
/// along the trunk and one or two per lateral.
const RADIAL_ZERO_BUSES: [usize; 9] = [4, 7, 10, 13, 16, 20, 24, 27, 30];

/// Zero-injection buses (1-based) for the meshed feeder. Buses 18 and 21
/// become internal once the tie lines close.
const LOOPY_ZERO_BUSES: [usize; 8] = [4, 7, 11, 14, 18, 21, 24, 30];

fn build(n: usize, zero: &[NodeId], lines: Vec<Line>) -> Grid {
    let nodes = (0..n)
        .map(|id| {
            if id == 0 {
                Node::reference(0)
            } else if zero.contains(&id) {
                Node::zero_injection(id)
            } else {
                Node::excited(id)
            }
        })
        .collect();
    Grid::new(nodes, lines).expect("fixture grids are valid")
}

fn unit_lines(edges: &[(NodeId, NodeId)]) -> Vec<Line> {
    edges.iter().map(|&(i, j)| Line::new(i, j, 1.0, 0.0)).collect()
}

fn per_unit_line(from: usize, to: usize, r_ohm: f64, x_ohm: f64) -> Line {
    let z_base = BASE_KV * BASE_KV / BASE_MVA;
    let (r, x) = (r_ohm / z_base, x_ohm / z_base);
    let m = r * r + x * x;
    Line::new(from - 1, to - 1, x / m, r / m)
}

/// Path 0-1-2 with unit susceptances, every node excited.
pub fn g2() -> Grid {
    build(3, &[], unit_lines(&[(0, 1), (1, 2)]))
}

/// Path 0-1-2-3 with unit susceptances and node 2 zero-injection.
pub fn g3() -> Grid {
    build(4, &[2], unit_lines(&[(0, 1), (1, 2), (2, 3)]))
}

/// Zero-injection center 1 tied to the reference (beta 1) and to excited
/// leaves 2, 3, 4 (beta 2, 3, 4).
pub fn gstar() -> Grid {
    build(
        5,
        &[1],
        vec![
            Line::new(0, 1, 1.0, 0.0),
            Line::new(1, 2, 2.0, 0.0),
            Line::new(1, 3, 3.0, 0.0),
            Line::new(1, 4, 4.0, 0.0),
        ],
    )
}

pub fn ieee33_radial() -> Grid {
    let lines = RADIAL_BRANCHES
        .iter()
        .map(|&(f, t, r, x)| per_unit_line(f, t, r, x))
        .collect();
    let zero: Vec<NodeId> = RADIAL_ZERO_BUSES.iter().map(|b| b - 1).collect();
    build(33, &zero, lines)
}

pub fn ieee33_loopy() -> Grid {
    let lines = RADIAL_BRANCHES
        .iter()
        .chain(TIE_BRANCHES.iter())
        .map(|&(f, t, r, x)| per_unit_line(f, t, r, x))
        .collect();
    let zero: Vec<NodeId> = LOOPY_ZERO_BUSES.iter().map(|b| b - 1).collect();
    build(33, &zero, lines)
}

/// Grid with adjacent zero-injection pairs (6, 7) and (10, 11).
///
/// Nodes 10 and 11 hang off excited node 9 as a triangle, so a combination
/// of their balance equations expresses node 9's phase exactly and node 9
/// looks zero-injection to the unconstrained regression. Zero-injection
/// nodes 2 and 4 share neighbors 3 and 5.
pub fn adjacent_zero_injection() -> Grid {
    build(
        12,
        &[2, 4, 6, 7, 10, 11],
        vec![
            Line::new(0, 1, 1.0, 0.0),
            Line::new(1, 2, 1.5, 0.0),
            Line::new(2, 3, 1.0, 0.0),
            Line::new(2, 5, 2.0, 0.0),
            Line::new(3, 4, 1.0, 0.0),
            Line::new(4, 5, 1.0, 0.0),
            Line::new(5, 6, 1.0, 0.0),
            Line::new(6, 7, 2.0, 0.0),
            Line::new(7, 8, 1.0, 0.0),
            Line::new(7, 9, 1.5, 0.0),
            Line::new(9, 10, 1.0, 0.0),
            Line::new(9, 11, 2.0, 0.0),
            Line::new(10, 11, 1.0, 0.0),
        ],
    )
}

/// Non-adjacent zero-injection nodes 2 and 4 where every neighbor of 4 is a
/// neighbor of 2 (a 4-cycle 2-3-4-5). The unconstrained regression for 2
/// has a whole family of zero-cost solutions.
pub fn nested_neighborhoods() -> Grid {
    build(
        7,
        &[2, 4],
        vec![
            Line::new(0, 1, 1.0, 0.0),
            Line::new(1, 2, 1.0, 0.0),
            Line::new(2, 3, 2.0, 0.0),
            Line::new(2, 5, 1.5, 0.0),
            Line::new(3, 4, 1.0, 0.0),
            Line::new(4, 5, 1.0, 0.0),
            Line::new(5, 6, 1.0, 0.0),
        ],
    )
}

/// Looks up a fixture by name (`g2`, `g3`, `gstar`, `ieee33-radial`,
/// `ieee33-loopy`).
pub fn by_name(name: &str) -> Option<Grid> {
    match name.to_ascii_lowercase().replace('_', "-").as_str() {
        "g2" => Some(g2()),
        "g3" => Some(g3()),
        "gstar" => Some(gstar()),
        "ieee33-radial" | "ieee33" => Some(ieee33_radial()),
        "ieee33-loopy" => Some(ieee33_loopy()),
        _ => None,
    }
}

pub const NAMES: [&str; 5] = ["g2", "g3", "gstar", "ieee33-radial", "ieee33-loopy"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ieee33_radial_shape() {
        let g = ieee33_radial();
        assert_eq!(g.size(), 32);
        assert_eq!(g.lines().len(), 32);
        assert_eq!(g.zero_injection().len(), 9);
        assert!(g.zero_injection().iter().all(|&u| !g.has_edge(u, 0)));
    }

    #[test]
    fn ieee33_loopy_shape() {
        let g = ieee33_loopy();
        assert_eq!(g.size(), 32);
        assert_eq!(g.lines().len(), 37);
        assert_eq!(g.zero_injection().len(), 8);
    }

    #[test]
    fn small_fixtures() {
        assert_eq!(g3().zero_injection(), vec![2]);
        assert!(g2().zero_injection().is_empty());
        assert_eq!(gstar().degree(1), 4);
        for name in NAMES {
            assert!(by_name(name).is_some());
        }
    }

    #[test]
    fn per_unit_conversion() {
        let l = per_unit_line(1, 2, 0.0922, 0.0470);
        let z_base = 12.66 * 12.66 / 1.0;
        let (r, x) = (0.0922 / z_base, 0.0470 / z_base);
        assert!((l.beta - x / (r * r + x * x)).abs() < 1e-9);
        assert!((l.g - r / (r * r + x * x)).abs() < 1e-9);
        assert_eq!((l.i, l.j), (0, 1));
    }
}
