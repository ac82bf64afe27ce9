//! Accelerated projected gradient over products of boxes with a sum rule,
//! followed by an exact solve on the detected active set.

use nalgebra::{DMatrix, DVector};

use super::QuadraticObjective;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SumRule {
    None,
    AtMost(f64),
    Equal(f64),
}

/// Consecutive coordinates `start..start + len` with common bounds and a
/// rule on their sum.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub start: usize,
    pub len: usize,
    pub lower: f64,
    pub upper: f64,
    pub sum: SumRule,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibleSet {
    pub blocks: Vec<Block>,
}

impl FeasibleSet {
    /// `{x >= 0, 1^T x <= 1}` in `n` dimensions.
    pub fn clipped_simplex(n: usize) -> Self {
        FeasibleSet {
            blocks: vec![Block {
                start: 0,
                len: n,
                lower: 0.0,
                upper: f64::INFINITY,
                sum: SumRule::AtMost(1.0),
            }],
        }
    }

    /// Real and imaginary coefficient blocks of the complex regression:
    /// `Re x >= 0, 1^T Re x <= 1, -1 <= Im x <= 1, 1^T Im x = 0`.
    pub fn complex_regression(n: usize) -> Self {
        FeasibleSet {
            blocks: vec![
                Block {
                    start: 0,
                    len: n,
                    lower: 0.0,
                    upper: f64::INFINITY,
                    sum: SumRule::AtMost(1.0),
                },
                Block {
                    start: n,
                    len: n,
                    lower: -1.0,
                    upper: 1.0,
                    sum: SumRule::Equal(0.0),
                },
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.start + b.len).max().unwrap_or(0)
    }

    pub fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = z.clone();
        for b in &self.blocks {
            let seg: Vec<f64> = z.rows(b.start, b.len).iter().copied().collect();
            let p = project_block(&seg, b.lower, b.upper, b.sum);
            for (k, v) in p.into_iter().enumerate() {
                out[b.start + k] = v;
            }
        }
        out
    }

    /// Largest violation of any bound or sum rule.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst = 0.0f64;
        for b in &self.blocks {
            let seg = x.rows(b.start, b.len);
            for &v in seg.iter() {
                worst = worst.max(b.lower - v).max(v - b.upper);
            }
            let s = seg.sum();
            match b.sum {
                SumRule::None => {}
                SumRule::AtMost(c) => worst = worst.max(s - c),
                SumRule::Equal(c) => worst = worst.max((s - c).abs()),
            }
        }
        worst
    }
}

fn clipped_sum(z: &[f64], lo: f64, hi: f64, tau: f64) -> f64 {
    z.iter().map(|&v| (v - tau).clamp(lo, hi)).sum()
}

/// Euclidean projection of `z` onto `{lo <= x <= hi, rule(1^T x)}`.
///
/// The projection is `clamp(z - tau)` for a scalar shift `tau` that makes
/// the sum rule hold; `tau` is bracketed by bisection and then computed
/// exactly from the coordinates left strictly inside the box.
fn project_block(z: &[f64], lo: f64, hi: f64, rule: SumRule) -> Vec<f64> {
    let clip = |tau: f64| -> Vec<f64> { z.iter().map(|&v| (v - tau).clamp(lo, hi)).collect() };
    let target = match rule {
        SumRule::None => return clip(0.0),
        SumRule::AtMost(c) => {
            if clipped_sum(z, lo, hi, 0.0) <= c {
                return clip(0.0);
            }
            c
        }
        SumRule::Equal(c) => c,
    };
    if z.is_empty() {
        return Vec::new();
    }
    // The clipped sum is non-increasing in tau; bracket the target.
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let zmin = z.iter().copied().fold(f64::INFINITY, f64::min);
    let span = 1.0 + (zmax - zmin) + target.abs() + zmax.abs() + zmin.abs();
    let mut width = span;
    let mut a = zmin - span;
    while clipped_sum(z, lo, hi, a) < target && width < 1e300 {
        a -= width;
        width *= 2.0;
    }
    let mut width = span;
    let mut b = zmax + span;
    while clipped_sum(z, lo, hi, b) > target && width < 1e300 {
        b += width;
        width *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if clipped_sum(z, lo, hi, mid) > target {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= 1e-15 * span {
            break;
        }
    }
    let tau = 0.5 * (a + b);
    // Exact shift from the free coordinates at this tau.
    let mut fixed_sum = 0.0;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for &v in z {
        let s = v - tau;
        if s <= lo {
            fixed_sum += lo;
        } else if s >= hi {
            fixed_sum += hi;
        } else {
            free_sum += v;
            free += 1;
        }
    }
    let tau = if free > 0 {
        let exact = (free_sum - (target - fixed_sum)) / free as f64;
        // Accept only if the free set is unchanged.
        if z.iter().all(|&v| {
            let before = v - tau;
            let after = v - exact;
            (before <= lo) == (after <= lo) && (before >= hi) == (after >= hi)
        }) {
            exact
        } else {
            tau
        }
    } else {
        tau
    };
    clip(tau)
}

/// Euclidean projection onto `{x >= 0, 1^T x <= 1}`.
pub fn project_clipped_simplex(z: &DVector<f64>) -> DVector<f64> {
    FeasibleSet::clipped_simplex(z.len()).project(z)
}

pub(crate) struct ApgResult {
    pub x: DVector<f64>,
    pub iterations: usize,
}

/// Projected-gradient residual `||x - P(x - grad/L)|| * L`, normalized by
/// the objective's scale.
pub(crate) fn pg_residual(obj: &QuadraticObjective, set: &FeasibleSet, x: &DVector<f64>, lip: f64) -> f64 {
    let grad = obj.gradient(x);
    let step = set.project(&(x - &grad / lip));
    (x - step).amax() * lip
}

pub(crate) fn accelerated_projected_gradient(
    obj: &QuadraticObjective,
    set: &FeasibleSet,
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> ApgResult {
    let lip = 2.0 * obj.q.clone().symmetric_eigen().eigenvalues.max().max(1e-300);
    let mut x = set.project(x0);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut fx = obj.value(&x);
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let grad = obj.gradient(&y);
        let x_next = set.project(&(&y - &grad / lip));
        let f_next = obj.value(&x_next);
        if f_next > fx {
            // Adaptive restart: drop momentum.
            y = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &x_next + (&x_next - &x) * ((t - 1.0) / t_next);
        let moved = (&x_next - &x).amax();
        x = x_next;
        fx = f_next;
        t = t_next;
        if moved * lip <= tol && pg_residual(obj, set, &x, lip) <= tol {
            break;
        }
    }
    ApgResult { x, iterations }
}

/// Solves the equality-constrained problem obtained by fixing the
/// coordinates at bounds and treating tight sum rules as equalities.
/// Returns the candidate if it is feasible.
pub(crate) fn polish(obj: &QuadraticObjective, set: &FeasibleSet, x: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    let n = x.len();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    let mut equalities: Vec<(Vec<usize>, f64)> = Vec::new();
    for b in &set.blocks {
        let idx: Vec<usize> = (b.start..b.start + b.len).collect();
        for &i in &idx {
            if (x[i] - b.lower).abs() <= tol {
                fixed[i] = Some(b.lower);
            } else if (x[i] - b.upper).abs() <= tol {
                fixed[i] = Some(b.upper);
            }
        }
        let s: f64 = idx.iter().map(|&i| x[i]).sum();
        match b.sum {
            SumRule::None => {}
            SumRule::AtMost(c) if (s - c).abs() <= tol * b.len.max(1) as f64 => {
                equalities.push((idx, c))
            }
            SumRule::AtMost(_) => {}
            SumRule::Equal(c) => equalities.push((idx, c)),
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    let mut candidate = DVector::from_fn(n, |i, _| fixed[i].unwrap_or(0.0));
    if free.is_empty() {
        return (set.violation(&candidate) <= 1e-10).then_some(candidate);
    }
    let k = free.len();
    let e = equalities.len();
    let mut m = DMatrix::zeros(k + e, k + e);
    let mut rhs = DVector::zeros(k + e);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            m[(a, b)] = obj.q[(i, j)];
        }
        let mut r = obj.c[i];
        for j in 0..n {
            if let Some(v) = fixed[j] {
                r -= obj.q[(i, j)] * v;
            }
        }
        rhs[a] = r;
    }
    for (row, (idx, c)) in equalities.iter().enumerate() {
        let mut r = *c;
        for &i in idx {
            match fixed[i] {
                Some(v) => r -= v,
                None => {
                    let a = free.iter().position(|&f| f == i).unwrap();
                    m[(k + row, a)] = 1.0;
                    m[(a, k + row)] = 1.0;
                }
            }
        }
        rhs[k + row] = r;
    }
    let sol = m.svd(true, true).solve(&rhs, 1e-12).ok()?;
    for (a, &i) in free.iter().enumerate() {
        candidate[i] = sol[a];
    }
    if !candidate.iter().all(|v| v.is_finite()) {
        return None;
    }
    (set.violation(&candidate) <= 1e-10).then(|| {
        // Snap tiny violations back inside.
        set.project(&candidate)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    #[test]
    fn clipped_simplex_examples() {
        assert_eq!(project_clipped_simplex(&dvector![0.2, 0.3]), dvector![0.2, 0.3]);
        let p = project_clipped_simplex(&dvector![0.6, 0.8]);
        assert!((p - dvector![0.4, 0.6]).amax() < 1e-15);
        assert_eq!(project_clipped_simplex(&dvector![-1.0, -1.0]), dvector![0.0, 0.0]);
    }

    #[test]
    fn equality_block_projection() {
        let set = FeasibleSet::complex_regression(3);
        let p = set.project(&dvector![0.0, 0.0, 0.0, 3.0, 0.5, 0.2]);
        assert!(set.violation(&p) < 1e-14);
        assert!((p[3] - 1.0).abs() < 1e-15);
        assert!((p.rows(3, 3).sum()).abs() < 1e-14);
    }

    proptest! {
        /// Projection is idempotent, feasible, and no farther than any
        /// feasible point sampled nearby (variational inequality).
        #[test]
        fn projection_is_a_projection(z in proptest::collection::vec(-3.0f64..3.0, 1..8),
                                      w in proptest::collection::vec(-1.0f64..1.0, 8)) {
            let n = z.len();
            for set in [FeasibleSet::clipped_simplex(n), FeasibleSet::complex_regression(n)] {
                let m = set.dim();
                let zz = DVector::from_fn(m, |i, _| z[i % n] * if i >= n { 0.7 } else { 1.0 });
                let p = set.project(&zz);
                prop_assert!(set.violation(&p) <= 1e-12);
                prop_assert!((set.project(&p) - &p).amax() <= 1e-12);
                let y = set.project(&DVector::from_fn(m, |i, _| w[i % 8]));
                // <z - p, y - p> <= 0 for every feasible y.
                prop_assert!((&zz - &p).dot(&(y - &p)) <= 1e-10);
            }
        }
    }
}
