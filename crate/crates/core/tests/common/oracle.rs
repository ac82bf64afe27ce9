//! Brute-force minimizer of `x^T Q x - 2 c^T x + d` over
//! `{x >= 0, 1^T x <= 1}` for small dimensions.
//!
//! Every face of the feasible set is an index support `S` (coordinates
//! outside `S` are zero) with the sum constraint either slack or tight.
//! For positive definite `Q` the minimizer of the objective on the affine
//! hull of a face is unique, so the best feasible face minimizer is the
//! global one.

use nalgebra::{DMatrix, DVector};

pub fn value(q: &DMatrix<f64>, c: &DVector<f64>, d: f64, x: &DVector<f64>) -> f64 {
    x.dot(&(q * x)) - 2.0 * c.dot(x) + d
}

fn feasible(x: &DVector<f64>) -> bool {
    x.iter().all(|&v| v >= -1e-12) && x.sum() <= 1.0 + 1e-12
}

/// Minimizer on the face with support `support`, with or without the sum
/// constraint forced tight.
fn face_minimizer(q: &DMatrix<f64>, c: &DVector<f64>, support: &[usize], tight: bool) -> Option<DVector<f64>> {
    let k = support.len();
    let e = usize::from(tight);
    let mut m = DMatrix::zeros(k + e, k + e);
    let mut rhs = DVector::zeros(k + e);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            m[(a, b)] = q[(i, j)];
        }
        rhs[a] = c[i];
        if tight {
            // Stationarity: Q x - c + (lambda / 2) 1 = 0.
            m[(a, k)] = 1.0;
            m[(k, a)] = 1.0;
        }
    }
    if tight {
        rhs[k] = 1.0;
    }
    let sol = m.lu().solve(&rhs)?;
    let mut x = DVector::zeros(q.nrows());
    for (a, &i) in support.iter().enumerate() {
        x[i] = sol[a];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Global minimizer and value by face enumeration. `Q` must be positive
/// definite.
pub fn face_enumeration(q: &DMatrix<f64>, c: &DVector<f64>, d: f64) -> (DVector<f64>, f64) {
    let n = q.nrows();
    assert!(n <= 12, "face enumeration is exponential");
    let mut best = DVector::zeros(n);
    let mut best_value = value(q, c, d, &best);
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        for tight in [false, true] {
            if let Some(x) = face_minimizer(q, c, &support, tight) {
                if feasible(&x) {
                    let v = value(q, c, d, &x);
                    if v < best_value {
                        best_value = v;
                        best = x;
                    }
                }
            }
        }
    }
    (best, best_value)
}

/// Smallest objective over a uniform grid of spacing `h` on the feasible
/// set, for dimension one or two.
pub fn grid_search(q: &DMatrix<f64>, c: &DVector<f64>, d: f64, h: f64) -> (DVector<f64>, f64) {
    let n = q.nrows();
    assert!((1..=2).contains(&n));
    let steps = (1.0 / h).round() as usize;
    let mut best = (DVector::zeros(n), f64::INFINITY);
    let mut consider = |x: DVector<f64>| {
        let v = value(q, c, d, &x);
        if v < best.1 {
            best = (x, v);
        }
    };
    if n == 1 {
        for a in 0..=steps {
            consider(DVector::from_element(1, a as f64 * h));
        }
    } else {
        for a in 0..=steps {
            for b in 0..=steps - a {
                consider(DVector::from_vec(vec![a as f64 * h, b as f64 * h]));
            }
        }
    }
    best
}
