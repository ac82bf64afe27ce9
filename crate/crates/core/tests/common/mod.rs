#![allow(dead_code)]

pub mod oracle;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `A A^T` for a random `n x rank` factor, plus `ridge * I`.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize, rank: usize, ridge: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * ridge
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize, reach: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-reach..reach))
}
