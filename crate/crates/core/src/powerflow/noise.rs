use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{stream_rng, SampleSet, NOISE_STREAM};
use crate::error::{Error, Result};

/// Independent Gaussian measurement noise whose per-node variance is `r`
/// times the variance of that node's clean samples. Phase and magnitude
/// channels share `r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub r: f64,
}

impl NoiseModel {
    pub fn new(r: f64) -> Result<Self> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "relative noise variance must be finite and >= 0, got {r}"
            )));
        }
        Ok(NoiseModel { r })
    }
}

/// Per-column variance with the mean removed, normalized by `T`.
pub(crate) fn column_variances(m: &DMatrix<f64>) -> Vec<f64> {
    let t = m.nrows() as f64;
    m.column_iter()
        .map(|c| {
            let mean = c.sum() / t;
            c.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / t
        })
        .collect()
}

fn perturb<R: Rng>(m: &mut DMatrix<f64>, r: f64, rng: &mut R) {
    let std: Vec<f64> = column_variances(m).iter().map(|v| (r * v).sqrt()).collect();
    for row in 0..m.nrows() {
        for (col, s) in std.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            m[(row, col)] += s * z;
        }
    }
}

pub fn add_noise(samples: &SampleSet, noise: &NoiseModel, seed: u64) -> Result<SampleSet> {
    let mut out = samples.clone();
    out.meta.noise = noise.r;
    if noise.r == 0.0 {
        return Ok(out);
    }
    let mut rng = stream_rng(seed, NOISE_STREAM);
    perturb(&mut out.theta, noise.r, &mut rng);
    if let Some(v) = out.v.as_mut() {
        perturb(v, noise.r, &mut rng);
    }
    Ok(out)
}

pub(crate) fn detrend_matrix(m: &mut DMatrix<f64>) {
    let t = m.nrows();
    let tf = t as f64;
    let mean_t = (tf - 1.0) / 2.0;
    let sxx: f64 = (0..t).map(|k| (k as f64 - mean_t).powi(2)).sum();
    for mut col in m.column_iter_mut() {
        let mean = col.sum() / tf;
        let sxy: f64 = col
            .iter()
            .enumerate()
            .map(|(k, y)| (k as f64 - mean_t) * (y - mean))
            .sum();
        let slope = sxy / sxx;
        for (k, y) in col.iter_mut().enumerate() {
            *y -= mean + slope * (k as f64 - mean_t);
        }
    }
}

/// Removes a least-squares linear trend in the sample index from every
/// column.
pub fn detrend(samples: &SampleSet) -> Result<SampleSet> {
    if samples.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: samples.len(),
        });
    }
    let mut out = samples.clone();
    detrend_matrix(&mut out.theta);
    if let Some(v) = out.v.as_mut() {
        detrend_matrix(v);
    }
    Ok(out)
}
