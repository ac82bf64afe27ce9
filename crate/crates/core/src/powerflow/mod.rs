//! Sample generation: stochastic injections pushed through DC, linearized
//! coupled, or full AC power flow, then corrupted with measurement noise.

mod ac;
mod injections;
mod linear;
pub(crate) mod noise;
mod samples;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Grid;

pub use ac::{ac_pf, AcSolution, AcSolver};
pub use injections::{sample_injections, Correlation, InjectionModel, Injections, Reactive};
pub use linear::{dc_pf, lc_pf, DcSolver, LcSolver};
pub use noise::{add_noise, detrend, NoiseModel};
pub use samples::{read_samples, write_samples, SampleMeta, SampleSet};

/// Power-flow model used to turn injections into voltages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Model {
    /// `theta = H^{-1} p`.
    DcLinear,
    /// Newton AC power flow with conductances zeroed and `q = 0`.
    DcNonlinear,
    /// Linearized coupled magnitude/phase model.
    LcLinear,
    /// Newton AC power flow with full line admittances.
    AcNonlinear,
}

impl Model {
    pub const ALL: [Model; 4] = [
        Model::DcLinear,
        Model::DcNonlinear,
        Model::LcLinear,
        Model::AcNonlinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Model::DcLinear => "dc-linear",
            Model::DcNonlinear => "dc-nonlinear",
            Model::LcLinear => "lc-linear",
            Model::AcNonlinear => "ac-nonlinear",
        }
    }

    /// Whether samples carry voltage magnitudes.
    pub fn has_magnitudes(self) -> bool {
        matches!(self, Model::LcLinear | Model::AcNonlinear)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown power-flow model `{s}` (expected dc-linear, dc-nonlinear, lc-linear or ac-nonlinear)"
                ))
            })
    }
}

/// Seeded generator for one purpose of one trial. Distinct streams keep the
/// injection and noise draws independent for the same seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) const INJECTION_STREAM: u64 = 1;
pub(crate) const NOISE_STREAM: u64 = 2;

/// Voltage samples for the given injections under `model`.
///
/// For the nonlinear models each row is an independent Newton solve from a
/// flat start; the first failure aborts with its error.
pub fn simulate(grid: &Grid, model: Model, injections: &Injections) -> Result<SampleSet> {
    let labels = grid.labels();
    if injections.labels != labels {
        return Err(Error::Dimension(
            "injection columns do not follow the grid's node ordering".into(),
        ));
    }
    let t = injections.p.nrows();
    let (theta, v) = match model {
        Model::DcLinear => (DcSolver::new(grid)?.solve_rows(&injections.p), None),
        Model::LcLinear => {
            let (v, theta) = LcSolver::new(grid)?.solve_rows(&injections.p, &injections.q);
            (theta, Some(v))
        }
        Model::DcNonlinear | Model::AcNonlinear => {
            let lossless;
            let solver = if model == Model::DcNonlinear {
                lossless = grid.map_conductance(|_| 0.0)?;
                AcSolver::new(&lossless)
            } else {
                AcSolver::new(grid)
            };
            let n = labels.len();
            let mut theta = nalgebra::DMatrix::zeros(t, n);
            let mut v = nalgebra::DMatrix::zeros(t, n);
            let zero_q = nalgebra::DVector::zeros(n);
            for row in 0..t {
                let p = injections.p.row(row).transpose();
                let q = if model == Model::DcNonlinear {
                    zero_q.clone()
                } else {
                    injections.q.row(row).transpose()
                };
                let sol = solver.solve(&p, &q)?;
                theta.set_row(row, &sol.theta.transpose());
                v.set_row(row, &sol.v.map(|x| x - 1.0).transpose());
            }
            (theta, model.has_magnitudes().then_some(v))
        }
    };
    Ok(SampleSet {
        theta,
        v,
        labels,
        meta: SampleMeta {
            model: model.name().to_string(),
            seed: None,
            noise: 0.0,
        },
    })
}

/// Draws `t` injection rows with `seed`, simulates them, and adds noise
/// with fraction `noise` from an independent stream of the same seed.
pub fn generate_samples(
    grid: &Grid,
    model: Model,
    injection_model: &InjectionModel,
    t: usize,
    noise: f64,
    seed: u64,
) -> Result<SampleSet> {
    let inj = sample_injections(injection_model, t, seed)?;
    let mut samples = simulate(grid, model, &inj)?;
    samples.meta.seed = Some(seed);
    if noise > 0.0 {
        samples = add_noise(&samples, &NoiseModel::new(noise)?, seed)?;
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fixtures;

    #[test]
    fn model_names_round_trip() {
        for m in Model::ALL {
            assert_eq!(m.name().parse::<Model>().unwrap(), m);
        }
        assert!("dcpf".parse::<Model>().is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let g = fixtures::ieee33_radial();
        let inj = InjectionModel::gaussian(&g, 0.1);
        for model in Model::ALL {
            let a = generate_samples(&g, model, &inj, 20, 0.01, 9).unwrap();
            let b = generate_samples(&g, model, &inj, 20, 0.01, 9).unwrap();
            assert_eq!(a, b, "{model}");
            let c = generate_samples(&g, model, &inj, 20, 0.01, 10).unwrap();
            assert_ne!(a.theta, c.theta);
        }
    }
}
