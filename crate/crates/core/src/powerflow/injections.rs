use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{stream_rng, INJECTION_STREAM};
use crate::error::{Error, Result};
use crate::grid::{Grid, NodeId};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Correlation {
    Independent,
    /// Every excited node also receives `rho * sigma_i * z` for one shared
    /// standard normal `z` per sample.
    CommonFactor(f64),
}

/// How reactive fluctuations relate to active ones.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reactive {
    /// Independent fluctuations with standard deviation `kappa * sigma_i`.
    Independent(f64),
    /// Constant power factor, `q - base_q = kappa * (p - base_p)`.
    PowerFactor(f64),
}

impl Default for Reactive {
    fn default() -> Self {
        Reactive::Independent(0.3)
    }
}

/// Per-node stochastic injections, indexed like [`Grid::labels`].
#[derive(Clone, Debug, PartialEq)]
pub struct InjectionModel {
    pub labels: Vec<NodeId>,
    pub base_p: DVector<f64>,
    pub base_q: DVector<f64>,
    pub sigma: DVector<f64>,
    pub correlation: Correlation,
    pub reactive: Reactive,
}

impl InjectionModel {
    /// Validated model. Zero-injection nodes must have zero base and zero
    /// fluctuation.
    pub fn new(
        grid: &Grid,
        base_p: DVector<f64>,
        base_q: DVector<f64>,
        sigma: DVector<f64>,
        correlation: Correlation,
        reactive: Reactive,
    ) -> Result<Self> {
        let labels = grid.labels();
        let n = labels.len();
        if base_p.len() != n || base_q.len() != n || sigma.len() != n {
            return Err(Error::Dimension(format!(
                "injection vectors must have {n} entries"
            )));
        }
        if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument(
                "fluctuation standard deviations must be finite and >= 0".into(),
            ));
        }
        if let Correlation::CommonFactor(rho) = correlation {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::InvalidArgument(format!(
                    "common-factor weight {rho} outside [0, 1]"
                )));
            }
        }
        for (k, &id) in labels.iter().enumerate() {
            if grid.is_zero_injection(id) && (sigma[k] != 0.0 || base_p[k] != 0.0 || base_q[k] != 0.0)
            {
                return Err(Error::InvalidArgument(format!(
                    "zero-injection node {id} must have zero base and fluctuation"
                )));
            }
        }
        Ok(InjectionModel {
            labels,
            base_p,
            base_q,
            sigma,
            correlation,
            reactive,
        })
    }

    fn uniform(grid: &Grid, sigma: f64, correlation: Correlation) -> Self {
        let labels = grid.labels();
        let n = labels.len();
        let sigma = DVector::from_iterator(
            n,
            labels
                .iter()
                .map(|&id| if grid.is_zero_injection(id) { 0.0 } else { sigma }),
        );
        InjectionModel::new(
            grid,
            DVector::zeros(n),
            DVector::zeros(n),
            sigma,
            correlation,
            Reactive::default(),
        )
        .expect("uniform model is valid")
    }

    /// Zero-mean independent fluctuations of standard deviation `sigma` on
    /// every excited node.
    pub fn gaussian(grid: &Grid, sigma: f64) -> Self {
        Self::uniform(grid, sigma.abs(), Correlation::Independent)
    }

    pub fn common_factor(grid: &Grid, sigma: f64, rho: f64) -> Result<Self> {
        let mut m = Self::uniform(grid, sigma.abs(), Correlation::Independent);
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!(
                "common-factor weight {rho} outside [0, 1]"
            )));
        }
        m.correlation = Correlation::CommonFactor(rho);
        Ok(m)
    }

    pub fn with_reactive(mut self, reactive: Reactive) -> Self {
        self.reactive = reactive;
        self
    }

    /// Population covariance of the active injections.
    pub fn active_covariance(&self) -> DMatrix<f64> {
        let s = &self.sigma;
        let mut cov = DMatrix::from_diagonal(&s.component_mul(s));
        if let Correlation::CommonFactor(rho) = self.correlation {
            cov += s * s.transpose() * (rho * rho);
        }
        cov
    }

    /// Population covariance of the reactive injections.
    pub fn reactive_covariance(&self) -> DMatrix<f64> {
        // Both variants scale the active covariance; they differ only in
        // the cross-covariance between p and q.
        let (Reactive::Independent(kappa) | Reactive::PowerFactor(kappa)) = self.reactive;
        self.active_covariance() * (kappa * kappa)
    }
}

/// `T x N` active and reactive injection draws.
#[derive(Clone, Debug, PartialEq)]
pub struct Injections {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub labels: Vec<NodeId>,
}

/// Draws `t` i.i.d. injection rows. Same seed, same rows.
pub fn sample_injections(model: &InjectionModel, t: usize, seed: u64) -> Result<Injections> {
    if t == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let n = model.labels.len();
    let mut rng = stream_rng(seed, INJECTION_STREAM);
    let mut p = DMatrix::zeros(t, n);
    let mut q = DMatrix::zeros(t, n);
    let rho = match model.correlation {
        Correlation::Independent => 0.0,
        Correlation::CommonFactor(rho) => rho,
    };
    for row in 0..t {
        let shared_p: f64 = rng.sample(StandardNormal);
        let shared_q: f64 = rng.sample(StandardNormal);
        for k in 0..n {
            let xi: f64 = rng.sample(StandardNormal);
            let eta: f64 = rng.sample(StandardNormal);
            let s = model.sigma[k];
            let dp = s * (xi + rho * shared_p);
            let dq = match model.reactive {
                Reactive::Independent(kappa) => kappa * s * (eta + rho * shared_q),
                Reactive::PowerFactor(kappa) => kappa * dp,
            };
            p[(row, k)] = model.base_p[k] + dp;
            q[(row, k)] = model.base_q[k] + dq;
        }
    }
    Ok(Injections {
        p,
        q,
        labels: model.labels.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fixtures;

    #[test]
    fn zero_sigma_gives_zero_injections() {
        let g = fixtures::g3();
        let m = InjectionModel::gaussian(&g, 0.0);
        let inj = sample_injections(&m, 50, 3).unwrap();
        assert!(inj.p.iter().all(|&x| x == 0.0));
        assert!(inj.q.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_injection_columns_vanish() {
        let g = fixtures::ieee33_loopy();
        let m = InjectionModel::common_factor(&g, 0.1, 0.3).unwrap();
        let inj = sample_injections(&m, 200, 1).unwrap();
        for (k, &id) in inj.labels.iter().enumerate() {
            if g.is_zero_injection(id) {
                assert!(inj.p.column(k).iter().all(|&x| x == 0.0));
                assert!(inj.q.column(k).iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn independent_nodes_are_uncorrelated() {
        let g = fixtures::g2();
        let m = InjectionModel::gaussian(&g, 1.0);
        let t = 100_000;
        let inj = sample_injections(&m, t, 17).unwrap();
        let a = inj.p.column(0);
        let b = inj.p.column(1);
        let cov = a.dot(&b) / t as f64;
        // Standard error of the product of two unit normals is 1/sqrt(T).
        assert!(cov.abs() < 3.0 / (t as f64).sqrt(), "{cov}");
        let pq = a.dot(&inj.q.column(0)) / t as f64;
        assert!(pq.abs() < 3.0 * 0.3 / (t as f64).sqrt(), "{pq}");
    }

    #[test]
    fn common_factor_covariance_matches_model() {
        let g = fixtures::g2();
        let m = InjectionModel::common_factor(&g, 1.0, 0.5).unwrap();
        let t = 100_000;
        let inj = sample_injections(&m, t, 4).unwrap();
        let cov = inj.p.column(0).dot(&inj.p.column(1)) / t as f64;
        let expected = m.active_covariance()[(0, 1)];
        assert!((expected - 0.25).abs() < 1e-15);
        assert!((cov - expected).abs() < 4.0 * 1.1 / (t as f64).sqrt(), "{cov}");
    }

    #[test]
    fn rejects_excitation_on_zero_injection_nodes() {
        let g = fixtures::g3();
        let sigma = DVector::from_element(3, 1.0);
        let z = DVector::zeros(3);
        assert!(InjectionModel::new(
            &g,
            z.clone(),
            z,
            sigma,
            Correlation::Independent,
            Reactive::default()
        )
        .is_err());
        assert!(sample_injections(&InjectionModel::gaussian(&g, 1.0), 0, 1).is_err());
    }
}
