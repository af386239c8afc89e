use rand::Rng;
use rand_distr::{Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use super::{normal_log_density, positive, Model};
use crate::error::{invalid, Error, Result};
use crate::scalar::{cast, Real};
use crate::streams::Stream;

/// `beta ~ IG(a, b)`, `mu_k ~ N(0, s^2)`, `y_k^j ~ N(mu_k, beta)` with `beta`
/// the variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHierarchy {
    pub a: f64,
    pub b: f64,
    pub s: f64,
    pub n: usize,
    gamma: Gamma<f64>,
}

impl Default for GaussianHierarchy {
    fn default() -> Self {
        Self::new(2.0, 2.0, 2.0, 10).expect("default hyperparameters are valid")
    }
}

impl GaussianHierarchy {
    pub fn new(a: f64, b: f64, s: f64, n: usize) -> Result<Self> {
        positive("a", a)?;
        positive("b", b)?;
        positive("s", s)?;
        if n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        let gamma = Gamma::new(a, 1.0 / b).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self { a, b, s, n, gamma })
    }
}

impl<T: Real> Model<T> for GaussianHierarchy {
    fn name(&self) -> &str {
        "gaussian-hierarchy"
    }

    fn global_names(&self) -> Vec<String> {
        vec!["beta".into()]
    }

    fn local_names(&self) -> Vec<String> {
        vec!["mu".into()]
    }

    fn obs_len(&self) -> usize {
        self.n
    }

    fn sample_global(&self, rng: &mut Stream) -> Vec<T> {
        vec![cast(1.0 / rng.sample(self.gamma))]
    }

    fn sample_local(&self, rng: &mut Stream) -> Vec<T> {
        let z: f64 = rng.sample(StandardNormal);
        vec![cast(self.s * z)]
    }

    fn log_prior_global(&self, global: &[T]) -> f64 {
        let x = global[0].widen();
        if x <= 0.0 || !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        self.a * self.b.ln() - ln_gamma(self.a) - (self.a + 1.0) * x.ln() - self.b / x
    }

    fn log_prior_local(&self, local: &[T]) -> f64 {
        normal_log_density(local[0].widen(), 0.0, self.s * self.s)
    }

    fn simulate_compartment(&self, global: &[T], local: &[T], rng: &mut Stream) -> Result<Vec<T>> {
        let var = global[0].widen();
        if !(var > 0.0 && var.is_finite()) {
            return Err(Error::SimulationFailure(format!("variance must be positive, got {var}")));
        }
        let (mu, sd) = (local[0].widen(), var.sqrt());
        Ok((0..self.n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                cast(mu + sd * z)
            })
            .collect())
    }

    fn hyperparameters(&self) -> Vec<(String, f64)> {
        vec![("a".into(), self.a), ("b".into(), self.b), ("s".into(), self.s), ("n".into(), self.n as f64)]
    }

    fn global_prior_cdf(&self, _coord: usize, x: f64) -> Option<f64> {
        Some(if x <= 0.0 { 0.0 } else { gamma_ur(self.a, self.b / x) })
    }

    fn local_prior_cdf(&self, _coord: usize, x: f64) -> Option<f64> {
        Normal::new(0.0, self.s).ok().map(|d| d.cdf(x))
    }

    fn local_prior_quantile(&self, _coord: usize, p: f64) -> Option<f64> {
        Normal::new(0.0, self.s).ok().map(|d| d.inverse_cdf(p))
    }
}
