use rand::Rng;

use super::{interval, positive, uniform_log_density, Model, TruePosterior};
use crate::distance::ObservedData;
use crate::error::{invalid, Result};
use crate::scalar::{cast, Real};
use crate::streams::Stream;

/// `mu_k ~ U(lower, upper)`, `y_k^j ~ U(mu_k - h, mu_k + h)`; no global block.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformToy {
    pub lower: f64,
    pub upper: f64,
    pub half_width: f64,
    pub n: usize,
}

impl Default for UniformToy {
    fn default() -> Self {
        Self { lower: -2.0, upper: 2.0, half_width: 1.0, n: 1 }
    }
}

impl UniformToy {
    pub fn new(lower: f64, upper: f64, half_width: f64, n: usize) -> Result<Self> {
        interval("prior", lower, upper)?;
        positive("half_width", half_width)?;
        if n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        Ok(Self { lower, upper, half_width, n })
    }
}

impl<T: Real> Model<T> for UniformToy {
    fn name(&self) -> &str {
        "uniform-toy"
    }

    fn global_names(&self) -> Vec<String> {
        Vec::new()
    }

    fn local_names(&self) -> Vec<String> {
        vec!["mu".into()]
    }

    fn obs_len(&self) -> usize {
        self.n
    }

    fn sample_global(&self, _rng: &mut Stream) -> Vec<T> {
        Vec::new()
    }

    fn sample_local(&self, rng: &mut Stream) -> Vec<T> {
        vec![cast(rng.random_range(self.lower..self.upper))]
    }

    fn log_prior_global(&self, _global: &[T]) -> f64 {
        0.0
    }

    fn log_prior_local(&self, local: &[T]) -> f64 {
        uniform_log_density(local[0].widen(), self.lower, self.upper)
    }

    fn simulate_compartment(&self, _global: &[T], local: &[T], rng: &mut Stream) -> Result<Vec<T>> {
        let mu = local[0].widen();
        Ok((0..self.n).map(|_| cast(rng.random_range(mu - self.half_width..mu + self.half_width))).collect())
    }

    fn hyperparameters(&self) -> Vec<(String, f64)> {
        vec![
            ("lower".into(), self.lower),
            ("upper".into(), self.upper),
            ("half_width".into(), self.half_width),
            ("n".into(), self.n as f64),
        ]
    }

    /// Exact posterior: prior box intersected with the likelihood support.
    fn true_posterior(&self, y: &ObservedData<T>) -> Result<TruePosterior> {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for c in y.compartments() {
            let hi_obs = c.iter().map(|v| v.widen()).fold(f64::NEG_INFINITY, f64::max);
            let lo_obs = c.iter().map(|v| v.widen()).fold(f64::INFINITY, f64::min);
            let lo = (hi_obs - self.half_width).max(self.lower);
            let hi = (lo_obs + self.half_width).min(self.upper);
            if lo >= hi {
                return Err(invalid("observed data lie outside the prior predictive support"));
            }
            lower.push(vec![lo]);
            upper.push(vec![hi]);
        }
        Ok(TruePosterior::Box { lower, upper })
    }

    fn local_prior_cdf(&self, _coord: usize, x: f64) -> Option<f64> {
        Some(((x - self.lower) / (self.upper - self.lower)).clamp(0.0, 1.0))
    }

    fn local_prior_quantile(&self, _coord: usize, p: f64) -> Option<f64> {
        Some(self.lower + p * (self.upper - self.lower))
    }
}
