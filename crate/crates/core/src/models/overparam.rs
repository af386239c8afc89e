use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{normal_log_density, positive, Model, TruePosterior};
use crate::distance::ObservedData;
use crate::error::{invalid, Result};
use crate::scalar::{cast, Real};
use crate::streams::Stream;

/// `beta ~ N(0, sb^2)`, `mu_k ~ N(0, sm^2)`, `y_k^j ~ N(mu_k + beta, noise^2)`.
///
/// Only `mu_k + beta` is identified, so the posterior sits on a ridge.
#[derive(Debug, Clone, PartialEq)]
pub struct OverParameterized {
    pub global_sd: f64,
    pub local_sd: f64,
    pub noise_sd: f64,
    pub n: usize,
}

impl Default for OverParameterized {
    fn default() -> Self {
        Self { global_sd: 10.0, local_sd: 10.0, noise_sd: 1.0, n: 1 }
    }
}

impl OverParameterized {
    pub fn new(global_sd: f64, local_sd: f64, noise_sd: f64, n: usize) -> Result<Self> {
        positive("global_sd", global_sd)?;
        positive("local_sd", local_sd)?;
        positive("noise_sd", noise_sd)?;
        if n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        Ok(Self { global_sd, local_sd, noise_sd, n })
    }
}

impl<T: Real> Model<T> for OverParameterized {
    fn name(&self) -> &str {
        "over-parameterized"
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
        let z: f64 = rng.sample(StandardNormal);
        vec![cast(self.global_sd * z)]
    }

    fn sample_local(&self, rng: &mut Stream) -> Vec<T> {
        let z: f64 = rng.sample(StandardNormal);
        vec![cast(self.local_sd * z)]
    }

    fn log_prior_global(&self, global: &[T]) -> f64 {
        normal_log_density(global[0].widen(), 0.0, self.global_sd * self.global_sd)
    }

    fn log_prior_local(&self, local: &[T]) -> f64 {
        normal_log_density(local[0].widen(), 0.0, self.local_sd * self.local_sd)
    }

    fn simulate_compartment(&self, global: &[T], local: &[T], rng: &mut Stream) -> Result<Vec<T>> {
        let m = global[0].widen() + local[0].widen();
        Ok((0..self.n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                cast(m + self.noise_sd * z)
            })
            .collect())
    }

    fn hyperparameters(&self) -> Vec<(String, f64)> {
        vec![
            ("global_sd".into(), self.global_sd),
            ("local_sd".into(), self.local_sd),
            ("noise_sd".into(), self.noise_sd),
            ("n".into(), self.n as f64),
        ]
    }

    /// Conjugate Gaussian posterior over `(beta, mu_1, ..., mu_K)` for unit
    /// weights (weights do not enter the likelihood).
    fn true_posterior(&self, y: &ObservedData<T>) -> Result<TruePosterior> {
        let k = y.num_compartments();
        let d = k + 1;
        let noise_prec = 1.0 / (self.noise_sd * self.noise_sd);
        let mut prec = DMatrix::<f64>::zeros(d, d);
        let mut rhs = DVector::<f64>::zeros(d);
        prec[(0, 0)] = 1.0 / (self.global_sd * self.global_sd);
        for i in 1..d {
            prec[(i, i)] = 1.0 / (self.local_sd * self.local_sd);
        }
        for (slot, c) in y.compartments().iter().enumerate() {
            let i = slot + 1;
            let n = c.len() as f64;
            let sum: f64 = c.iter().map(|v| v.widen()).sum();
            prec[(0, 0)] += n * noise_prec;
            prec[(i, i)] += n * noise_prec;
            prec[(0, i)] += n * noise_prec;
            prec[(i, 0)] += n * noise_prec;
            rhs[0] += sum * noise_prec;
            rhs[i] += sum * noise_prec;
        }
        let chol = prec.cholesky().ok_or_else(|| invalid("posterior precision is not positive definite"))?;
        let cov = chol.inverse();
        let mean = &cov * rhs;
        Ok(TruePosterior::Gaussian { mean, cov, global_dim: 1, local_dim: 1 })
    }

    fn global_prior_cdf(&self, _coord: usize, x: f64) -> Option<f64> {
        Normal::new(0.0, self.global_sd).ok().map(|d| d.cdf(x))
    }

    fn local_prior_cdf(&self, _coord: usize, x: f64) -> Option<f64> {
        Normal::new(0.0, self.local_sd).ok().map(|d| d.cdf(x))
    }

    fn local_prior_quantile(&self, _coord: usize, p: f64) -> Option<f64> {
        Normal::new(0.0, self.local_sd).ok().map(|d| d.inverse_cdf(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Coordinate;

    #[test]
    fn single_observation_posterior() {
        let model = OverParameterized::default();
        let y = ObservedData::with_unit_weights(vec![vec![0.0]]).unwrap();
        let post = Model::<f64>::true_posterior(&model, &y).unwrap();
        let (b, m) = (Coordinate::Global(0), Coordinate::Local { slot: 0, coord: 0 });
        assert!(post.marginal_mean(b).unwrap().abs() < 1e-12);
        assert!(post.marginal_mean(m).unwrap().abs() < 1e-12);
        // sum has prior variance 200 and unit noise
        let v = post.combination_variance(&[(b, 1.0), (m, 1.0)]).unwrap();
        assert!((v - 1.0 / (1.0 + 1.0 / 200.0)).abs() < 1e-10);
        // the difference is untouched by the data
        let v = post.combination_variance(&[(b, 1.0), (m, -1.0)]).unwrap();
        assert!((v - 200.0).abs() < 1e-8);
    }

    #[test]
    fn posterior_mean_matches_precision_algebra() {
        let model = OverParameterized::default();
        let y = ObservedData::with_unit_weights(vec![vec![3.0], vec![-1.0]]).unwrap();
        let post = Model::<f64>::true_posterior(&model, &y).unwrap();
        // brute force: posterior mean maximises the log density; check gradient is zero
        let (b, m1, m2) = (
            post.marginal_mean(Coordinate::Global(0)).unwrap(),
            post.marginal_mean(Coordinate::Local { slot: 0, coord: 0 }).unwrap(),
            post.marginal_mean(Coordinate::Local { slot: 1, coord: 0 }).unwrap(),
        );
        let gb = -b / 100.0 + (3.0 - b - m1) + (-1.0 - b - m2);
        let g1 = -m1 / 100.0 + (3.0 - b - m1);
        let g2 = -m2 / 100.0 + (-1.0 - b - m2);
        assert!(gb.abs() < 1e-9 && g1.abs() < 1e-9 && g2.abs() < 1e-9);
    }
}
