//! Simulator plugin interface and the built-in hierarchical models.
//!
//! A model has a global block `beta` of dimension `d_glob`, i.i.d. local
//! blocks `mu_m` of dimension `d_loc`, and a per-compartment simulator
//! `g(. | beta, mu_m)` producing `n` observations.

mod gaussian;
mod overparam;
mod posterior;
mod sir;
mod uniform;

pub use gaussian::GaussianHierarchy;
pub use overparam::OverParameterized;
pub use posterior::{Coordinate, TruePosterior};
pub use sir::{Sir, SirTrajectory};
pub use uniform::UniformToy;

use crate::distance::{ObservedData, SimulatedData};
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::streams::Stream;

/// `theta = (beta, mu_1, ..., mu_M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector<T> {
    pub global: Vec<T>,
    pub locals: Vec<Vec<T>>,
}

impl<T: Real> ParameterVector<T> {
    pub fn new(global: Vec<T>, locals: Vec<Vec<T>>) -> Result<Self> {
        if locals.is_empty() {
            return Err(invalid("a parameter vector needs at least one local block"));
        }
        let d = locals[0].len();
        if locals.iter().any(|l| l.len() != d) {
            return Err(invalid("local blocks have differing dimensions"));
        }
        Ok(Self { global, locals })
    }

    pub fn num_locals(&self) -> usize {
        self.locals.len()
    }

    /// Local blocks reordered so that slot `k` holds block `images[k]`.
    pub fn permuted(&self, images: &[usize]) -> Self {
        Self { global: self.global.clone(), locals: images.iter().map(|&m| self.locals[m].clone()).collect() }
    }

    /// Flat bit pattern, used for exact identity tests.
    pub fn bits(&self) -> Vec<u64> {
        self.global.iter().chain(self.locals.iter().flatten()).map(|x| x.widen().to_bits()).collect()
    }
}

/// A hierarchical simulator with exchangeable priors.
///
/// All randomness flows through the caller's stream, so implementations are
/// pure given the stream state.
pub trait Model<T: Real>: Send + Sync {
    fn name(&self) -> &str;
    fn global_names(&self) -> Vec<String>;
    fn local_names(&self) -> Vec<String>;
    /// Length `n` of one simulated compartment.
    fn obs_len(&self) -> usize;

    fn global_dim(&self) -> usize {
        self.global_names().len()
    }

    fn local_dim(&self) -> usize {
        self.local_names().len()
    }

    fn sample_global(&self, rng: &mut Stream) -> Vec<T>;
    fn sample_local(&self, rng: &mut Stream) -> Vec<T>;
    /// Log prior density of the global block; `-inf` outside the support.
    fn log_prior_global(&self, global: &[T]) -> f64;
    fn log_prior_local(&self, local: &[T]) -> f64;

    fn simulate_compartment(&self, global: &[T], local: &[T], rng: &mut Stream) -> Result<Vec<T>>;

    /// Named hyperparameters, recorded in result files.
    fn hyperparameters(&self) -> Vec<(String, f64)>;

    fn true_posterior(&self, _y: &ObservedData<T>) -> Result<TruePosterior> {
        Err(Error::NotAvailable(format!("model {} has no closed-form posterior", self.name())))
    }

    /// Marginal prior CDF of a global coordinate.
    fn global_prior_cdf(&self, _coord: usize, _x: f64) -> Option<f64> {
        None
    }

    /// Marginal prior CDF of a local coordinate.
    fn local_prior_cdf(&self, _coord: usize, _x: f64) -> Option<f64> {
        None
    }

    /// Marginal prior quantile of a local coordinate.
    fn local_prior_quantile(&self, _coord: usize, _p: f64) -> Option<f64> {
        None
    }

    /// Names of quantities derived per compartment from `(beta, mu_m)`.
    fn derived_names(&self) -> Vec<String> {
        Vec::new()
    }

    fn derived(&self, _global: &[T], _local: &[T]) -> Vec<T> {
        Vec::new()
    }
}

pub fn sample_prior<T: Real, M: Model<T> + ?Sized>(model: &M, m: usize, rng: &mut Stream) -> Result<ParameterVector<T>> {
    if m == 0 {
        return Err(invalid("M must be at least 1"));
    }
    let global = model.sample_global(rng);
    let locals = (0..m).map(|_| model.sample_local(rng)).collect();
    Ok(ParameterVector { global, locals })
}

pub fn log_prior<T: Real, M: Model<T> + ?Sized>(model: &M, theta: &ParameterVector<T>) -> f64 {
    model.log_prior_global(&theta.global) + theta.locals.iter().map(|l| model.log_prior_local(l)).sum::<f64>()
}

pub fn simulate<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    theta: &ParameterVector<T>,
    rng: &mut Stream,
) -> Result<SimulatedData<T>> {
    check_dims(model, theta)?;
    let z = theta
        .locals
        .iter()
        .map(|l| model.simulate_compartment(&theta.global, l, rng))
        .collect::<Result<Vec<_>>>()?;
    SimulatedData::new(z)
}

pub(crate) fn check_dims<T: Real, M: Model<T> + ?Sized>(model: &M, theta: &ParameterVector<T>) -> Result<()> {
    if theta.global.len() != model.global_dim() {
        return Err(invalid(format!(
            "global block has {} coordinates, model {} expects {}",
            theta.global.len(),
            model.name(),
            model.global_dim()
        )));
    }
    if theta.locals.iter().any(|l| l.len() != model.local_dim()) {
        return Err(invalid(format!("local blocks must have {} coordinates", model.local_dim())));
    }
    Ok(())
}

pub(crate) fn positive(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Error::Config(format!("{name} must be positive, got {x}")))
    }
}

pub(crate) fn interval(name: &str, lo: f64, hi: f64) -> Result<(f64, f64)> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok((lo, hi))
    } else {
        Err(Error::Config(format!("{name} bounds must satisfy lower < upper, got ({lo}, {hi})")))
    }
}

pub(crate) fn uniform_log_density(x: f64, lo: f64, hi: f64) -> f64 {
    if (lo..=hi).contains(&x) {
        -(hi - lo).ln()
    } else {
        f64::NEG_INFINITY
    }
}

pub(crate) fn normal_log_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean) * (x - mean) / var + (2.0 * std::f64::consts::PI * var).ln())
}
