use rand::Rng;
use rand_distr::StandardNormal;

use super::{interval, positive, uniform_log_density, Model};
use crate::error::{invalid, Error, Result};
use crate::scalar::{cast, Real};
use crate::streams::Stream;

/// Deterministic SIR compartments sharing the global `R0 = delta / nu`.
///
/// Local block `(I(0), R(0), delta)`; each compartment outputs daily
/// incidence, the drop in `S` over each day.
#[derive(Debug, Clone, PartialEq)]
pub struct Sir {
    pub population: f64,
    pub horizon_days: usize,
    pub step: f64,
    pub i0_bounds: (f64, f64),
    pub r_init_bounds: (f64, f64),
    pub delta_bounds: (f64, f64),
    pub r0_bounds: (f64, f64),
    /// Standard deviation of additive Gaussian observation noise; 0 disables it.
    pub noise_sd: f64,
}

impl Default for Sir {
    fn default() -> Self {
        Self {
            population: 1e5,
            horizon_days: 60,
            step: 0.1,
            i0_bounds: (1.0, 500.0),
            r_init_bounds: (0.0, 1000.0),
            delta_bounds: (0.1, 8.0),
            r0_bounds: (0.5, 6.0),
            noise_sd: 0.0,
        }
    }
}

/// Daily states `S, I, R` at days `0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct SirTrajectory {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
}

impl SirTrajectory {
    pub fn incidence(&self) -> Vec<f64> {
        self.s.windows(2).map(|w| w[0] - w[1]).collect()
    }
}

impl Sir {
    pub fn validate(&self) -> Result<()> {
        positive("population", self.population)?;
        positive("step", self.step)?;
        if self.horizon_days == 0 {
            return Err(Error::Config("horizon_days must be at least 1".into()));
        }
        let steps = (1.0 / self.step).round();
        if (steps * self.step - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("step {} must divide one day", self.step)));
        }
        interval("i0", self.i0_bounds.0, self.i0_bounds.1)?;
        interval("r_init", self.r_init_bounds.0, self.r_init_bounds.1)?;
        interval("delta", self.delta_bounds.0, self.delta_bounds.1)?;
        interval("r0", self.r0_bounds.0, self.r0_bounds.1)?;
        if self.i0_bounds.0 < 0.0 || self.r_init_bounds.0 < 0.0 || self.delta_bounds.0 < 0.0 || self.r0_bounds.0 <= 0.0 {
            return Err(Error::Config("SIR prior bounds must be nonnegative (R0 positive)".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Config("noise_sd must be nonnegative".into()));
        }
        Ok(())
    }

    /// RK4 integration of the SIR system with `nu = delta / r0`.
    pub fn trajectory(&self, i0: f64, r_init: f64, delta: f64, r0: f64) -> Result<SirTrajectory> {
        let n = self.population;
        if !(i0 >= 0.0 && r_init >= 0.0 && i0 + r_init <= n) {
            return Err(Error::SimulationFailure(format!(
                "initial state I = {i0}, R = {r_init} is infeasible for population {n}"
            )));
        }
        if !(delta >= 0.0 && r0 > 0.0 && delta.is_finite() && r0.is_finite()) {
            return Err(invalid(format!("rates must satisfy delta >= 0 and R0 > 0, got {delta}, {r0}")));
        }
        let nu = delta / r0;
        let f = |s: f64, i: f64| {
            let inf = delta * s * i / n;
            (-inf, inf - nu * i, nu * i)
        };
        let steps_per_day = (1.0 / self.step).round() as usize;
        let h = self.step;
        let (mut s, mut i, mut r) = (n - i0 - r_init, i0, r_init);
        let mut out = SirTrajectory { s: vec![s], i: vec![i], r: vec![r] };
        for _ in 0..self.horizon_days {
            for _ in 0..steps_per_day {
                let k1 = f(s, i);
                let k2 = f(s + 0.5 * h * k1.0, i + 0.5 * h * k1.1);
                let k3 = f(s + 0.5 * h * k2.0, i + 0.5 * h * k2.1);
                let k4 = f(s + h * k3.0, i + h * k3.1);
                s += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
                i += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
                r += h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
            }
            if !(s >= 0.0 && i >= 0.0 && r >= 0.0) {
                return Err(Error::SimulationFailure(format!("negative SIR state ({s}, {i}, {r})")));
            }
            out.s.push(s);
            out.i.push(i);
            out.r.push(r);
        }
        Ok(out)
    }
}

impl<T: Real> Model<T> for Sir {
    fn name(&self) -> &str {
        "sir"
    }

    fn global_names(&self) -> Vec<String> {
        vec!["R0".into()]
    }

    fn local_names(&self) -> Vec<String> {
        vec!["I0".into(), "R_init".into(), "delta".into()]
    }

    fn obs_len(&self) -> usize {
        self.horizon_days
    }

    fn sample_global(&self, rng: &mut Stream) -> Vec<T> {
        vec![cast(rng.random_range(self.r0_bounds.0..self.r0_bounds.1))]
    }

    fn sample_local(&self, rng: &mut Stream) -> Vec<T> {
        [self.i0_bounds, self.r_init_bounds, self.delta_bounds]
            .iter()
            .map(|&(lo, hi)| cast(rng.random_range(lo..hi)))
            .collect()
    }

    fn log_prior_global(&self, global: &[T]) -> f64 {
        uniform_log_density(global[0].widen(), self.r0_bounds.0, self.r0_bounds.1)
    }

    fn log_prior_local(&self, local: &[T]) -> f64 {
        [self.i0_bounds, self.r_init_bounds, self.delta_bounds]
            .iter()
            .zip(local)
            .map(|(&(lo, hi), x)| uniform_log_density(x.widen(), lo, hi))
            .sum()
    }

    fn simulate_compartment(&self, global: &[T], local: &[T], rng: &mut Stream) -> Result<Vec<T>> {
        let traj = self.trajectory(local[0].widen(), local[1].widen(), local[2].widen(), global[0].widen())?;
        Ok(traj
            .incidence()
            .into_iter()
            .map(|x| {
                if self.noise_sd > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    cast(x + self.noise_sd * z)
                } else {
                    cast(x)
                }
            })
            .collect())
    }

    fn hyperparameters(&self) -> Vec<(String, f64)> {
        vec![
            ("population".into(), self.population),
            ("horizon_days".into(), self.horizon_days as f64),
            ("step".into(), self.step),
            ("i0_lower".into(), self.i0_bounds.0),
            ("i0_upper".into(), self.i0_bounds.1),
            ("r_init_lower".into(), self.r_init_bounds.0),
            ("r_init_upper".into(), self.r_init_bounds.1),
            ("delta_lower".into(), self.delta_bounds.0),
            ("delta_upper".into(), self.delta_bounds.1),
            ("r0_lower".into(), self.r0_bounds.0),
            ("r0_upper".into(), self.r0_bounds.1),
            ("noise_sd".into(), self.noise_sd),
        ]
    }

    fn global_prior_cdf(&self, _coord: usize, x: f64) -> Option<f64> {
        let (lo, hi) = self.r0_bounds;
        Some(((x - lo) / (hi - lo)).clamp(0.0, 1.0))
    }

    fn local_prior_cdf(&self, coord: usize, x: f64) -> Option<f64> {
        let (lo, hi) = [self.i0_bounds, self.r_init_bounds, self.delta_bounds].get(coord).copied()?;
        Some(((x - lo) / (hi - lo)).clamp(0.0, 1.0))
    }

    fn local_prior_quantile(&self, coord: usize, p: f64) -> Option<f64> {
        let (lo, hi) = [self.i0_bounds, self.r_init_bounds, self.delta_bounds].get(coord).copied()?;
        Some(lo + p * (hi - lo))
    }

    fn derived_names(&self) -> Vec<String> {
        vec!["nu".into()]
    }

    fn derived(&self, global: &[T], local: &[T]) -> Vec<T> {
        vec![local[2] / global[0]]
    }
}
