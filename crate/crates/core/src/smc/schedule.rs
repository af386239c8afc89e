//! Tolerance and compartment-count schedules, resampling and OS duplication.

use rand::seq::index;
use rand::Rng;

use super::Particle;
use crate::criterion::{best_match, within, Criterion};
use crate::distance::ObservedData;
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Guard against `0.6 * 5 = 3.0000000000000004` style rounding in ceil/floor.
const ROUNDING: f64 = 1e-9;

/// Order-`ceil(q * len)` statistic (1-based) of `values`.
pub fn order_statistic<T: Real>(values: &[T], q: f64) -> Result<T> {
    if values.is_empty() {
        return Err(invalid("order statistic of an empty set"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(invalid(format!("quantile level must lie in (0, 1], got {q}")));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("distances are not NaN"));
    let r = ((q * v.len() as f64 - ROUNDING).ceil() as usize).clamp(1, v.len());
    Ok(v[r - 1])
}

/// Fixed tolerance for OS/UM runs: the order-`ceil(pN)` statistic of the
/// initial distances.
pub fn calibrate_epsilon<T: Real>(distances: &[T], p: f64) -> Result<T> {
    order_statistic(distances, p)
}

/// Next tolerance of the epsilon-descent schedule, or a stall error when it
/// would not strictly decrease.
pub fn adapt_epsilon<T: Real>(alive_distances: &[T], alpha: f64, current: T) -> Result<T> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let next = order_statistic(alive_distances, alpha)?;
    if next < current {
        Ok(next)
    } else {
        Err(Error::NotAvailable(format!("tolerance stalled at {current}")))
    }
}

/// `M_{t+1} = min(floor(K + (M_t - K) gamma), M_t - 1)`.
pub fn next_m(k: usize, m_t: usize, gamma: f64) -> usize {
    assert!(m_t > k, "over-sampling schedule already at K");
    let proposed = (k as f64 + (m_t - k) as f64 * gamma + ROUNDING).floor() as usize;
    proposed.min(m_t - 1).max(k)
}

/// `L_{t+1} = max(floor(L_t + (K - L_t)(1 - gamma)), L_t + 1)`.
pub fn next_l(k: usize, l_t: usize, gamma: f64) -> usize {
    assert!(l_t < k, "under-matching schedule already at K");
    let proposed = (l_t as f64 + (k - l_t) as f64 * (1.0 - gamma) + ROUNDING).floor() as usize;
    proposed.max(l_t + 1).min(k)
}

/// Systematic resampling with equal weights among the alive particles.
/// Returns the indices (into `alive`) of the `n` copies, in order.
pub fn systematic_indices<R: Rng + ?Sized>(alive: usize, n: usize, rng: &mut R) -> Vec<usize> {
    let u: f64 = rng.random();
    (0..n)
        .map(|i| ((((i as f64 + u) / n as f64) * alive as f64).floor() as usize).min(alive - 1))
        .collect()
}

/// Systematic resampling of the alive particles back to size `n`.
pub fn resample<T: Real, R: Rng + ?Sized>(population: &[Particle<T>], n: usize, rng: &mut R) -> Result<Vec<Particle<T>>> {
    let alive: Vec<&Particle<T>> = population.iter().filter(|p| p.alive).collect();
    if alive.is_empty() {
        return Err(Error::NotAvailable("population is extinct".into()));
    }
    Ok(systematic_indices(alive.len(), n, rng).into_iter().map(|i| alive[i].clone()).collect())
}

/// Outcome of the over-sampling transition for one particle.
#[derive(Debug, Clone)]
pub struct Duplication<T> {
    /// The first candidate passing the criterion at `M_next`, if any.
    pub survivor: Option<Particle<T>>,
    /// 1-based index of the surviving candidate.
    pub candidate: Option<usize>,
    pub assignment_solves: u64,
}

/// Candidate 1 keeps the first `m_next` stored compartments; candidates
/// `2..=r` keep uniformly random ordered selections of `m_next` of them.
pub fn duplicate_for_transition<T: Real, R: Rng + ?Sized>(
    particle: &Particle<T>,
    y: &ObservedData<T>,
    epsilon: T,
    m_next: usize,
    r: usize,
    rng: &mut R,
) -> Result<Duplication<T>> {
    let m = particle.z.num_compartments();
    if m_next > m || m_next < y.num_compartments() {
        return Err(invalid(format!("cannot truncate {m} compartments to {m_next}")));
    }
    if r == 0 {
        return Err(invalid("duplication count R must be at least 1"));
    }
    let mut solves = 0;
    for c in 1..=r {
        let keep: Vec<usize> = if c == 1 { (0..m_next).collect() } else { index::sample(rng, m, m_next).into_vec() };
        let z = particle.z.select(&keep);
        let best = best_match(y, &z, Criterion::Injection)?;
        solves += 1;
        if within(best.squared, epsilon) {
            let theta = particle.theta.permuted(&keep);
            let survivor = Particle { theta, z, matching: best.matching, squared: best.squared, alive: true };
            return Ok(Duplication { survivor: Some(survivor), candidate: Some(c), assignment_solves: solves });
        }
    }
    Ok(Duplication { survivor: None, candidate: None, assignment_solves: solves })
}
