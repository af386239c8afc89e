//! Blockwise global/local Metropolis-within-Gibbs kernel.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::Particle;
use crate::criterion::{best_match, within, Criterion};
use crate::distance::{Matching, ObservedData, SimulatedData};
use crate::error::{invalid, Error, Result};
use crate::models::{normal_log_density, Model};
use crate::scalar::{cast, Real};
use crate::streams::Stream;

/// Random-walk variances for the current iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelState {
    /// Per global coordinate.
    pub tau_global: Vec<f64>,
    /// `tau_local[k][c]`: variance of coordinate `c` for the local block
    /// matched to observed slot `k`.
    pub tau_local: Vec<Vec<f64>>,
    /// Fallback variance per local coordinate: the maximum over slots.
    pub tau_zero: Vec<f64>,
    /// Number of Gibbs blocks over the matched compartments.
    pub blocks: usize,
}

fn population_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n)
}

fn floor_for(mean: f64) -> f64 {
    1e-12 * mean.abs().max(1.0).powi(2)
}

/// Twice the per-coordinate variance of the aligned alive particles.
///
/// Slot `k` uses the particles in which observed compartment `k` is matched,
/// and only when at least `min_matches` of them exist; other slots and zero
/// variances take the fallback `tau_zero`, the per-coordinate maximum over
/// the estimated slots.
pub fn compute_kernel_state<T: Real>(
    population: &[Particle<T>],
    k: usize,
    min_matches: usize,
    blocks: usize,
) -> Result<KernelState> {
    let alive: Vec<&Particle<T>> = population.iter().filter(|p| p.alive).collect();
    let first = alive.first().ok_or_else(|| invalid("kernel state needs an alive particle"))?;
    if blocks == 0 {
        return Err(invalid("number of blocks H must be at least 1"));
    }
    let d_glob = first.theta.global.len();
    let d_loc = first.theta.locals[0].len();
    let tau_global = (0..d_glob)
        .map(|c| {
            let xs: Vec<f64> = alive.iter().map(|p| p.theta.global[c].widen()).collect();
            let (mean, var) = population_variance(&xs);
            if var > 0.0 {
                2.0 * var
            } else {
                floor_for(mean)
            }
        })
        .collect();
    let mut estimated: Vec<Vec<Option<f64>>> = vec![vec![None; d_loc]; k];
    let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); d_loc];
    for (slot, est) in estimated.iter_mut().enumerate() {
        let blocks_for_slot: Vec<&Vec<T>> =
            alive.iter().filter_map(|p| p.matching.simulated_for(slot).map(|m| &p.theta.locals[m])).collect();
        for c in 0..d_loc {
            let xs: Vec<f64> = blocks_for_slot.iter().map(|l| l[c].widen()).collect();
            pooled[c].extend_from_slice(&xs);
            if xs.len() >= min_matches.max(2) {
                let var = population_variance(&xs).1;
                if var > 0.0 {
                    est[c] = Some(2.0 * var);
                }
            }
        }
    }
    let tau_zero: Vec<f64> = (0..d_loc)
        .map(|c| {
            let max = estimated.iter().filter_map(|e| e[c]).fold(0.0f64, f64::max);
            if max > 0.0 {
                return max;
            }
            if pooled[c].len() >= 2 {
                let (mean, var) = population_variance(&pooled[c]);
                if var > 0.0 {
                    return 2.0 * var;
                }
                return floor_for(mean);
            }
            1.0
        })
        .collect();
    let tau_local = estimated
        .into_iter()
        .map(|e| e.into_iter().enumerate().map(|(c, v)| v.unwrap_or(tau_zero[c])).collect())
        .collect();
    Ok(KernelState { tau_global, tau_local, tau_zero, blocks })
}

impl KernelState {
    /// Variances for simulated compartment `m` under `matching`.
    fn local_variances<'a>(&'a self, matching: &Matching, m: usize) -> &'a [f64] {
        match matching.observed_for(m) {
            Some(k) => &self.tau_local[k],
            None => &self.tau_zero,
        }
    }
}

/// Result of one kernel application.
#[derive(Debug, Clone)]
pub struct MoveOutcome<T> {
    pub particle: Particle<T>,
    pub simulator_calls: u64,
    pub assignment_solves: u64,
    pub global_accepted: bool,
    pub blocks_accepted: usize,
}

fn random_walk<T: Real>(x: &[T], variances: &[f64], rng: &mut Stream) -> Vec<T> {
    x.iter()
        .zip(variances)
        .map(|(&v, &tau)| {
            let z: f64 = rng.sample(StandardNormal);
            cast(v.widen() + tau.sqrt() * z)
        })
        .collect()
}

fn log_q<T: Real>(x: &[T], centre: &[T], variances: &[f64]) -> f64 {
    x.iter()
        .zip(centre)
        .zip(variances)
        .map(|((a, c), &v)| match (v > 0.0, a == c) {
            (true, _) => normal_log_density(a.widen(), c.widen(), v),
            // zero variance is a point mass; it cancels between the two directions
            (false, true) => 0.0,
            (false, false) => f64::NEG_INFINITY,
        })
        .sum()
}

fn simulate_or_fail<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    global: &[T],
    local: &[T],
    rng: &mut Stream,
) -> Result<Option<Vec<T>>> {
    match model.simulate_compartment(global, local, rng) {
        Ok(z) => Ok(Some(z)),
        Err(Error::SimulationFailure(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Splits `items` into `h` contiguous blocks whose sizes differ by at most one.
fn partition<X: Clone>(items: &[X], h: usize) -> Vec<Vec<X>> {
    let h = h.min(items.len()).max(1);
    let (base, extra) = (items.len() / h, items.len() % h);
    let mut out = Vec::with_capacity(h);
    let mut start = 0;
    for b in 0..h {
        let len = base + usize::from(b < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

/// One global move, `H` random blocks over the matched compartments, and a
/// prior refresh of the unmatched compartments.
pub fn move_particle<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    y: &ObservedData<T>,
    particle: &Particle<T>,
    epsilon: T,
    kernel: &KernelState,
    criterion: Criterion,
    rng: &mut Stream,
) -> Result<MoveOutcome<T>> {
    let mut cur = particle.clone();
    let n_sim = cur.z.num_compartments();
    let mut calls = 0u64;
    let mut solves = 0u64;
    let mut global_accepted = false;
    let mut blocks_accepted = 0;

    if !cur.theta.global.is_empty() {
        let proposal = random_walk(&cur.theta.global, &kernel.tau_global, rng);
        let log_ratio = model.log_prior_global(&proposal) - model.log_prior_global(&cur.theta.global);
        let u: f64 = rng.random();
        if log_ratio > f64::NEG_INFINITY {
            calls += n_sim as u64;
            let mut z = Vec::with_capacity(n_sim);
            for local in &cur.theta.locals {
                match simulate_or_fail(model, &proposal, local, rng)? {
                    Some(c) => z.push(c),
                    None => break,
                }
            }
            if z.len() == n_sim {
                let z = SimulatedData::new(z)?;
                let best = best_match(y, &z, criterion)?;
                solves += 1;
                if within(best.squared, epsilon) && u.ln() < log_ratio {
                    cur.theta.global = proposal;
                    cur.z = z;
                    cur.matching = best.matching;
                    cur.squared = best.squared;
                    global_accepted = true;
                }
            }
        }
    }

    let mut matched: Vec<usize> = cur.matching.simulated_indices().collect();
    matched.sort_unstable();
    matched.shuffle(rng);
    for block in partition(&matched, kernel.blocks) {
        if block.is_empty() {
            continue;
        }
        let mut proposals = Vec::with_capacity(block.len());
        let mut log_ratio = 0.0;
        for &m in &block {
            let current = &cur.theta.locals[m];
            let fwd_var = kernel.local_variances(&cur.matching, m);
            let prop = random_walk(current, fwd_var, rng);
            log_ratio += model.log_prior_local(&prop) - model.log_prior_local(current) - log_q(&prop, current, fwd_var);
            proposals.push(prop);
        }
        let u: f64 = rng.random();
        if log_ratio == f64::NEG_INFINITY || log_ratio.is_nan() {
            continue;
        }
        calls += block.len() as u64;
        let mut z = cur.z.clone();
        let mut failed = false;
        for (&m, prop) in block.iter().zip(&proposals) {
            match simulate_or_fail(model, &cur.theta.global, prop, rng)? {
                Some(c) => *z.compartment_mut(m) = c,
                None => {
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            continue;
        }
        let best = best_match(y, &z, criterion)?;
        solves += 1;
        for (&m, prop) in block.iter().zip(&proposals) {
            log_ratio += log_q(&cur.theta.locals[m], prop, kernel.local_variances(&best.matching, m));
        }
        if within(best.squared, epsilon) && u.ln() < log_ratio {
            for (&m, prop) in block.iter().zip(proposals) {
                cur.theta.locals[m] = prop;
            }
            cur.z = z;
            cur.matching = best.matching;
            cur.squared = best.squared;
            blocks_accepted += 1;
        }
    }

    let unmatched: Vec<usize> = (0..n_sim).filter(|&m| cur.matching.observed_for(m).is_none()).collect();
    if !unmatched.is_empty() {
        calls += unmatched.len() as u64;
        let mut z = cur.z.clone();
        let mut locals = Vec::with_capacity(unmatched.len());
        let mut failed = false;
        for &m in &unmatched {
            let local = model.sample_local(rng);
            match simulate_or_fail(model, &cur.theta.global, &local, rng)? {
                Some(c) => *z.compartment_mut(m) = c,
                None => {
                    failed = true;
                    break;
                }
            }
            locals.push(local);
        }
        if !failed {
            let best = best_match(y, &z, criterion)?;
            solves += 1;
            if within(best.squared, epsilon) {
                for (&m, local) in unmatched.iter().zip(locals) {
                    cur.theta.locals[m] = local;
                }
                cur.z = z;
                cur.matching = best.matching;
                cur.squared = best.squared;
            }
        }
    }

    Ok(MoveOutcome { particle: cur, simulator_calls: calls, assignment_solves: solves, global_accepted, blocks_accepted })
}
