//! Sequential Monte Carlo: epsilon descent, over-sampling and under-matching.
//!
//! Iteration 0 draws the prior population. Each later iteration resamples
//! the alive particles, moves every particle with the blockwise kernel at the
//! current criterion, records a trace row, and then advances the schedule
//! (new tolerance, smaller `M`, or larger `L`), killing particles that fail
//! the new criterion.

mod kernel;
mod schedule;

pub use kernel::{compute_kernel_state, move_particle, KernelState, MoveOutcome};
pub use schedule::{
    adapt_epsilon, calibrate_epsilon, duplicate_for_transition, next_l, next_m, order_statistic, resample,
    systematic_indices, Duplication,
};

use std::time::Instant;

use rayon::prelude::*;

use crate::criterion::{best_match, within, Criterion};
use crate::diagnostics::{unique_particle_rate, TraceRow};
use crate::distance::{Matching, ObservedData, SimulatedData};
use crate::error::{invalid, Error, Result};
use crate::models::{check_dims, sample_prior, simulate, Model, ParameterVector};
use crate::scalar::Real;
use crate::streams::{Purpose, StreamFactory};

/// One particle: parameters and data for the current `M` compartments in
/// raw simulator order, with the current optimal matching.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle<T> {
    pub theta: ParameterVector<T>,
    pub z: SimulatedData<T>,
    pub matching: Matching,
    /// Squared optimal matched distance.
    pub squared: T,
    pub alive: bool,
}

impl<T: Real> Particle<T> {
    pub fn distance(&self) -> T {
        self.squared.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    EpsilonDescent,
    OverSampling { m0: usize },
    UnderMatching { l0: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcConfig<T> {
    pub n: usize,
    pub seed: u64,
    pub kind: ScheduleKind,
    /// Quantile of alive distances giving the next tolerance.
    pub alpha: f64,
    /// Schedule speed for `M_t` and `L_t`.
    pub gamma: f64,
    /// Calibration quantile for the fixed OS/UM tolerance.
    pub quantile_p: f64,
    /// Duplication candidates per particle at an OS transition.
    pub duplication_r: usize,
    /// Gibbs blocks; `None` means `min(K, 5)`.
    pub blocks: Option<usize>,
    /// Stop once the tolerance reaches this value.
    pub target_epsilon: Option<T>,
    /// Fixed OS/UM tolerance overriding the calibration.
    pub fixed_epsilon: Option<T>,
    pub unique_floor: f64,
    /// Cap on simulator calls; an iteration that could exceed it is not started.
    pub budget: Option<u64>,
    pub max_iterations: usize,
    /// Keep a projected copy of the population after every move.
    pub record_snapshots: bool,
}

impl<T: Real> SmcConfig<T> {
    pub fn new(n: usize, seed: u64, kind: ScheduleKind) -> Self {
        Self {
            n,
            seed,
            kind,
            alpha: 0.75,
            gamma: 0.9,
            quantile_p: 0.95,
            duplication_r: 5,
            blocks: None,
            target_epsilon: None,
            fixed_epsilon: None,
            unique_floor: 0.02,
            budget: None,
            max_iterations: 10_000,
            record_snapshots: false,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let mut errs = Vec::new();
        if self.n < 2 {
            errs.push(format!("N must be at least 2, got {}", self.n));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            errs.push(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            errs.push(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.quantile_p > 0.0 && self.quantile_p <= 1.0) {
            errs.push(format!("p must lie in (0, 1], got {}", self.quantile_p));
        }
        if self.duplication_r == 0 {
            errs.push("R must be at least 1".into());
        }
        if self.blocks == Some(0) {
            errs.push("H must be at least 1".into());
        }
        if !(self.unique_floor >= 0.0 && self.unique_floor < 1.0) {
            errs.push(format!("unique-rate floor must lie in [0, 1), got {}", self.unique_floor));
        }
        if let Some(e) = self.target_epsilon {
            if !(e > T::zero()) {
                errs.push("target epsilon must be positive".into());
            }
        }
        if let Some(e) = self.fixed_epsilon {
            if !(e > T::zero()) {
                errs.push("fixed epsilon must be positive".into());
            }
        }
        match self.kind {
            ScheduleKind::OverSampling { m0 } if m0 < k => errs.push(format!("M_0 = {m0} must be at least K = {k}")),
            ScheduleKind::UnderMatching { l0 } if l0 == 0 || l0 >= k => {
                errs.push(format!("L_0 = {l0} must lie in 1..{k}"))
            }
            _ => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }

    fn blocks_for(&self, k: usize) -> usize {
        self.blocks.unwrap_or(k.min(5))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmcStatus {
    /// Target tolerance (or the schedule's terminal state) reached.
    TargetReached,
    UniqueRateFloor,
    Stall,
    BudgetExhausted,
    Extinction,
    IterationLimit,
}

/// A particle reported through the alignment map: local slot `k` holds the
/// block matched to observed compartment `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedParticle<T> {
    pub theta: ParameterVector<T>,
    pub z: SimulatedData<T>,
    pub distance: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub iteration: usize,
    pub epsilon: T,
    pub m_or_l: Option<usize>,
    pub particles: Vec<ProjectedParticle<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcOutput<T> {
    pub status: SmcStatus,
    /// Final population in raw order (OS surplus compartments retained).
    pub particles: Vec<Particle<T>>,
    /// Final population projected onto the observed order.
    pub projected: Vec<ProjectedParticle<T>>,
    pub trace: Vec<TraceRow>,
    pub epsilon: T,
    pub simulator_calls: u64,
    pub assignment_solves: u64,
    pub snapshots: Vec<Snapshot<T>>,
}

/// Aligns a particle so slot `k` holds the compartment matched to observed
/// `k`. Unmatched observed slots (under-matching) receive the unmatched
/// simulated compartments in index order; surplus compartments are dropped.
pub fn project<T: Real>(p: &Particle<T>, k: usize) -> ProjectedParticle<T> {
    let mut spare = (0..p.z.num_compartments()).filter(|&m| p.matching.observed_for(m).is_none());
    let images: Vec<usize> =
        (0..k).map(|slot| p.matching.simulated_for(slot).unwrap_or_else(|| spare.next().expect("M >= K"))).collect();
    ProjectedParticle { theta: p.theta.permuted(&images), z: p.z.select(&images), distance: p.distance() }
}

/// Current position in the schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Descent,
    Over(usize),
    Under(usize),
}

impl Phase {
    fn criterion(self) -> Criterion {
        match self {
            Phase::Descent => Criterion::Permutation,
            Phase::Over(_) => Criterion::Injection,
            Phase::Under(l) => Criterion::UnderMatch(l),
        }
    }

    fn m_or_l(self) -> Option<usize> {
        match self {
            Phase::Descent => None,
            Phase::Over(m) | Phase::Under(m) => Some(m),
        }
    }

    fn compartments(self, k: usize) -> usize {
        match self {
            Phase::Over(m) => m,
            _ => k,
        }
    }
}

struct Counters {
    calls: u64,
    solves: u64,
}

fn init_particle<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    y: &ObservedData<T>,
    m: usize,
    criterion: Criterion,
    factory: &StreamFactory,
    i: u64,
) -> Result<(Particle<T>, u64)> {
    let mut rng = factory.stream(Purpose::Prior, 0, i);
    let mut calls = 0;
    // a prior draw whose simulation fails is redrawn; each attempt is counted
    for _ in 0..1000 {
        let theta = sample_prior(model, m, &mut rng)?;
        calls += m as u64;
        match simulate(model, &theta, &mut rng) {
            Ok(z) => {
                let best = best_match(y, &z, criterion)?;
                return Ok((Particle { theta, z, matching: best.matching, squared: best.squared, alive: true }, calls));
            }
            Err(Error::SimulationFailure(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::SimulationFailure("1000 consecutive prior draws failed to simulate".into()))
}

/// Draws the prior population and, for OS/UM schedules, calibrates the
/// fixed tolerance and marks particles outside it as dead.
pub fn init_population<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    y: &ObservedData<T>,
    config: &SmcConfig<T>,
) -> Result<(Vec<Particle<T>>, T, u64)> {
    let k = y.num_compartments();
    config.validate(k)?;
    let phase = initial_phase(config);
    let factory = StreamFactory::new(config.seed);
    let drawn: Vec<(Particle<T>, u64)> = (0..config.n as u64)
        .into_par_iter()
        .map(|i| init_particle(model, y, phase.compartments(k), phase.criterion(), &factory, i))
        .collect::<Result<_>>()?;
    let calls = drawn.iter().map(|d| d.1).sum();
    let mut population: Vec<Particle<T>> = drawn.into_iter().map(|d| d.0).collect();
    let epsilon = match phase {
        Phase::Descent => T::infinity(),
        _ => match config.fixed_epsilon {
            Some(e) => e,
            None => {
                let d: Vec<T> = population.iter().map(|p| p.distance()).collect();
                calibrate_epsilon(&d, config.quantile_p)?
            }
        },
    };
    for p in &mut population {
        p.alive = within(p.squared, epsilon);
    }
    Ok((population, epsilon, calls))
}

fn initial_phase<T>(config: &SmcConfig<T>) -> Phase {
    match config.kind {
        ScheduleKind::EpsilonDescent => Phase::Descent,
        ScheduleKind::OverSampling { m0 } => Phase::Over(m0),
        ScheduleKind::UnderMatching { l0 } => Phase::Under(l0),
    }
}

pub fn run_smc<T: Real, M: Model<T> + ?Sized>(model: &M, y: &ObservedData<T>, config: &SmcConfig<T>) -> Result<SmcOutput<T>> {
    let start = Instant::now();
    let k = y.num_compartments();
    if y.obs_len() != model.obs_len() {
        return Err(invalid(format!(
            "observed compartments have length {}, model {} simulates {}",
            y.obs_len(),
            model.name(),
            model.obs_len()
        )));
    }
    let probe = ParameterVector { global: vec![T::zero(); model.global_dim()], locals: vec![vec![T::zero(); model.local_dim()]] };
    check_dims(model, &probe)?;
    let factory = StreamFactory::new(config.seed);
    let blocks = config.blocks_for(k);
    let n = config.n;
    let min_matches_um = 2usize.max((0.1 * n as f64).ceil() as usize);

    let (mut population, mut epsilon, init_calls) = init_population(model, y, config)?;
    let mut phase = initial_phase(config);
    let mut counters = Counters { calls: init_calls, solves: n as u64 };
    let mut trace = Vec::new();
    let mut snapshots = Vec::new();
    let alive_count = |pop: &[Particle<T>]| pop.iter().filter(|p| p.alive).count();
    let record = |trace: &mut Vec<TraceRow>, it: usize, eps: T, phase: Phase, alive: usize, pop: &[Particle<T>], c: &Counters| {
        trace.push(TraceRow {
            iteration: it,
            epsilon: eps.widen(),
            m_or_l: phase.m_or_l(),
            alive,
            unique_rate: unique_particle_rate(pop.iter().filter(|p| p.alive).map(|p| &p.theta)),
            simulator_calls: c.calls,
            assignment_solves: c.solves,
            wall_time_seconds: start.elapsed().as_secs_f64(),
        });
    };
    record(&mut trace, 0, epsilon, phase, alive_count(&population), &population, &counters);
    if config.record_snapshots && phase != Phase::Descent {
        snapshots.push(snapshot(0, epsilon, phase, &population, k));
    }
    let target_met = |eps: T| config.target_epsilon.is_some_and(|t| eps <= t);

    let mut status = SmcStatus::IterationLimit;
    for it in 1..=config.max_iterations {
        // 1. advance the schedule and kill
        if it > 1 || phase == Phase::Descent {
            match phase {
                Phase::Descent => {
                    let d: Vec<T> = population.iter().filter(|p| p.alive).map(|p| p.distance()).collect();
                    let mut next = match adapt_epsilon(&d, config.alpha, epsilon) {
                        Ok(e) => e,
                        Err(_) => {
                            status = SmcStatus::Stall;
                            break;
                        }
                    };
                    if let Some(t) = config.target_epsilon {
                        if next < t {
                            next = t;
                        }
                    }
                    epsilon = next;
                    for p in &mut population {
                        p.alive = within(p.squared, epsilon);
                    }
                }
                Phase::Over(m) => {
                    let m_next = next_m(k, m, config.gamma);
                    let r = config.duplication_r;
                    let results: Vec<Duplication<T>> = population
                        .par_iter()
                        .enumerate()
                        .map(|(i, p)| {
                            if !p.alive {
                                return Ok(Duplication { survivor: None, candidate: None, assignment_solves: 0 });
                            }
                            let mut rng = factory.stream(Purpose::Duplicate, it as u64, i as u64);
                            duplicate_for_transition(p, y, epsilon, m_next, r, &mut rng)
                        })
                        .collect::<Result<_>>()?;
                    counters.solves += results.iter().map(|d| d.assignment_solves).sum::<u64>();
                    population = results
                        .into_iter()
                        .zip(&population)
                        .map(|(d, p)| {
                            d.survivor.unwrap_or_else(|| {
                                let mut dead = p.clone();
                                dead.alive = false;
                                dead
                            })
                        })
                        .collect();
                    phase = Phase::Over(m_next);
                }
                Phase::Under(l) => {
                    let l_next = next_l(k, l, config.gamma);
                    let updated: Vec<Particle<T>> = population
                        .par_iter()
                        .map(|p| {
                            if !p.alive {
                                return Ok(p.clone());
                            }
                            let best = best_match(y, &p.z, Criterion::UnderMatch(l_next))?;
                            let mut q = p.clone();
                            q.alive = within(best.squared, epsilon);
                            q.matching = best.matching;
                            q.squared = best.squared;
                            Ok(q)
                        })
                        .collect::<Result<_>>()?;
                    counters.solves += alive_count(&population) as u64;
                    population = updated;
                    phase = Phase::Under(l_next);
                }
            }
        }
        let survivors = alive_count(&population);
        if survivors == 0 {
            status = SmcStatus::Extinction;
            break;
        }
        // 2. budget check: a move costs at most 2M simulator calls per particle
        if let Some(b) = config.budget {
            let worst = 2 * (n * phase.compartments(k)) as u64;
            if counters.calls + worst > b {
                status = SmcStatus::BudgetExhausted;
                break;
            }
        }
        // 3. resample and move
        let kernel = compute_kernel_state(
            &population,
            k,
            if matches!(phase, Phase::Under(_)) { min_matches_um } else { 2 },
            blocks,
        )?;
        let mut rng = factory.stream(Purpose::Resample, it as u64, 0);
        let resampled = resample(&population, n, &mut rng)?;
        let criterion = phase.criterion();
        let moved: Vec<MoveOutcome<T>> = resampled
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let mut rng = factory.stream(Purpose::Move, it as u64, i as u64);
                move_particle(model, y, p, epsilon, &kernel, criterion, &mut rng)
            })
            .collect::<Result<_>>()?;
        counters.calls += moved.iter().map(|m| m.simulator_calls).sum::<u64>();
        counters.solves += moved.iter().map(|m| m.assignment_solves).sum::<u64>();
        population = moved.into_iter().map(|m| m.particle).collect();
        record(&mut trace, it, epsilon, phase, survivors, &population, &counters);
        if config.record_snapshots && phase != Phase::Descent {
            snapshots.push(snapshot(it, epsilon, phase, &population, k));
        }

        // 4. stopping rules
        let terminal = match phase {
            Phase::Over(m) => m == k,
            Phase::Under(l) => l == k,
            Phase::Descent => true,
        };
        if terminal {
            if phase != Phase::Descent && config.target_epsilon.is_some_and(|t| epsilon > t) {
                phase = Phase::Descent;
            } else if phase != Phase::Descent || target_met(epsilon) {
                status = SmcStatus::TargetReached;
                break;
            }
        }
        if trace.last().expect("row recorded").unique_rate < config.unique_floor {
            status = SmcStatus::UniqueRateFloor;
            break;
        }
    }
    let final_pop: Vec<Particle<T>> = population.iter().filter(|p| p.alive).cloned().collect();
    let projected = final_pop.iter().map(|p| project(p, k)).collect();
    Ok(SmcOutput {
        status,
        particles: final_pop,
        projected,
        trace,
        epsilon,
        simulator_calls: counters.calls,
        assignment_solves: counters.solves,
        snapshots,
    })
}

fn snapshot<T: Real>(it: usize, epsilon: T, phase: Phase, population: &[Particle<T>], k: usize) -> Snapshot<T> {
    Snapshot {
        iteration: it,
        epsilon,
        m_or_l: phase.m_or_l(),
        particles: population.iter().filter(|p| p.alive).map(|p| project(p, k)).collect(),
    }
}
