//! One-shot rejection samplers and the critical tolerance.
//!
//! Attempt `j` of a run draws from stream `(seed, Rejection, 0, j)`, so the
//! accepted set depends only on the seed. Attempts are evaluated in parallel
//! batches and collected in index order.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error as ThisError;

use crate::criterion::{best_match, within, Criterion};
use crate::distance::{cost_matrix, ObservedData, SimulatedData};
use crate::error::{invalid, Error, Result};
use crate::models::{check_dims, sample_prior, simulate, Model, ParameterVector};
use crate::permutations::StratifiedProposal;
use crate::scalar::Real;
use crate::streams::{Purpose, StreamFactory};

/// Default cap on simulator calls (one call simulates one compartment).
pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// Compartments compared in order.
    Vanilla,
    /// Optimal permutation, output aligned to the observed order.
    Permutation,
    /// Optimal permutation plus stratified importance weights.
    Stratified(StratifiedProposal),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::Permutation => "permabc",
            Method::Stratified(_) => "permabc-strat",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionConfig<T> {
    pub n: usize,
    pub epsilon: T,
    pub budget: u64,
    pub seed: u64,
}

impl<T: Real> RejectionConfig<T> {
    pub fn new(n: usize, epsilon: T, seed: u64) -> Self {
        Self { n, epsilon, budget: DEFAULT_BUDGET, seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedSample<T> {
    /// Parameters, local slot `k` aligned to observed compartment `k`.
    pub theta: ParameterVector<T>,
    /// Simulated data in the same alignment.
    pub z: SimulatedData<T>,
    pub distance: T,
    pub weight: f64,
    /// Simulator calls spent since the previous acceptance.
    pub simulations_used: u64,
    /// `permutation[k]` is the raw simulated compartment now in slot `k`.
    pub permutation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionOutput<T> {
    pub samples: Vec<AcceptedSample<T>>,
    pub simulations: u64,
    pub attempts: u64,
    pub assignment_solves: u64,
}

#[derive(Debug, ThisError)]
pub enum RejectionError<T: std::fmt::Debug> {
    #[error("budget of {budget} simulator calls exhausted after {} acceptances", partial.samples.len())]
    BudgetExceeded { partial: RejectionOutput<T>, budget: u64 },
    #[error(transparent)]
    Engine(#[from] Error),
}

struct Attempt<T> {
    sample: Option<AcceptedSample<T>>,
}

fn draw<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    k: usize,
    factory: &StreamFactory,
    j: u64,
) -> Result<Option<(ParameterVector<T>, SimulatedData<T>)>> {
    let mut rng = factory.stream(Purpose::Rejection, 0, j);
    let theta = sample_prior(model, k, &mut rng)?;
    match simulate(model, &theta, &mut rng) {
        Ok(z) => Ok(Some((theta, z))),
        Err(Error::SimulationFailure(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn attempt<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    y: &ObservedData<T>,
    method: &Method,
    epsilon: T,
    factory: &StreamFactory,
    j: u64,
) -> Result<Attempt<T>> {
    let k = y.num_compartments();
    let Some((theta, z)) = draw(model, k, factory, j)? else {
        return Ok(Attempt { sample: None });
    };
    let criterion = if matches!(method, Method::Vanilla) { Criterion::Identity } else { Criterion::Permutation };
    let best = best_match(y, &z, criterion)?;
    if !within(best.squared, epsilon) {
        return Ok(Attempt { sample: None });
    }
    let base = best.matching.images(k).expect("full matching");
    let (images, weight) = match method {
        Method::Stratified(spec) => {
            let mut rng = factory.stream(Purpose::Stratified, 0, j);
            stratified_choice(spec, y, &z, &base, epsilon, &mut rng)?
        }
        _ => (base, 1.0),
    };
    let aligned_sq: T = images.iter().enumerate().map(|(r, &c)| cost_at(y, &z, r, c)).sum();
    Ok(Attempt {
        sample: Some(AcceptedSample {
            theta: theta.permuted(&images),
            z: z.select(&images),
            distance: aligned_sq.sqrt(),
            weight,
            simulations_used: 0,
            permutation: images,
        }),
    })
}

fn cost_at<T: Real>(y: &ObservedData<T>, z: &SimulatedData<T>, k: usize, m: usize) -> T {
    let w = y.weights()[k];
    w * w * y.compartment(k).iter().zip(z.compartment(m)).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>()
}

/// Stratified estimate of the in-ball permutation count for an accepted
/// `(theta, z)`, and a permutation drawn among the in-ball candidates with
/// probability proportional to their estimator terms.
fn stratified_choice<T: Real, R: Rng + ?Sized>(
    spec: &StratifiedProposal,
    y: &ObservedData<T>,
    z: &SimulatedData<T>,
    base: &[usize],
    epsilon: T,
    rng: &mut R,
) -> Result<(Vec<usize>, f64)> {
    if spec.k() != base.len() {
        return Err(invalid(format!("stratified proposal built for K = {}, data have K = {}", spec.k(), base.len())));
    }
    let cost = cost_matrix(y, z)?;
    let (w, candidates) = spec.estimate(base, rng, |s| {
        let sq: T = s.iter().enumerate().map(|(r, &c)| cost.get(r, c)).sum();
        within(sq, epsilon)
    });
    assert!(w > 0.0, "the base permutation is in the ball and always a candidate");
    let u = rng.random::<f64>() * w;
    let mut acc = 0.0;
    let mut chosen = None;
    for (sigma, term) in &candidates {
        if *term > 0.0 {
            acc += term;
            chosen = Some(sigma);
            if u < acc {
                break;
            }
        }
    }
    Ok((chosen.expect("at least one in-ball candidate").clone(), w))
}

/// Runs the chosen rejection sampler until `n` acceptances or the budget.
pub fn run_rejection<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    y: &ObservedData<T>,
    method: &Method,
    config: &RejectionConfig<T>,
) -> std::result::Result<RejectionOutput<T>, RejectionError<T>> {
    validate(model, y, config.n, config.epsilon)?;
    let k = y.num_compartments() as u64;
    let max_attempts = config.budget / k;
    let factory = StreamFactory::new(config.seed);
    let solves_per_attempt = u64::from(!matches!(method, Method::Vanilla));
    let mut samples = Vec::with_capacity(config.n.min(1 << 16));
    let mut next = 0u64;
    let mut last_accept_calls = 0u64;
    let mut batch = 1024u64;
    while samples.len() < config.n && next < max_attempts {
        let end = (next + batch).min(max_attempts);
        let results: Vec<Attempt<T>> = (next..end)
            .into_par_iter()
            .map(|j| attempt(model, y, method, config.epsilon, &factory, j))
            .collect::<Result<_>>()?;
        for (offset, a) in results.into_iter().enumerate() {
            let j = next + offset as u64;
            if let Some(mut s) = a.sample {
                let calls = (j + 1) * k;
                s.simulations_used = calls - last_accept_calls;
                last_accept_calls = calls;
                samples.push(s);
                if samples.len() == config.n {
                    let attempts = j + 1;
                    return Ok(RejectionOutput {
                        samples,
                        simulations: attempts * k,
                        attempts,
                        assignment_solves: attempts * solves_per_attempt,
                    });
                }
            }
        }
        next = end;
        batch = (batch * 2).min(1 << 16);
    }
    let partial = RejectionOutput {
        samples,
        simulations: next * k,
        attempts: next,
        assignment_solves: next * solves_per_attempt,
    };
    Err(RejectionError::BudgetExceeded { partial, budget: config.budget })
}

pub fn run_vanilla_abc<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    y: &ObservedData<T>,
    config: &RejectionConfig<T>,
) -> std::result::Result<RejectionOutput<T>, RejectionError<T>> {
    run_rejection(model, y, &Method::Vanilla, config)
}

pub fn run_perm_abc<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    y: &ObservedData<T>,
    config: &RejectionConfig<T>,
) -> std::result::Result<RejectionOutput<T>, RejectionError<T>> {
    run_rejection(model, y, &Method::Permutation, config)
}

pub fn run_stratified_perm_abc<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    y: &ObservedData<T>,
    spec: &StratifiedProposal,
    config: &RejectionConfig<T>,
) -> std::result::Result<RejectionOutput<T>, RejectionError<T>> {
    run_rejection(model, y, &Method::Stratified(spec.clone()), config)
}

fn validate<T: Real, M: Model<T> + ?Sized>(model: &M, y: &ObservedData<T>, n: usize, epsilon: T) -> Result<()> {
    if n == 0 {
        return Err(invalid("N must be at least 1"));
    }
    if !(epsilon > T::zero()) {
        return Err(invalid("epsilon must be positive"));
    }
    if y.obs_len() != model.obs_len() {
        return Err(invalid(format!(
            "observed compartments have length {}, model {} simulates {}",
            y.obs_len(),
            model.name(),
            model.obs_len()
        )));
    }
    let probe = ParameterVector { global: vec![T::zero(); model.global_dim()], locals: vec![vec![T::zero(); model.local_dim()]] };
    check_dims(model, &probe)
}

/// Output of a fixed-budget rejection run.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetedOutput<T> {
    /// The `keep` draws closest to `y`, in increasing distance.
    pub samples: Vec<AcceptedSample<T>>,
    /// Achieved tolerance: distance of the `keep`-th closest draw.
    pub epsilon: T,
    pub simulations: u64,
}

/// Spends the whole budget on prior draws and keeps the `keep` closest,
/// which is rejection ABC at the tolerance the budget affords.
pub fn run_budgeted<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    y: &ObservedData<T>,
    method: &Method,
    keep: usize,
    budget: u64,
    seed: u64,
) -> Result<BudgetedOutput<T>> {
    validate(model, y, keep, T::infinity())?;
    let k = y.num_compartments() as u64;
    let attempts = budget / k;
    let factory = StreamFactory::new(seed);
    let mut all: Vec<(u64, AcceptedSample<T>)> = (0..attempts)
        .into_par_iter()
        .map(|j| attempt(model, y, method, T::infinity(), &factory, j).map(|a| a.sample.map(|s| (j, s))))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if all.len() < keep {
        return Err(Error::NotAvailable(format!("budget affords {} draws, {keep} requested", all.len())));
    }
    all.sort_by(|a, b| a.1.distance.partial_cmp(&b.1.distance).expect("finite distances").then(a.0.cmp(&b.0)));
    all.truncate(keep);
    let epsilon = all.last().expect("keep >= 1").1.distance;
    Ok(BudgetedOutput { samples: all.into_iter().map(|(_, s)| s).collect(), epsilon, simulations: attempts * k })
}

/// `eps* = 1/2 min over sigma != Id of d(y, y_sigma)`.
///
/// A non-identity permutation costs the sum of its cycle costs, so the
/// minimum is attained by a single cycle: the minimum-weight directed cycle
/// in the complete graph with edge weights `w_k^2 |y_k - y_j|^2`, found in
/// `O(K^3)` by closing each edge with a shortest return path.
pub fn critical_epsilon<T: Real>(y: &ObservedData<T>) -> Result<T> {
    let k = y.num_compartments();
    if k < 2 {
        return Err(Error::NotAvailable("critical epsilon needs at least two compartments".into()));
    }
    let c = cost_matrix(y, &y.as_simulated())?;
    let mut dist = vec![vec![T::infinity(); k]; k];
    for (u, row) in dist.iter_mut().enumerate() {
        for (v, d) in row.iter_mut().enumerate() {
            if u != v {
                *d = c.get(u, v);
            }
        }
    }
    for w in 0..k {
        for u in 0..k {
            for v in 0..k {
                let via = dist[u][w] + dist[w][v];
                if via < dist[u][v] {
                    dist[u][v] = via;
                }
            }
        }
    }
    let mut best = T::infinity();
    for u in 0..k {
        for v in 0..k {
            if u != v {
                let cyc = c.get(u, v) + dist[v][u];
                if cyc < best {
                    best = cyc;
                }
            }
        }
    }
    Ok(best.sqrt() * crate::scalar::cast(0.5))
}
