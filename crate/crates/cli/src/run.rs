//! Building the problem from a configuration and running the sampler.

use std::path::Path;
use std::time::Instant;

use permabc::diagnostics::{unique_particle_rate, TraceRow};
use permabc::ingestion::{
    generate_synthetic, load_epidemic_csv, to_observed_data, Columns, DepartmentFilter, LoadOptions, LoadReport,
    Weighting,
};
use permabc::models::{sample_prior, Model, ParameterVector};
use permabc::rejection::{run_budgeted, run_rejection, Method, RejectionConfig, RejectionError, DEFAULT_BUDGET};
use permabc::smc::{run_smc, Snapshot, SmcStatus};
use permabc::streams::{Purpose, StreamFactory};
use permabc::ObservedData;

use crate::config::{chrono_date, DataSpec, FilterPreset, ModelSpec, RunConfig, Sampler, WeightingSpec};
use crate::{output, CliError};

/// Observed data, model and (for synthetic data) the truth.
pub struct Problem {
    pub model: Box<dyn Model<f64>>,
    pub y: ObservedData<f64>,
    /// Label of each observed compartment.
    pub ids: Vec<String>,
    pub truth: Option<ParameterVector<f64>>,
    pub load_report: Option<LoadReport>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("model", &self.model.name())
            .field("y", &self.y)
            .field("ids", &self.ids)
            .field("truth", &self.truth)
            .finish_non_exhaustive()
    }
}

/// Validates `cfg`, loads or simulates the data and returns the
/// materialised configuration with the problem.
pub fn prepare(cfg: &RunConfig) -> Result<(RunConfig, Problem), CliError> {
    cfg.validate(cfg.declared_k())?;
    let mut cfg = cfg.clone();
    let (y, ids, truth, load_report) = match &cfg.data {
        DataSpec::Synthetic(s) => {
            let model = cfg.model.build()?;
            let mut rng = StreamFactory::new(s.seed).stream(Purpose::Synthetic, 0, 0);
            let mut theta = sample_prior(model.as_ref(), s.k, &mut rng)?;
            if let Some(g) = &s.truth_global {
                theta.global = g.clone();
            }
            if let Some(l) = &s.truth_locals {
                theta.locals = l.clone();
            }
            let ds = generate_synthetic(model.as_ref(), &theta, s.contaminate, &mut rng)?;
            let ids = (1..=s.k).map(|k| k.to_string()).collect();
            (ds.data, ids, Some(ds.truth), None)
        }
        DataSpec::Inline(s) => {
            let weights = s.weights.clone().unwrap_or_else(|| vec![1.0; s.compartments.len()]);
            let y = ObservedData::new(s.compartments.clone(), weights)?;
            (y, (1..=s.compartments.len()).map(|k| k.to_string()).collect(), None, None)
        }
        DataSpec::Csv(c) => {
            let options = LoadOptions {
                columns: Columns {
                    department: c.department_column.clone(),
                    date: c.date_column.clone(),
                    count: c.count_column.clone(),
                    population: c.population_column.clone(),
                },
                date_range: match (&c.date_from, &c.date_to) {
                    (Some(a), Some(b)) => Some((chrono_date(a).expect("validated"), chrono_date(b).expect("validated"))),
                    _ => None,
                },
                filter: DepartmentFilter {
                    mainland_94: c.filter == FilterPreset::Mainland94,
                    include: c.include.clone(),
                    exclude: c.exclude.clone(),
                },
            };
            let (table, report) = load_epidemic_csv(Path::new(&c.path), &options)?;
            let weighting = match c.weighting {
                WeightingSpec::Unit => Weighting::Unit,
                WeightingSpec::PopulationProportional => Weighting::PopulationProportional,
            };
            let y = to_observed_data(&table, weighting)?;
            (y, table.department_ids().to_vec(), None, Some(report))
        }
    };
    let k = y.num_compartments();
    cfg.materialise(k, y.obs_len());
    cfg.validate(Some(k))?;
    let model = cfg.model.build()?;
    if model.obs_len() != y.obs_len() {
        let hint = if matches!(cfg.model, ModelSpec::Sir(_)) { " (set model.horizon_days)" } else { "" };
        return Err(CliError::Config(vec![format!(
            "data compartments have length {}, model {} simulates {}{hint}",
            y.obs_len(),
            model.name(),
            model.obs_len()
        )]));
    }
    Ok((cfg, Problem { model, y, ids, truth, load_report }))
}

/// How a run ended, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Extinction,
    Stall,
    BudgetExceeded,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Extinction => 3,
            Outcome::Stall => 4,
            Outcome::BudgetExceeded => 5,
        }
    }
}

/// One posterior draw, local slot `k` aligned with observed compartment `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub theta: ParameterVector<f64>,
    pub distance: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub status: String,
    pub outcome: Outcome,
    pub samples: Vec<SampleRow>,
    pub trace: Vec<TraceRow>,
    pub snapshots: Vec<Snapshot<f64>>,
    /// Final (or achieved) tolerance.
    pub epsilon: f64,
    pub simulator_calls: u64,
    pub assignment_solves: u64,
    pub runtime_seconds: f64,
}

pub fn execute(cfg: &RunConfig, problem: &Problem) -> Result<RunResult, CliError> {
    let start = Instant::now();
    let model = problem.model.as_ref();
    let y = &problem.y;
    let k = y.num_compartments();
    if !cfg.sampler.is_rejection() {
        let out = run_smc(model, y, &cfg.smc_config())?;
        let outcome = match out.status {
            SmcStatus::Extinction => Outcome::Extinction,
            SmcStatus::Stall => Outcome::Stall,
            SmcStatus::BudgetExhausted if cfg.epsilon.is_some() => Outcome::BudgetExceeded,
            _ => Outcome::Success,
        };
        let samples = out
            .projected
            .into_iter()
            .map(|p| SampleRow { theta: p.theta, distance: p.distance, weight: 1.0 })
            .collect();
        return Ok(RunResult {
            status: format!("{:?}", out.status),
            outcome,
            samples,
            trace: out.trace,
            snapshots: out.snapshots,
            epsilon: out.epsilon,
            simulator_calls: out.simulator_calls,
            assignment_solves: out.assignment_solves,
            runtime_seconds: start.elapsed().as_secs_f64(),
        });
    }

    let method = match cfg.sampler {
        Sampler::Vanilla => Method::Vanilla,
        Sampler::Permabc => Method::Permutation,
        _ => Method::Stratified(cfg.stratified(k)?),
    };
    let solves_per_attempt = u64::from(cfg.sampler != Sampler::Vanilla);
    let (status, outcome, accepted, epsilon, calls, solves) = match cfg.epsilon {
        Some(eps) => {
            let rc = RejectionConfig { n: cfg.n, epsilon: eps, budget: cfg.budget.unwrap_or(DEFAULT_BUDGET), seed: cfg.seed };
            match run_rejection(model, y, &method, &rc) {
                Ok(o) => ("Accepted".to_string(), Outcome::Success, o.samples, eps, o.simulations, o.assignment_solves),
                Err(RejectionError::BudgetExceeded { partial: o, .. }) => {
                    ("BudgetExhausted".into(), Outcome::BudgetExceeded, o.samples, eps, o.simulations, o.assignment_solves)
                }
                Err(RejectionError::Engine(e)) => return Err(e.into()),
            }
        }
        None => {
            let budget = cfg.budget.expect("validated: epsilon or budget");
            let o = run_budgeted(model, y, &method, cfg.n, budget, cfg.seed)?;
            let solves = o.simulations / k as u64 * solves_per_attempt;
            ("BudgetSpent".into(), Outcome::Success, o.samples, o.epsilon, o.simulations, solves)
        }
    };
    let samples: Vec<SampleRow> =
        accepted.into_iter().map(|s| SampleRow { theta: s.theta, distance: s.distance, weight: s.weight }).collect();
    let runtime = start.elapsed().as_secs_f64();
    let trace = vec![TraceRow {
        iteration: 0,
        epsilon,
        m_or_l: None,
        alive: samples.len(),
        unique_rate: unique_particle_rate(samples.iter().map(|s| &s.theta)),
        simulator_calls: calls,
        assignment_solves: solves,
        wall_time_seconds: runtime,
    }];
    Ok(RunResult {
        status,
        outcome,
        samples,
        trace,
        snapshots: Vec::new(),
        epsilon,
        simulator_calls: calls,
        assignment_solves: solves,
        runtime_seconds: runtime,
    })
}

/// Prepares, runs and writes every result file into the configured
/// output directory.
pub fn run_experiment(cfg: &RunConfig) -> Result<(RunConfig, RunResult), CliError> {
    let (cfg, problem) = prepare(cfg)?;
    let result = execute(&cfg, &problem)?;
    output::write_run(Path::new(&cfg.output_dir), &cfg, &problem, &result)?;
    Ok((cfg, result))
}
