//! Run configuration: JSON tree plus overrides, materialised defaults,
//! aggregated validation.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use permabc::models::{GaussianHierarchy, Model, OverParameterized, Sir, UniformToy};
use permabc::permutations::StratifiedProposal;
use permabc::smc::{ScheduleKind, SmcConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    Vanilla,
    Permabc,
    PermabcStrat,
    Smc,
    SmcOs,
    SmcUm,
}

impl Sampler {
    pub fn name(self) -> &'static str {
        match self {
            Sampler::Vanilla => "vanilla",
            Sampler::Permabc => "permabc",
            Sampler::PermabcStrat => "permabc-strat",
            Sampler::Smc => "smc",
            Sampler::SmcOs => "smc-os",
            Sampler::SmcUm => "smc-um",
        }
    }

    pub fn is_rejection(self) -> bool {
        matches!(self, Sampler::Vanilla | Sampler::Permabc | Sampler::PermabcStrat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UniformParams {
    pub lower: f64,
    pub upper: f64,
    pub half_width: f64,
    pub n: usize,
}

impl Default for UniformParams {
    fn default() -> Self {
        let m = UniformToy::default();
        Self { lower: m.lower, upper: m.upper, half_width: m.half_width, n: m.n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianParams {
    pub a: f64,
    pub b: f64,
    pub s: f64,
    pub n: usize,
}

impl Default for GaussianParams {
    fn default() -> Self {
        let m = GaussianHierarchy::default();
        Self { a: m.a, b: m.b, s: m.s, n: m.n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RidgeParams {
    pub global_sd: f64,
    pub local_sd: f64,
    pub noise_sd: f64,
    pub n: usize,
}

impl Default for RidgeParams {
    fn default() -> Self {
        let m = OverParameterized::default();
        Self { global_sd: m.global_sd, local_sd: m.local_sd, noise_sd: m.noise_sd, n: m.n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SirParams {
    pub population: f64,
    /// `null` means 60 days for synthetic data, the table length for CSV data.
    pub horizon_days: Option<usize>,
    pub step: f64,
    pub i0_bounds: [f64; 2],
    pub r_init_bounds: [f64; 2],
    pub delta_bounds: [f64; 2],
    pub r0_bounds: [f64; 2],
    pub noise_sd: f64,
}

impl Default for SirParams {
    fn default() -> Self {
        let m = Sir::default();
        Self {
            population: m.population,
            horizon_days: None,
            step: m.step,
            i0_bounds: m.i0_bounds.into(),
            r_init_bounds: m.r_init_bounds.into(),
            delta_bounds: m.delta_bounds.into(),
            r0_bounds: m.r0_bounds.into(),
            noise_sd: m.noise_sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ModelSpec {
    UniformToy(UniformParams),
    GaussianHierarchy(GaussianParams),
    OverParameterized(RidgeParams),
    Sir(SirParams),
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::GaussianHierarchy(GaussianParams::default())
    }
}

impl ModelSpec {
    pub fn build(&self) -> permabc::Result<Box<dyn Model<f64>>> {
        Ok(match self {
            ModelSpec::UniformToy(p) => Box::new(UniformToy::new(p.lower, p.upper, p.half_width, p.n)?),
            ModelSpec::GaussianHierarchy(p) => Box::new(GaussianHierarchy::new(p.a, p.b, p.s, p.n)?),
            ModelSpec::OverParameterized(p) => Box::new(OverParameterized::new(p.global_sd, p.local_sd, p.noise_sd, p.n)?),
            ModelSpec::Sir(p) => {
                let m = Sir {
                    population: p.population,
                    horizon_days: p.horizon_days.unwrap_or(Sir::default().horizon_days),
                    step: p.step,
                    i0_bounds: p.i0_bounds.into(),
                    r_init_bounds: p.r_init_bounds.into(),
                    delta_bounds: p.delta_bounds.into(),
                    r0_bounds: p.r0_bounds.into(),
                    noise_sd: p.noise_sd,
                };
                m.validate()?;
                Box::new(m)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    /// Compartments whose locals are moved into the prior tails.
    pub contaminate: usize,
    /// Fixed global block of the truth; drawn from the prior when `null`.
    pub truth_global: Option<Vec<f64>>,
    pub truth_locals: Option<Vec<Vec<f64>>>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { k: 10, seed: 1, contaminate: 0, truth_global: None, truth_locals: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FilterPreset {
    #[default]
    All,
    #[serde(rename = "mainland-94")]
    Mainland94,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightingSpec {
    #[default]
    Unit,
    PopulationProportional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSpec {
    pub path: String,
    pub department_column: String,
    pub date_column: String,
    pub count_column: String,
    pub population_column: Option<String>,
    pub filter: FilterPreset,
    pub include: Option<Vec<String>>,
    pub exclude: Vec<String>,
    /// Inclusive ISO dates.
    pub date_from: Option<String>,
    pub date_to: Option<String>,
    pub weighting: WeightingSpec,
}

impl Default for CsvSpec {
    fn default() -> Self {
        Self {
            path: String::new(),
            department_column: "dep".into(),
            date_column: "jour".into(),
            count_column: "incid_hosp".into(),
            population_column: None,
            filter: FilterPreset::All,
            include: None,
            exclude: Vec::new(),
            date_from: None,
            date_to: None,
            weighting: WeightingSpec::Unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct InlineSpec {
    pub compartments: Vec<Vec<f64>>,
    /// Unit weights when `null`.
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DataSpec {
    Synthetic(SyntheticSpec),
    Csv(CsvSpec),
    Inline(InlineSpec),
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub sampler: Sampler,
    pub data: DataSpec,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    /// Rejection tolerance, or the SMC target tolerance.
    pub epsilon: Option<f64>,
    /// OS/UM tolerance overriding the calibration.
    pub fixed_epsilon: Option<f64>,
    pub alpha: f64,
    pub gamma: f64,
    #[serde(rename = "p")]
    pub quantile_p: f64,
    #[serde(rename = "R")]
    pub duplication_r: usize,
    /// Kernel blocks, `min(K, 5)` when `null`.
    #[serde(rename = "H")]
    pub blocks: Option<usize>,
    #[serde(rename = "M0")]
    pub m0: Option<usize>,
    #[serde(rename = "L0")]
    pub l0: Option<usize>,
    pub lambda: f64,
    /// Stratified strata, `min(4, K)` when `null`.
    pub strata: Option<usize>,
    pub perms_per_stratum: Option<Vec<usize>>,
    pub unique_floor: f64,
    pub max_iterations: usize,
    /// Cap on simulator calls.
    pub budget: Option<u64>,
    pub snapshots: bool,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let smc = SmcConfig::<f64>::new(1000, 0, ScheduleKind::EpsilonDescent);
        Self {
            model: ModelSpec::default(),
            sampler: Sampler::Smc,
            data: DataSpec::default(),
            n: smc.n,
            seed: smc.seed,
            epsilon: None,
            fixed_epsilon: None,
            alpha: smc.alpha,
            gamma: smc.gamma,
            quantile_p: smc.quantile_p,
            duplication_r: smc.duplication_r,
            blocks: None,
            m0: None,
            l0: None,
            lambda: 1.0,
            strata: None,
            perms_per_stratum: None,
            unique_floor: smc.unique_floor,
            max_iterations: smc.max_iterations,
            budget: None,
            snapshots: false,
            output_dir: "permabc-out".into(),
        }
    }
}

/// Recursively overlays `over` on `base`; objects merge, anything else
/// replaces.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // switching a tagged variant drops the old variant's fields
                    Some(slot) if slot.is_object() && !tag_changed(slot, &v) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn tag_changed(old: &Value, new: &Value) -> bool {
    ["name", "source"].iter().any(|t| match (old.get(t), new.get(t)) {
        (Some(a), Some(b)) => a != b,
        _ => false,
    })
}

/// Applies `key.path=value`; the value is parsed as JSON, else taken as a
/// string.
pub fn set_path(tree: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(vec![format!("override '{assignment}' is not of the form key=value")]))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut over = value;
    for key in path.split('.').rev() {
        let mut m = Map::new();
        m.insert(key.to_string(), over);
        over = Value::Object(m);
    }
    merge(tree, over);
    Ok(())
}

/// Keys present in `given` but absent from the fully materialised `known`.
fn unknown_keys(given: &Value, known: &Value, prefix: &str, out: &mut Vec<String>) {
    if let (Value::Object(g), Value::Object(k)) = (given, known) {
        for (key, v) in g {
            let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
            match k.get(key) {
                None => out.push(format!("unknown key '{path}'")),
                Some(kv) => unknown_keys(v, kv, &path, out),
            }
        }
    }
}

/// Parses a configuration tree, rejecting unknown keys.
pub fn from_value(tree: &Value) -> Result<RunConfig, CliError> {
    if !tree.is_object() {
        return Err(CliError::Config(vec!["configuration must be a JSON object".into()]));
    }
    let mut errs = Vec::new();
    let parsed: Option<RunConfig> = match serde_json::from_value(tree.clone()) {
        Ok(c) => Some(c),
        Err(e) => {
            errs.push(e.to_string());
            None
        }
    };
    if let Some(cfg) = &parsed {
        let known = serde_json::to_value(cfg).expect("config serialises");
        unknown_keys(tree, &known, "", &mut errs);
    }
    match parsed {
        Some(cfg) if errs.is_empty() => Ok(cfg),
        _ => Err(CliError::Config(errs)),
    }
}

impl RunConfig {
    /// Number of observed compartments when known before loading data.
    pub fn declared_k(&self) -> Option<usize> {
        match &self.data {
            DataSpec::Synthetic(s) => Some(s.k),
            DataSpec::Inline(s) => Some(s.compartments.len()),
            DataSpec::Csv(_) => None,
        }
    }

    /// Fills every `null` that has a default once `K` and the data length
    /// are known.
    pub fn materialise(&mut self, k: usize, obs_len: usize) {
        self.blocks.get_or_insert(k.min(5));
        if self.sampler == Sampler::PermabcStrat {
            let h = *self.strata.get_or_insert(k.min(4));
            self.perms_per_stratum.get_or_insert_with(|| (0..h).map(|i| if i == 0 { 1 } else { 5 }).collect());
        }
        if let ModelSpec::Sir(p) = &mut self.model {
            p.horizon_days.get_or_insert(obs_len);
        }
    }

    pub fn schedule(&self) -> ScheduleKind {
        match self.sampler {
            Sampler::SmcOs => ScheduleKind::OverSampling { m0: self.m0.unwrap_or(0) },
            Sampler::SmcUm => ScheduleKind::UnderMatching { l0: self.l0.unwrap_or(0) },
            _ => ScheduleKind::EpsilonDescent,
        }
    }

    pub fn smc_config(&self) -> SmcConfig<f64> {
        let mut c = SmcConfig::new(self.n, self.seed, self.schedule());
        c.alpha = self.alpha;
        c.gamma = self.gamma;
        c.quantile_p = self.quantile_p;
        c.duplication_r = self.duplication_r;
        c.blocks = self.blocks;
        c.target_epsilon = self.epsilon;
        c.fixed_epsilon = self.fixed_epsilon;
        c.unique_floor = self.unique_floor;
        c.budget = self.budget;
        c.max_iterations = self.max_iterations;
        c.record_snapshots = self.snapshots;
        c
    }

    pub fn stratified(&self, k: usize) -> permabc::Result<StratifiedProposal> {
        let h = self.strata.unwrap_or(k.min(4));
        let counts = self.perms_per_stratum.clone().unwrap_or_else(|| (0..h).map(|i| if i == 0 { 1 } else { 5 }).collect());
        StratifiedProposal::new(k, self.lambda, h, counts)
    }

    /// Aggregated validation; `k` is the compartment count if known.
    pub fn validate(&self, k: Option<usize>) -> Result<(), CliError> {
        let mut errs = Vec::new();
        if self.n == 0 {
            errs.push("N must be at least 1".to_string());
        }
        let model = match self.model.build() {
            Ok(m) => Some(m),
            Err(e) => {
                errs.push(e.to_string());
                None
            }
        };
        if self.sampler.is_rejection() {
            if self.epsilon.is_none() && self.budget.is_none() {
                errs.push(format!("sampler {} needs epsilon or budget", self.sampler.name()));
            }
            if let Some(e) = self.epsilon {
                if !(e > 0.0) {
                    errs.push("epsilon must be positive".into());
                }
            }
        }
        if self.sampler == Sampler::SmcOs && self.m0.is_none() {
            errs.push("sampler smc-os needs M0".into());
        }
        if self.sampler != Sampler::SmcOs && self.m0.is_some() {
            errs.push(format!("M0 is only used by smc-os, not {}", self.sampler.name()));
        }
        if self.sampler == Sampler::SmcUm && self.l0.is_none() {
            errs.push("sampler smc-um needs L0".into());
        }
        if self.sampler != Sampler::SmcUm && self.l0.is_some() {
            errs.push(format!("L0 is only used by smc-um, not {}", self.sampler.name()));
        }
        if self.fixed_epsilon.is_some() && !matches!(self.sampler, Sampler::SmcOs | Sampler::SmcUm) {
            errs.push("fixed_epsilon is only used by smc-os and smc-um".into());
        }
        if self.budget == Some(0) {
            errs.push("budget must be positive".into());
        }
        match &self.data {
            DataSpec::Synthetic(s) => {
                if s.k == 0 {
                    errs.push("data.K must be at least 1".into());
                }
                if s.contaminate > s.k {
                    errs.push(format!("data.contaminate = {} exceeds K = {}", s.contaminate, s.k));
                }
                if let (Some(m), Some(g)) = (&model, &s.truth_global) {
                    if g.len() != m.global_dim() {
                        errs.push(format!("data.truth_global has {} values, model expects {}", g.len(), m.global_dim()));
                    }
                }
                if let (Some(m), Some(l)) = (&model, &s.truth_locals) {
                    if l.len() != s.k || l.iter().any(|b| b.len() != m.local_dim()) {
                        errs.push(format!("data.truth_locals must be {} blocks of {} values", s.k, m.local_dim()));
                    }
                }
            }
            DataSpec::Csv(c) => {
                if c.path.is_empty() {
                    errs.push("data.path is required for CSV data".into());
                }
                for (name, d) in [("date_from", &c.date_from), ("date_to", &c.date_to)] {
                    if let Some(d) = d {
                        if chrono_date(d).is_none() {
                            errs.push(format!("data.{name} '{d}' is not a YYYY-MM-DD date"));
                        }
                    }
                }
                if c.date_from.is_some() != c.date_to.is_some() {
                    errs.push("data.date_from and data.date_to must be given together".into());
                }
            }
            DataSpec::Inline(s) => {
                if s.compartments.is_empty() {
                    errs.push("data.compartments must not be empty".into());
                }
                if let Some(m) = &model {
                    if s.compartments.iter().any(|c| c.len() != m.obs_len()) {
                        errs.push(format!("data.compartments must have length n = {}", m.obs_len()));
                    }
                }
            }
        }
        if let Some(k) = k.filter(|&k| k > 0) {
            if self.sampler == Sampler::PermabcStrat {
                if let Err(e) = self.stratified(k) {
                    errs.push(e.to_string());
                }
            }
            if !self.sampler.is_rejection() {
                if let Err(e) = self.smc_config().validate(k) {
                    errs.push(e.to_string());
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errs))
        }
    }

    /// SHA-256 of the canonical JSON, output directory excluded.
    pub fn config_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serialises");
        v.as_object_mut().expect("object").remove("output_dir");
        digest(&v)
    }

    /// Hash of what defines the inference problem: model and data.
    pub fn problem_hash(&self) -> String {
        let v = serde_json::json!({ "model": self.model, "data": self.data });
        digest(&v)
    }
}

pub(crate) fn chrono_date(s: &str) -> Option<permabc::ingestion::NaiveDate> {
    permabc::ingestion::NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

fn digest(v: &Value) -> String {
    let text = serde_json::to_string(v).expect("value serialises");
    hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
}
