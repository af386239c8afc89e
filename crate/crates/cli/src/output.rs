//! Result files. Every table starts with a schema line carrying the config
//! and problem hashes.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::run::{Problem, RunResult, SampleRow};
use crate::CliError;

pub const SCHEMA: &str = "permabc-schema v1";

pub fn header_line(cfg: &RunConfig) -> String {
    format!("# {SCHEMA} config-hash={} problem-hash={}", cfg.config_hash(), cfg.problem_hash())
}

/// Hashes parsed from a schema line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hashes {
    pub config: String,
    pub problem: String,
}

pub fn parse_header(line: &str) -> Option<Hashes> {
    let rest = line.strip_prefix("# ")?.strip_prefix(SCHEMA)?;
    let mut config = None;
    let mut problem = None;
    for field in rest.split_whitespace() {
        if let Some(v) = field.strip_prefix("config-hash=") {
            config = Some(v.to_string());
        } else if let Some(v) = field.strip_prefix("problem-hash=") {
            problem = Some(v.to_string());
        }
    }
    Some(Hashes { config: config?, problem: problem? })
}

/// `config.json` wraps the configuration with its hashes; a wrapped file is
/// accepted as a configuration again.
pub fn unwrap_config(v: Value) -> Value {
    match v {
        Value::Object(mut m) if m.get("schema").and_then(Value::as_str) == Some(SCHEMA) && m.contains_key("config") => {
            m.remove("config").expect("checked")
        }
        other => other,
    }
}

pub fn wrapped_config(cfg: &RunConfig) -> Value {
    json!({
        "schema": SCHEMA,
        "config_hash": cfg.config_hash(),
        "problem_hash": cfg.problem_hash(),
        "config": cfg,
    })
}

/// Column names of the samples table, without `distance` and `weight`.
pub fn parameter_columns(problem: &Problem) -> Vec<String> {
    let m = problem.model.as_ref();
    let mut cols = m.global_names();
    for id in &problem.ids {
        cols.extend(m.local_names().iter().map(|n| format!("{n}[{id}]")));
        cols.extend(m.derived_names().iter().map(|n| format!("{n}[{id}]")));
    }
    cols
}

pub fn parameter_values(problem: &Problem, theta: &permabc::models::ParameterVector<f64>) -> Vec<f64> {
    let m = problem.model.as_ref();
    let mut v = theta.global.clone();
    for local in &theta.locals {
        v.extend_from_slice(local);
        v.extend(m.derived(&theta.global, local));
    }
    v
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_samples(w: &mut impl Write, header: &str, problem: &Problem, samples: &[SampleRow]) -> std::io::Result<()> {
    writeln!(w, "{header}")?;
    let mut cols = parameter_columns(problem);
    cols.extend(["distance".to_string(), "weight".to_string()]);
    writeln!(w, "{}", cols.join(","))?;
    for s in samples {
        let mut row: Vec<String> = parameter_values(problem, &s.theta).iter().map(|x| x.to_string()).collect();
        row.push(s.distance.to_string());
        row.push(s.weight.to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_trace(w: &mut impl Write, header: &str, trace: &[permabc::diagnostics::TraceRow]) -> std::io::Result<()> {
    writeln!(w, "{header}")?;
    writeln!(w, "iteration,epsilon,m_or_l,alive,unique_rate,simulator_calls,assignment_solves,wall_time_seconds")?;
    for r in trace {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.iteration,
            r.epsilon,
            r.m_or_l.map(|m| m.to_string()).unwrap_or_default(),
            r.alive,
            r.unique_rate,
            r.simulator_calls,
            r.assignment_solves,
            r.wall_time_seconds
        )?;
    }
    Ok(())
}

pub fn write_snapshots(w: &mut impl Write, header: &str, problem: &Problem, result: &RunResult) -> std::io::Result<()> {
    writeln!(w, "{header}")?;
    writeln!(w, "iteration,M,epsilon,particle,parameter,value")?;
    let cols = parameter_columns(problem);
    for s in &result.snapshots {
        let m = s.m_or_l.map(|m| m.to_string()).unwrap_or_default();
        for (i, p) in s.particles.iter().enumerate() {
            for (c, v) in cols.iter().zip(parameter_values(problem, &p.theta)) {
                writeln!(w, "{},{m},{},{i},{c},{v}", s.iteration, s.epsilon)?;
            }
        }
    }
    Ok(())
}

/// Weighted mean, sd and 5/50/95% quantiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

pub fn weighted_quantile(sorted: &[(f64, f64)], total: f64, q: f64) -> f64 {
    let mut acc = 0.0;
    for &(x, w) in sorted {
        acc += w;
        if acc >= q * total * (1.0 - 1e-12) {
            return x;
        }
    }
    sorted.last().map_or(f64::NAN, |p| p.0)
}

pub fn summarise(values: &[f64], weights: &[f64]) -> Option<Summary> {
    let total: f64 = weights.iter().sum();
    if values.is_empty() || !(total > 0.0) {
        return None;
    }
    let mean = values.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / total;
    let var = values.iter().zip(weights).map(|(x, w)| w * (x - mean).powi(2)).sum::<f64>() / total;
    let mut sorted: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(Summary {
        mean,
        sd: var.sqrt(),
        q05: weighted_quantile(&sorted, total, 0.05),
        q50: weighted_quantile(&sorted, total, 0.5),
        q95: weighted_quantile(&sorted, total, 0.95),
    })
}

pub fn summary_text(header: &str, cfg: &RunConfig, problem: &Problem, result: &RunResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{header}");
    let _ = writeln!(s, "sampler: {}", cfg.sampler.name());
    let _ = writeln!(s, "model: {}", problem.model.name());
    let _ = writeln!(s, "status: {}", result.status);
    let _ = writeln!(s, "exit_code: {}", result.outcome.exit_code());
    let _ = writeln!(s, "K: {}", problem.y.num_compartments());
    let _ = writeln!(s, "samples: {}", result.samples.len());
    let _ = writeln!(s, "epsilon: {}", result.epsilon);
    let _ = writeln!(s, "simulator_calls: {}", result.simulator_calls);
    let _ = writeln!(s, "assignment_solves: {}", result.assignment_solves);
    let _ = writeln!(s, "runtime_seconds: {:.3}", result.runtime_seconds);
    let _ = writeln!(s);
    let cols = parameter_columns(problem);
    let truth = problem.truth.as_ref().map(|t| parameter_values(problem, t));
    let rows: Vec<Vec<f64>> = result.samples.iter().map(|r| parameter_values(problem, &r.theta)).collect();
    let weights: Vec<f64> = result.samples.iter().map(|r| r.weight).collect();
    let _ = writeln!(s, "{:<16} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}", "parameter", "mean", "sd", "q05", "q50", "q95", "truth");
    for (j, c) in cols.iter().enumerate() {
        let values: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let t = truth.as_ref().map_or("-".to_string(), |t| format!("{:.6}", t[j]));
        match summarise(&values, &weights) {
            Some(m) => {
                let _ = writeln!(
                    s,
                    "{c:<16} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {t:>12}",
                    m.mean, m.sd, m.q05, m.q50, m.q95
                );
            }
            None => {
                let _ = writeln!(s, "{c:<16} {:>12} {:>12} {:>12} {:>12} {:>12} {t:>12}", "-", "-", "-", "-", "-");
            }
        }
    }
    s
}

/// Writes config.json, samples.csv, trace.csv, summary.txt and
/// compartments.csv, plus os_snapshots.csv and load_report.txt when present.
pub fn write_run(dir: &Path, cfg: &RunConfig, problem: &Problem, result: &RunResult) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let header = header_line(cfg);
    let mut w = create(dir, "config.json")?;
    serde_json::to_writer_pretty(&mut w, &wrapped_config(cfg)).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;

    let mut w = create(dir, "samples.csv")?;
    write_samples(&mut w, &header, problem, &result.samples)?;
    w.flush()?;

    let mut w = create(dir, "trace.csv")?;
    write_trace(&mut w, &header, &result.trace)?;
    w.flush()?;

    let mut w = create(dir, "compartments.csv")?;
    writeln!(w, "{header}")?;
    writeln!(w, "slot,department_id")?;
    for (k, id) in problem.ids.iter().enumerate() {
        writeln!(w, "{},{id}", k + 1)?;
    }
    w.flush()?;

    if !result.snapshots.is_empty() {
        let mut w = create(dir, "os_snapshots.csv")?;
        write_snapshots(&mut w, &header, problem, result)?;
        w.flush()?;
    }
    if let Some(r) = &problem.load_report {
        fs::write(dir.join("load_report.txt"), format!("{header}\n{r}"))?;
    }
    fs::write(dir.join("summary.txt"), summary_text(&header, cfg, problem, result))?;
    Ok(())
}
