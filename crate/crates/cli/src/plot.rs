//! Long-format plot-data tables built from finished run directories.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use permabc::diagnostics::{budget_curve, MethodTrace, TraceRow};

use crate::config::{self, RunConfig};
use crate::output::{parse_header, unwrap_config, Hashes, SCHEMA};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    BudgetCurve,
    MarginalHist,
    OsEvolution,
    MapValues,
}

impl std::str::FromStr for PlotKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "budget-curve" => PlotKind::BudgetCurve,
            "marginal-hist" => PlotKind::MarginalHist,
            "os-evolution" => PlotKind::OsEvolution,
            "map-values" => PlotKind::MapValues,
            other => return Err(CliError::Config(vec![format!("unknown plot kind '{other}'")])),
        })
    }
}

#[derive(Debug, Clone)]
pub struct PlotOptions {
    /// Unique-particle count at which budget curves are read off.
    pub target_unique: usize,
    /// Parameter mapped by `map-values`; defaults to the first derived
    /// quantity, else the first local parameter.
    pub parameter: Option<String>,
    /// Combine runs whose problem hashes differ.
    pub force: bool,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self { target_unique: 1000, parameter: None, force: false }
    }
}

/// A table read back from a run directory.
#[derive(Debug, Clone)]
pub struct Table {
    pub hashes: Hashes,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<usize, CliError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::Io(format!("table has no column '{name}'")))
    }
}

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let first = text.lines().next().unwrap_or_default();
    let hashes =
        parse_header(first).ok_or_else(|| CliError::Io(format!("{}: missing '{SCHEMA}' header", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let columns = rdr.headers().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?.iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(Table { hashes, columns, rows })
}

/// A finished run: its configuration and hashes.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
    pub name: String,
    pub config: RunConfig,
    pub hashes: Hashes,
}

pub fn open_run(path: &Path) -> Result<RunDir, CliError> {
    let file = path.join("config.json");
    let text = std::fs::read_to_string(&file).map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
    let hash = |k: &str| value.get(k).and_then(|v| v.as_str()).map(String::from);
    let (Some(c), Some(p)) = (hash("config_hash"), hash("problem_hash")) else {
        return Err(CliError::Io(format!("{}: not a permabc run configuration", file.display())));
    };
    let config = config::from_value(&unwrap_config(value))?;
    let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(RunDir { path: path.to_path_buf(), name, config, hashes: Hashes { config: c, problem: p } })
}

fn check_compatible(runs: &[RunDir], force: bool) -> Result<(), CliError> {
    let Some(first) = runs.first() else {
        return Err(CliError::Config(vec!["no run directories given".into()]));
    };
    let mismatches: Vec<String> = runs
        .iter()
        .filter(|r| r.hashes.problem != first.hashes.problem)
        .map(|r| {
            format!(
                "{} has problem-hash {} but {} has {}",
                r.path.display(),
                r.hashes.problem,
                first.path.display(),
                first.hashes.problem
            )
        })
        .collect();
    if mismatches.is_empty() || force {
        Ok(())
    } else {
        Err(CliError::Mismatch(mismatches))
    }
}

fn run_table(run: &RunDir, file: &str) -> Result<Table, CliError> {
    let t = read_table(&run.path.join(file))?;
    if t.hashes != run.hashes {
        return Err(CliError::Mismatch(vec![format!(
            "{}: config-hash {} does not match the run's {}",
            run.path.join(file).display(),
            t.hashes.config,
            run.hashes.config
        )]));
    }
    Ok(t)
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, CliError> {
    s.parse().map_err(|_| CliError::Io(format!("cannot parse {what} '{s}'")))
}

fn trace_rows(t: &Table) -> Result<Vec<TraceRow>, CliError> {
    let idx: Vec<usize> = [
        "iteration",
        "epsilon",
        "m_or_l",
        "alive",
        "unique_rate",
        "simulator_calls",
        "assignment_solves",
        "wall_time_seconds",
    ]
    .iter()
    .map(|c| t.column(c))
    .collect::<Result<_, _>>()?;
    t.rows
        .iter()
        .map(|r| {
            Ok(TraceRow {
                iteration: parse(&r[idx[0]], "iteration")?,
                epsilon: parse(&r[idx[1]], "epsilon")?,
                m_or_l: if r[idx[2]].is_empty() { None } else { Some(parse(&r[idx[2]], "m_or_l")?) },
                alive: parse(&r[idx[3]], "alive")?,
                unique_rate: parse(&r[idx[4]], "unique_rate")?,
                simulator_calls: parse(&r[idx[5]], "simulator_calls")?,
                assignment_solves: parse(&r[idx[6]], "assignment_solves")?,
                wall_time_seconds: parse(&r[idx[7]], "wall_time_seconds")?,
            })
        })
        .collect()
}

/// Builds the requested table from the run directories.
pub fn emit(kind: PlotKind, dirs: &[PathBuf], options: &PlotOptions) -> Result<String, CliError> {
    let runs: Vec<RunDir> = dirs.iter().map(|d| open_run(d)).collect::<Result<_, _>>()?;
    check_compatible(&runs, options.force)?;
    let mut out = String::new();
    let problem = if runs.iter().all(|r| r.hashes.problem == runs[0].hashes.problem) {
        runs[0].hashes.problem.clone()
    } else {
        "mixed".into()
    };
    let _ = writeln!(out, "# {SCHEMA} plot={} problem-hash={problem}", kind_name(kind));
    match kind {
        PlotKind::BudgetCurve => {
            let traces = runs
                .iter()
                .map(|r| {
                    Ok(MethodTrace {
                        method: r.config.sampler.name().to_string(),
                        population: r.config.n,
                        rows: trace_rows(&run_table(r, "trace.csv")?)?,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let _ = writeln!(out, "method,simulations,epsilon,complete");
            for b in budget_curve(&traces, options.target_unique) {
                let _ = writeln!(out, "{},{},{},{}", b.method, b.simulations, b.epsilon, b.complete);
            }
        }
        PlotKind::MarginalHist => {
            let _ = writeln!(out, "run,parameter,value,weight");
            for r in &runs {
                let t = run_table(r, "samples.csv")?;
                let wi = t.column("weight")?;
                let di = t.column("distance")?;
                for row in &t.rows {
                    for (j, c) in t.columns.iter().enumerate() {
                        if j != wi && j != di {
                            let _ = writeln!(out, "{},{c},{},{}", r.name, row[j], row[wi]);
                        }
                    }
                }
            }
        }
        PlotKind::OsEvolution => {
            let _ = writeln!(out, "M,parameter,value");
            for r in &runs {
                let t = run_table(r, "os_snapshots.csv")?;
                let (mi, pi, vi) = (t.column("M")?, t.column("parameter")?, t.column("value")?);
                for row in &t.rows {
                    let _ = writeln!(out, "{},{},{}", row[mi], row[pi], row[vi]);
                }
            }
        }
        PlotKind::MapValues => {
            if runs.len() != 1 {
                return Err(CliError::Config(vec!["map-values takes exactly one run directory".into()]));
            }
            let r = &runs[0];
            let samples = run_table(r, "samples.csv")?;
            let slots = run_table(r, "compartments.csv")?;
            let di = slots.column("department_id")?;
            let ids: Vec<String> = slots.rows.iter().map(|row| row[di].clone()).collect();
            let model = r.config.model.build()?;
            let parameter = options
                .parameter
                .clone()
                .or_else(|| model.derived_names().into_iter().next())
                .unwrap_or_else(|| model.local_names()[0].clone());
            let wi = samples.column("weight")?;
            let weights: Vec<f64> = samples.rows.iter().map(|row| parse(&row[wi], "weight")).collect::<Result<_, _>>()?;
            let total: f64 = weights.iter().sum();
            let _ = writeln!(out, "departmentId,posteriorMean");
            for id in &ids {
                let j = samples.column(&format!("{parameter}[{id}]"))?;
                let mut acc = 0.0;
                for (row, w) in samples.rows.iter().zip(&weights) {
                    acc += w * parse::<f64>(&row[j], "value")?;
                }
                let _ = writeln!(out, "{id},{}", acc / total);
            }
        }
    }
    Ok(out)
}

fn kind_name(kind: PlotKind) -> &'static str {
    match kind {
        PlotKind::BudgetCurve => "budget-curve",
        PlotKind::MarginalHist => "marginal-hist",
        PlotKind::OsEvolution => "os-evolution",
        PlotKind::MapValues => "map-values",
    }
}
