//! Observed-data loading: departmental admission tables, and synthetic
//! datasets simulated at a known truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

pub use chrono::NaiveDate;
use rand::Rng;

use crate::distance::ObservedData;
use crate::error::{invalid, Error, Result};
use crate::models::{check_dims, simulate, Model, ParameterVector};
use crate::scalar::{cast, Real};
use crate::streams::Stream;

/// Daily counts per department on a contiguous date grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicTable {
    department_ids: Vec<String>,
    dates: Vec<NaiveDate>,
    counts: Vec<Vec<u64>>,
    populations: Option<Vec<u64>>,
}

impl EpidemicTable {
    pub fn new(
        department_ids: Vec<String>,
        dates: Vec<NaiveDate>,
        counts: Vec<Vec<u64>>,
        populations: Option<Vec<u64>>,
    ) -> Result<Self> {
        if department_ids.is_empty() || dates.is_empty() {
            return Err(Error::EmptySelection("table has no departments or no dates".into()));
        }
        if dates.windows(2).any(|w| w[0].succ_opt() != Some(w[1])) {
            return Err(invalid("dates must be daily and contiguous"));
        }
        if counts.len() != department_ids.len() || counts.iter().any(|r| r.len() != dates.len()) {
            return Err(invalid("counts must be one row of length T per department"));
        }
        let unique: BTreeSet<&String> = department_ids.iter().collect();
        if unique.len() != department_ids.len() {
            return Err(invalid("department identifiers must be unique"));
        }
        if let Some(p) = &populations {
            if p.len() != department_ids.len() || p.contains(&0) {
                return Err(invalid("populations must be one positive integer per department"));
            }
        }
        Ok(Self { department_ids, dates, counts, populations })
    }

    pub fn department_ids(&self) -> &[String] {
        &self.department_ids
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn populations(&self) -> Option<&[u64]> {
        self.populations.as_deref()
    }

    pub fn num_departments(&self) -> usize {
        self.department_ids.len()
    }

    pub fn num_days(&self) -> usize {
        self.dates.len()
    }
}

/// Header names of the input columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Columns {
    pub department: String,
    pub date: String,
    pub count: String,
    /// Optional per-row population column, constant within a department.
    pub population: Option<String>,
}

impl Default for Columns {
    fn default() -> Self {
        Self { department: "dep".into(), date: "jour".into(), count: "incid_hosp".into(), population: None }
    }
}

/// Which departments to keep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DepartmentFilter {
    /// Keep only the 94 mainland departments: drops Corsica (2A, 2B) and
    /// overseas codes (971 and above).
    pub mainland_94: bool,
    /// If set, keep only these codes.
    pub include: Option<Vec<String>>,
    pub exclude: Vec<String>,
}

impl DepartmentFilter {
    pub fn mainland() -> Self {
        Self { mainland_94: true, ..Default::default() }
    }

    pub fn keeps(&self, code: &str) -> bool {
        if self.mainland_94 && !is_mainland(code) {
            return false;
        }
        if let Some(inc) = &self.include {
            if !inc.iter().any(|c| c == code) {
                return false;
            }
        }
        !self.exclude.iter().any(|c| c == code)
    }
}

/// Mainland codes are the numeric ones from 01 to 95 (20 split into 2A/2B).
pub fn is_mainland(code: &str) -> bool {
    !code.is_empty() && code.bytes().all(|b| b.is_ascii_digit()) && code.parse::<u32>().is_ok_and(|n| (1..=95).contains(&n) && n != 20)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadOptions {
    pub columns: Columns,
    /// Inclusive date range; defaults to the span of the kept rows.
    pub date_range: Option<(NaiveDate, NaiveDate)>,
    pub filter: DepartmentFilter,
}

/// What the loader did besides copying rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_outside_range: usize,
    pub dropped_departments: Vec<String>,
    /// (department, date) cells absent from the file and filled with 0.
    pub filled: Vec<(String, NaiveDate)>,
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rows_read: {}", self.rows_read)?;
        writeln!(f, "rows_outside_range: {}", self.rows_outside_range)?;
        writeln!(f, "dropped_departments: {}", self.dropped_departments.join(" "))?;
        writeln!(f, "filled_cells: {}", self.filled.len())?;
        for (d, t) in &self.filled {
            writeln!(f, "filled: {d} {t}")?;
        }
        Ok(())
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
}

fn csv_error(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::Row { line: p.line(), message: e.to_string() },
        None => Error::Io(e.to_string()),
    }
}

pub fn load_epidemic_csv(path: impl AsRef<Path>, options: &LoadOptions) -> Result<(EpidemicTable, LoadReport)> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_epidemic_csv(file, options)
}

/// Same as [`load_epidemic_csv`] on any reader.
pub fn read_epidemic_csv<R: std::io::Read>(reader: R, options: &LoadOptions) -> Result<(EpidemicTable, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let cols = &options.columns;
    let i_dep = column(&headers, &cols.department)?;
    let i_date = column(&headers, &cols.date)?;
    let i_count = column(&headers, &cols.count)?;
    let i_pop = cols.population.as_deref().map(|p| column(&headers, p)).transpose()?;

    let mut report = LoadReport::default();
    let mut cells: BTreeMap<String, BTreeMap<NaiveDate, u64>> = BTreeMap::new();
    let mut pops: BTreeMap<String, u64> = BTreeMap::new();
    let mut dropped = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        report.rows_read += 1;
        let row_err = |message: String| Error::Row { line, message };
        let dep = rec[i_dep].trim().to_string();
        let date = NaiveDate::parse_from_str(rec[i_date].trim(), "%Y-%m-%d")
            .map_err(|e| row_err(format!("bad date '{}': {e}", &rec[i_date])))?;
        let count: u64 = rec[i_count]
            .trim()
            .parse()
            .map_err(|e| row_err(format!("bad count '{}': {e}", &rec[i_count])))?;
        let pop = match i_pop {
            Some(i) => match rec[i].trim().parse::<u64>() {
                Ok(p) if p > 0 => Some(p),
                _ => return Err(row_err(format!("bad population '{}'", &rec[i]))),
            },
            None => None,
        };
        if !options.filter.keeps(&dep) {
            dropped.insert(dep);
            continue;
        }
        if let Some((lo, hi)) = options.date_range {
            if date < lo || date > hi {
                report.rows_outside_range += 1;
                continue;
            }
        }
        if let Some(p) = pop {
            if *pops.entry(dep.clone()).or_insert(p) != p {
                return Err(row_err(format!("population of department {dep} changes")));
            }
        }
        if cells.entry(dep.clone()).or_default().insert(date, count).is_some() {
            return Err(row_err(format!("duplicate entry for department {dep} on {date}")));
        }
    }
    report.dropped_departments = dropped.into_iter().collect();
    if cells.is_empty() {
        return Err(Error::EmptySelection("no rows left after filtering".into()));
    }
    let (first, last) = match options.date_range {
        Some(r) => r,
        None => {
            let all = cells.values().flat_map(|m| m.keys());
            (*all.clone().min().expect("non-empty"), *all.max().expect("non-empty"))
        }
    };
    let dates: Vec<NaiveDate> = first.iter_days().take_while(|d| *d <= last).collect();
    let mut ids = Vec::new();
    let mut counts = Vec::new();
    for (dep, by_date) in cells {
        let row = dates
            .iter()
            .map(|d| {
                by_date.get(d).copied().unwrap_or_else(|| {
                    report.filled.push((dep.clone(), *d));
                    0
                })
            })
            .collect();
        counts.push(row);
        ids.push(dep);
    }
    let populations = i_pop.map(|_| ids.iter().map(|d| pops[d]).collect());
    Ok((EpidemicTable::new(ids, dates, counts, populations)?, report))
}

/// Long-format CSV, one row per (department, date), readable by the loader.
pub fn write_epidemic_csv<W: std::io::Write>(table: &EpidemicTable, columns: &Columns, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut header = vec![columns.department.as_str(), columns.date.as_str(), columns.count.as_str()];
    let pop_col = match (&columns.population, &table.populations) {
        (Some(c), Some(_)) => Some(c.as_str()),
        _ => None,
    };
    header.extend(pop_col);
    w.write_record(&header).map_err(io)?;
    for (k, dep) in table.department_ids.iter().enumerate() {
        for (t, date) in table.dates.iter().enumerate() {
            let mut rec = vec![dep.clone(), date.format("%Y-%m-%d").to_string(), table.counts[k][t].to_string()];
            if pop_col.is_some() {
                rec.push(table.populations.as_ref().expect("checked")[k].to_string());
            }
            w.write_record(&rec).map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Unit,
    /// `w_k` proportional to population, normalised to mean 1.
    PopulationProportional,
}

/// Compartment `k` is department `k`'s count vector.
///
/// Counts are converted exactly as long as they fit the mantissa of `T`.
pub fn to_observed_data<T: Real>(table: &EpidemicTable, weighting: Weighting) -> Result<ObservedData<T>> {
    let compartments = table.counts.iter().map(|r| r.iter().map(|&c| cast::<T>(c as f64)).collect()).collect();
    let weights = match weighting {
        Weighting::Unit => vec![T::one(); table.num_departments()],
        Weighting::PopulationProportional => {
            let pops = table.populations.as_ref().ok_or_else(|| {
                Error::Config("population-proportional weights need a population column".into())
            })?;
            let mean = pops.iter().map(|&p| p as f64).sum::<f64>() / pops.len() as f64;
            pops.iter().map(|&p| cast(p as f64 / mean)).collect()
        }
    };
    ObservedData::new(compartments, weights)
}

/// A simulated dataset together with the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset<T> {
    pub data: ObservedData<T>,
    pub truth: ParameterVector<T>,
    /// Compartments whose local parameters were moved into the prior tails.
    pub contaminated: Vec<usize>,
}

/// Tail mass on each side used for contamination.
pub const TAIL_MASS: f64 = 0.001;

/// Simulates one dataset at `truth`. The last `contaminate` compartments
/// have every local coordinate redrawn from the prior beyond the 0.1% or
/// 99.9% quantile (side chosen at random).
pub fn generate_synthetic<T: Real, M: Model<T> + ?Sized>(
    model: &M,
    truth: &ParameterVector<T>,
    contaminate: usize,
    rng: &mut Stream,
) -> Result<SyntheticDataset<T>> {
    check_dims(model, truth)?;
    let k = truth.num_locals();
    if contaminate > k {
        return Err(invalid(format!("cannot contaminate {contaminate} of {k} compartments")));
    }
    let mut theta = truth.clone();
    let contaminated: Vec<usize> = (k - contaminate..k).collect();
    for &m in &contaminated {
        for (c, x) in theta.locals[m].iter_mut().enumerate() {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            let p = if rng.random::<bool>() { 1.0 - TAIL_MASS * u } else { TAIL_MASS * u };
            let q = model.local_prior_quantile(c, p).ok_or_else(|| {
                Error::NotAvailable(format!("model {} has no local prior quantile", model.name()))
            })?;
            *x = cast(q);
        }
    }
    let z = simulate(model, &theta, rng)?;
    Ok(SyntheticDataset { data: ObservedData::with_unit_weights(z.into_compartments())?, truth: theta, contaminated })
}
