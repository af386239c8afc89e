//! Population metrics, Kolmogorov-Smirnov tests and budget curves.

use std::collections::HashSet;

use crate::error::{invalid, Error, Result};
use crate::models::ParameterVector;
use crate::scalar::Real;

/// Minimum sample size per side for KS p-values.
pub const KS_MIN_SAMPLES: usize = 20;

/// One row per SMC iteration (or one row for a rejection run).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub epsilon: f64,
    /// Current `M_t` (over-sampling) or `L_t` (under-matching).
    pub m_or_l: Option<usize>,
    pub alive: usize,
    pub unique_rate: f64,
    pub simulator_calls: u64,
    pub assignment_solves: u64,
    pub wall_time_seconds: f64,
}

/// Fraction of bitwise-distinct parameter vectors.
pub fn unique_particle_rate<'a, T: Real>(population: impl IntoIterator<Item = &'a ParameterVector<T>>) -> f64 {
    let mut seen = HashSet::new();
    let mut total = 0usize;
    for theta in population {
        seen.insert(theta.bits());
        total += 1;
    }
    if total == 0 {
        return 0.0;
    }
    seen.len() as f64 / total as f64
}

/// `(sum w)^2 / sum w^2`.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(invalid("weights must be finite and nonnegative"));
    }
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        return Err(Error::NotAvailable("ESS of all-zero weights is undefined".into()));
    }
    Ok(s * s / s2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| x.is_nan()) {
        return Err(invalid("samples contain NaN"));
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

/// Two-sample KS statistic `sup |F_a - F_b|`.
pub fn ks_distance_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("KS distance needs nonempty samples"));
    }
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// One-sample KS statistic against an exact CDF.
pub fn ks_distance_one_sample(a: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if a.is_empty() {
        return Err(invalid("KS distance needs a nonempty sample"));
    }
    let a = sorted(a)?;
    let n = a.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in a.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(d)
}

fn p_value(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_survival((s + 0.12 + 0.11 / s) * d)
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.len() < KS_MIN_SAMPLES || b.len() < KS_MIN_SAMPLES {
        return Err(Error::NotAvailable(format!("KS p-value needs at least {KS_MIN_SAMPLES} samples per side")));
    }
    let d = ks_distance_two_sample(a, b)?;
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    Ok(KsResult { statistic: d, p_value: p_value(d, ne) })
}

pub fn ks_one_sample(a: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if a.len() < KS_MIN_SAMPLES {
        return Err(Error::NotAvailable(format!("KS p-value needs at least {KS_MIN_SAMPLES} samples")));
    }
    let d = ks_distance_one_sample(a, cdf)?;
    Ok(KsResult { statistic: d, p_value: p_value(d, a.len() as f64) })
}

/// Trace of one method for budget-curve extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodTrace {
    pub method: String,
    pub population: usize,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetRow {
    pub method: String,
    pub simulations: f64,
    pub epsilon: f64,
    pub complete: bool,
}

/// Simulations and tolerance at the point where the unique-particle count
/// falls to `target_unique`, interpolated linearly between trace rows.
pub fn budget_curve(traces: &[MethodTrace], target_unique: usize) -> Vec<BudgetRow> {
    traces.iter().map(|t| budget_point(t, target_unique as f64)).collect()
}

fn budget_point(trace: &MethodTrace, target: f64) -> BudgetRow {
    let incomplete = |sims: f64, eps: f64| BudgetRow {
        method: trace.method.clone(),
        simulations: sims,
        epsilon: eps,
        complete: false,
    };
    let unique = |r: &TraceRow| r.unique_rate * trace.population as f64;
    let Some(last) = trace.rows.last() else {
        return incomplete(f64::NAN, f64::NAN);
    };
    if trace.rows.iter().all(|r| unique(r) > target + 1e-9) || unique(&trace.rows[0]) < target - 1e-9 {
        return incomplete(last.simulator_calls as f64, last.epsilon);
    }
    let idx = trace.rows.iter().position(|r| unique(r) <= target + 1e-9).expect("checked above");
    let cur = &trace.rows[idx];
    let (sims, eps) = if idx == 0 || (unique(cur) - target).abs() < 1e-9 {
        (cur.simulator_calls as f64, cur.epsilon)
    } else {
        let prev = &trace.rows[idx - 1];
        let t = (unique(prev) - target) / (unique(prev) - unique(cur));
        let lerp = |a: f64, b: f64| a + t * (b - a);
        (lerp(prev.simulator_calls as f64, cur.simulator_calls as f64), lerp(prev.epsilon, cur.epsilon))
    };
    BudgetRow { method: trace.method.clone(), simulations: sims, epsilon: eps, complete: true }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pv(x: f64) -> ParameterVector<f64> {
        ParameterVector { global: vec![x], locals: vec![vec![0.0]] }
    }

    #[test]
    fn unique_rate() {
        let (a, b) = (pv(1.0), pv(2.0));
        assert_eq!(unique_particle_rate([&a, &b]), 1.0);
        assert!((unique_particle_rate([&a, &a, &b]) - 2.0 / 3.0).abs() < 1e-15);
        // -0.0 and 0.0 differ bitwise
        assert_eq!(unique_particle_rate([&pv(0.0), &pv(-0.0)]), 1.0);
    }

    #[test]
    fn ess_examples() {
        assert_eq!(effective_sample_size(&[1.0; 7]).unwrap(), 7.0);
        assert_eq!(effective_sample_size(&[1.0, 0.0, 1.0, 1.0, 0.0]).unwrap(), 3.0);
        assert!((effective_sample_size(&[1.0, 3.0]).unwrap() - 1.6).abs() < 1e-15);
        assert!(effective_sample_size(&[0.0, 0.0]).is_err());
        assert!(effective_sample_size(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn ks_identical_and_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
        let b: Vec<f64> = (0..1000).map(|_| 0.5 + rng.random::<f64>()).collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value < 1e-6);
        assert!(matches!(ks_two_sample(&a[..10], &b), Err(Error::NotAvailable(_))));
    }

    #[test]
    fn ks_one_sample_is_calibrated() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let reps = 200;
        let mut passes = 0;
        for _ in 0..reps {
            let a: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
            if ks_one_sample(&a, |x| x.clamp(0.0, 1.0)).unwrap().p_value > 0.01 {
                passes += 1;
            }
        }
        assert!(passes as f64 >= 0.98 * reps as f64, "{passes}/{reps}");
    }

    #[test]
    fn kolmogorov_tail_values() {
        // reference values of the Kolmogorov distribution
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn two_sample_statistic_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a: Vec<f64> = (0..30).map(|_| (rng.random::<f64>() * 10.0).floor()).collect();
            let b: Vec<f64> = (0..17).map(|_| (rng.random::<f64>() * 10.0).floor()).collect();
            let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
            let brute = a.iter().chain(&b).map(|&x| (ecdf(&a, x) - ecdf(&b, x)).abs()).fold(0.0, f64::max);
            assert!((ks_distance_two_sample(&a, &b).unwrap() - brute).abs() < 1e-12);
        }
    }

    fn row(it: usize, eps: f64, rate: f64, sims: u64) -> TraceRow {
        TraceRow {
            iteration: it,
            epsilon: eps,
            m_or_l: None,
            alive: 100,
            unique_rate: rate,
            simulator_calls: sims,
            assignment_solves: sims,
            wall_time_seconds: 0.0,
        }
    }

    #[test]
    fn budget_rows() {
        let vanilla = MethodTrace { method: "vanilla".into(), population: 1000, rows: vec![row(0, 0.5, 1.0, 1_000_000)] };
        let smc = MethodTrace {
            method: "smc".into(),
            population: 2000,
            rows: vec![row(0, 9.0, 1.0, 2000), row(1, 4.0, 0.7, 6000), row(2, 2.0, 0.3, 10_000)],
        };
        let empty = MethodTrace { method: "none".into(), population: 10, rows: vec![] };
        let rows = budget_curve(&[vanilla, smc, empty], 1000);
        assert_eq!(rows[0], BudgetRow { method: "vanilla".into(), simulations: 1e6, epsilon: 0.5, complete: true });
        // unique count 1400 -> 600 between rows 1 and 2; 1000 is halfway
        assert!(rows[1].complete);
        assert!((rows[1].simulations - 8000.0).abs() < 1e-9);
        assert!((rows[1].epsilon - 3.0).abs() < 1e-9);
        assert!(!rows[2].complete);
    }
}
