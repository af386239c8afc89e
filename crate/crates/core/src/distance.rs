//! Weighted compartment-wise distances between observed and simulated data.
//!
//! The squared distance between an observed dataset `y` (K compartments) and
//! a simulated dataset `z` (M compartments) under a matching of observed to
//! simulated indices is `sum over matched (k, m) of w_k^2 * |y_k - z_m|^2`.
//! All internal comparisons use the squared form; square roots are only taken
//! by the `*_distance` helpers.

use crate::assignment::CostMatrix;
use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Observed compartments with their per-compartment weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData<T> {
    compartments: Vec<Vec<T>>,
    weights: Vec<T>,
}

impl<T: Real> ObservedData<T> {
    pub fn new(compartments: Vec<Vec<T>>, weights: Vec<T>) -> Result<Self> {
        if compartments.is_empty() {
            return Err(invalid("observed data needs at least one compartment"));
        }
        let n = compartments[0].len();
        if n == 0 {
            return Err(invalid("observed compartments must be non-empty"));
        }
        if let Some(k) = compartments.iter().position(|c| c.len() != n) {
            return Err(invalid(format!(
                "compartment {k} has length {} but compartment 0 has length {n}",
                compartments[k].len()
            )));
        }
        if weights.len() != compartments.len() {
            return Err(invalid(format!(
                "{} weights supplied for {} compartments",
                weights.len(),
                compartments.len()
            )));
        }
        if let Some(k) = weights.iter().position(|w| !(w.is_finite() && *w > T::zero())) {
            return Err(invalid(format!("weight {k} must be finite and positive")));
        }
        Ok(Self { compartments, weights })
    }

    /// Observed data with `w_k = 1` for every compartment.
    pub fn with_unit_weights(compartments: Vec<Vec<T>>) -> Result<Self> {
        let k = compartments.len();
        Self::new(compartments, vec![T::one(); k])
    }

    pub fn num_compartments(&self) -> usize {
        self.compartments.len()
    }

    pub fn obs_len(&self) -> usize {
        self.compartments[0].len()
    }

    pub fn compartments(&self) -> &[Vec<T>] {
        &self.compartments
    }

    pub fn compartment(&self, k: usize) -> &[T] {
        &self.compartments[k]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// The observed data reordered so that compartment `k` of the result is
    /// compartment `perm[k]` of `self` (weights travel with their compartment).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            compartments: perm.iter().map(|&p| self.compartments[p].clone()).collect(),
            weights: perm.iter().map(|&p| self.weights[p]).collect(),
        }
    }

    /// The observed compartments viewed as a simulated dataset.
    pub fn as_simulated(&self) -> SimulatedData<T> {
        SimulatedData { compartments: self.compartments.clone() }
    }
}

/// Simulated compartments; `M` may exceed the observed `K` when over-sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData<T> {
    compartments: Vec<Vec<T>>,
}

impl<T: Real> SimulatedData<T> {
    pub fn new(compartments: Vec<Vec<T>>) -> Result<Self> {
        if compartments.is_empty() {
            return Err(invalid("simulated data needs at least one compartment"));
        }
        Ok(Self { compartments })
    }

    pub fn num_compartments(&self) -> usize {
        self.compartments.len()
    }

    pub fn compartments(&self) -> &[Vec<T>] {
        &self.compartments
    }

    pub fn compartment(&self, m: usize) -> &[T] {
        &self.compartments[m]
    }

    pub(crate) fn compartment_mut(&mut self, m: usize) -> &mut Vec<T> {
        &mut self.compartments[m]
    }

    pub fn into_compartments(self) -> Vec<Vec<T>> {
        self.compartments
    }

    /// Keeps only the listed compartments, in the listed order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self { compartments: indices.iter().map(|&i| self.compartments[i].clone()).collect() }
    }
}

/// An injection from observed compartment indices into simulated ones,
/// stored as `(observed, simulated)` pairs sorted by observed index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Matching {
    pairs: Vec<(usize, usize)>,
}

impl Matching {
    pub fn new(mut pairs: Vec<(usize, usize)>) -> Result<Self> {
        pairs.sort_unstable();
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(invalid(format!("observed index {} matched twice", w[0].0)));
            }
        }
        let mut sims: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        sims.sort_unstable();
        if let Some(w) = sims.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid(format!("simulated index {} matched twice", w[0])));
        }
        Ok(Self { pairs })
    }

    pub fn identity(k: usize) -> Self {
        Self { pairs: (0..k).map(|i| (i, i)).collect() }
    }

    /// Full matching sending observed `k` to simulated `images[k]`.
    pub fn from_images(images: &[usize]) -> Result<Self> {
        Self::new(images.iter().copied().enumerate().collect())
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Simulated index matched to observed compartment `k`, if any.
    pub fn simulated_for(&self, k: usize) -> Option<usize> {
        self.pairs.binary_search_by_key(&k, |p| p.0).ok().map(|i| self.pairs[i].1)
    }

    /// Observed index matched to simulated compartment `m`, if any.
    pub fn observed_for(&self, m: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.1 == m).map(|p| p.0)
    }

    /// Images `sigma(0..k)` when this is a full matching of `k` observed
    /// compartments.
    pub fn images(&self, k: usize) -> Option<Vec<usize>> {
        if self.pairs.len() != k || self.pairs.iter().enumerate().any(|(i, p)| p.0 != i) {
            return None;
        }
        Some(self.pairs.iter().map(|p| p.1).collect())
    }

    pub fn is_full(&self, k: usize) -> bool {
        self.pairs.len() == k && self.pairs.iter().enumerate().all(|(i, p)| p.0 == i)
    }

    /// Simulated indices that appear in the matching.
    pub fn simulated_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().map(|p| p.1)
    }
}

fn squared_norm_diff<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn check_pairs<T: Real>(y: &ObservedData<T>, z: &SimulatedData<T>, matching: &Matching) -> Result<()> {
    for &(k, m) in matching.pairs() {
        if k >= y.num_compartments() {
            return Err(invalid(format!("observed index {k} out of range")));
        }
        if m >= z.num_compartments() {
            return Err(invalid(format!("simulated index {m} out of range")));
        }
        if y.compartment(k).len() != z.compartment(m).len() {
            return Err(invalid(format!(
                "dimension mismatch: observed {k} has length {}, simulated {m} has length {}",
                y.compartment(k).len(),
                z.compartment(m).len()
            )));
        }
    }
    Ok(())
}

/// Squared distance restricted to the matched pairs.
pub fn squared_restricted_distance<T: Real>(
    y: &ObservedData<T>,
    z: &SimulatedData<T>,
    matching: &Matching,
) -> Result<T> {
    check_pairs(y, z, matching)?;
    Ok(matching
        .pairs()
        .iter()
        .map(|&(k, m)| {
            let w = y.weights()[k];
            w * w * squared_norm_diff(y.compartment(k), z.compartment(m))
        })
        .sum())
}

pub fn restricted_distance<T: Real>(y: &ObservedData<T>, z: &SimulatedData<T>, matching: &Matching) -> Result<T> {
    squared_restricted_distance(y, z, matching).map(|d| d.sqrt())
}

/// Squared distance under a full matching of all K observed compartments.
pub fn squared_full_distance<T: Real>(y: &ObservedData<T>, z: &SimulatedData<T>, sigma: &Matching) -> Result<T> {
    if !sigma.is_full(y.num_compartments()) {
        return Err(invalid(format!(
            "full distance needs a matching of all {} observed compartments, got {} pairs",
            y.num_compartments(),
            sigma.len()
        )));
    }
    squared_restricted_distance(y, z, sigma)
}

pub fn full_distance<T: Real>(y: &ObservedData<T>, z: &SimulatedData<T>, sigma: &Matching) -> Result<T> {
    squared_full_distance(y, z, sigma).map(|d| d.sqrt())
}

/// K x M matrix with entry `(k, m) = w_k^2 * |y_k - z_m|^2`.
pub fn cost_matrix<T: Real>(y: &ObservedData<T>, z: &SimulatedData<T>) -> Result<CostMatrix<T>> {
    let n = y.obs_len();
    if let Some(m) = z.compartments().iter().position(|c| c.len() != n) {
        return Err(invalid(format!(
            "dimension mismatch: simulated {m} has length {}, observed length is {n}",
            z.compartment(m).len()
        )));
    }
    let rows = y.num_compartments();
    let cols = z.num_compartments();
    let mut data = Vec::with_capacity(rows * cols);
    for k in 0..rows {
        let w = y.weights()[k];
        let w2 = w * w;
        for m in 0..cols {
            data.push(w2 * squared_norm_diff(y.compartment(k), z.compartment(m)));
        }
    }
    CostMatrix::new(rows, cols, data)
}
