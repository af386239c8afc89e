use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Result};

/// A coordinate of `theta`: global index, or (observed slot, local index).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    Global(usize),
    Local { slot: usize, coord: usize },
}

/// Closed-form posteriors used as validation oracles.
#[derive(Debug, Clone, PartialEq)]
pub enum TruePosterior {
    /// Independent uniform boxes `[lower[k][c], upper[k][c]]` per local slot.
    Box { lower: Vec<Vec<f64>>, upper: Vec<Vec<f64>> },
    /// Joint Gaussian over `(beta, mu_1, ..., mu_K)` stacked in that order.
    Gaussian { mean: DVector<f64>, cov: DMatrix<f64>, global_dim: usize, local_dim: usize },
}

impl TruePosterior {
    fn gaussian_index(coord: Coordinate, global_dim: usize, local_dim: usize, len: usize) -> Result<usize> {
        let i = match coord {
            Coordinate::Global(i) if i < global_dim => i,
            Coordinate::Local { slot, coord } if coord < local_dim => global_dim + slot * local_dim + coord,
            _ => return Err(invalid(format!("coordinate {coord:?} out of range"))),
        };
        if i >= len {
            return Err(invalid(format!("coordinate {coord:?} out of range")));
        }
        Ok(i)
    }

    pub fn marginal_mean(&self, coord: Coordinate) -> Result<f64> {
        match self {
            TruePosterior::Box { lower, upper } => {
                let (lo, hi) = Self::box_bounds(lower, upper, coord)?;
                Ok(0.5 * (lo + hi))
            }
            TruePosterior::Gaussian { mean, global_dim, local_dim, .. } => {
                Ok(mean[Self::gaussian_index(coord, *global_dim, *local_dim, mean.len())?])
            }
        }
    }

    pub fn marginal_variance(&self, coord: Coordinate) -> Result<f64> {
        match self {
            TruePosterior::Box { lower, upper } => {
                let (lo, hi) = Self::box_bounds(lower, upper, coord)?;
                Ok((hi - lo).powi(2) / 12.0)
            }
            TruePosterior::Gaussian { cov, global_dim, local_dim, mean } => {
                let i = Self::gaussian_index(coord, *global_dim, *local_dim, mean.len())?;
                Ok(cov[(i, i)])
            }
        }
    }

    /// Posterior variance of `sum_i a_i theta_i` (Gaussian only).
    pub fn combination_variance(&self, terms: &[(Coordinate, f64)]) -> Result<f64> {
        match self {
            TruePosterior::Box { .. } => Err(invalid("combination variance needs a Gaussian posterior")),
            TruePosterior::Gaussian { mean, cov, global_dim, local_dim } => {
                let mut a = DVector::zeros(mean.len());
                for &(c, w) in terms {
                    a[Self::gaussian_index(c, *global_dim, *local_dim, mean.len())?] += w;
                }
                Ok((a.transpose() * cov * &a)[(0, 0)])
            }
        }
    }

    pub fn marginal_cdf(&self, coord: Coordinate, x: f64) -> Result<f64> {
        match self {
            TruePosterior::Box { lower, upper } => {
                let (lo, hi) = Self::box_bounds(lower, upper, coord)?;
                Ok(((x - lo) / (hi - lo)).clamp(0.0, 1.0))
            }
            TruePosterior::Gaussian { .. } => {
                let m = self.marginal_mean(coord)?;
                let sd = self.marginal_variance(coord)?.sqrt();
                Ok(Normal::new(m, sd).map_err(|e| invalid(e.to_string()))?.cdf(x))
            }
        }
    }

    fn box_bounds(lower: &[Vec<f64>], upper: &[Vec<f64>], coord: Coordinate) -> Result<(f64, f64)> {
        match coord {
            Coordinate::Local { slot, coord } if slot < lower.len() && coord < lower[slot].len() => {
                Ok((lower[slot][coord], upper[slot][coord]))
            }
            _ => Err(invalid(format!("coordinate {coord:?} out of range"))),
        }
    }
}
