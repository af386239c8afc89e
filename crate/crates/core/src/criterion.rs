//! Acceptance criteria: plain, permuted, over-sampled and under-matched.

use crate::assignment::{solve_full, solve_rectangular, solve_under_match};
use crate::distance::{cost_matrix, squared_full_distance, Matching, ObservedData, SimulatedData};
use crate::error::{invalid, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// Compartments compared in their given order.
    Identity,
    /// Minimum over permutations of the K compartments.
    Permutation,
    /// Minimum over injections of the K observed into M >= K simulated.
    Injection,
    /// Minimum over matchings of exactly `L` observed to `L` simulated.
    UnderMatch(usize),
}

/// Optimal matching and its squared distance.
#[derive(Debug, Clone, PartialEq)]
pub struct BestMatch<T> {
    pub matching: Matching,
    pub squared: T,
}

pub fn best_match<T: Real>(y: &ObservedData<T>, z: &SimulatedData<T>, criterion: Criterion) -> Result<BestMatch<T>> {
    let k = y.num_compartments();
    let m = z.num_compartments();
    let square = || {
        if m == k {
            Ok(())
        } else {
            Err(invalid(format!("criterion {criterion:?} needs {k} simulated compartments, got {m}")))
        }
    };
    match criterion {
        Criterion::Identity => {
            square()?;
            let matching = Matching::identity(k);
            let squared = squared_full_distance(y, z, &matching)?;
            Ok(BestMatch { matching, squared })
        }
        Criterion::Permutation => {
            square()?;
            let r = solve_full(&cost_matrix(y, z)?)?;
            Ok(BestMatch { matching: r.matching, squared: r.total_cost })
        }
        Criterion::Injection => {
            let r = solve_rectangular(&cost_matrix(y, z)?)?;
            Ok(BestMatch { matching: r.matching, squared: r.total_cost })
        }
        Criterion::UnderMatch(l) => {
            square()?;
            let r = solve_under_match(&cost_matrix(y, z)?, l)?;
            Ok(BestMatch { matching: r.matching, squared: r.total_cost })
        }
    }
}

/// Inclusive ball test on squared distances.
pub fn within<T: Real>(squared: T, epsilon: T) -> bool {
    epsilon.is_infinite() || squared <= epsilon * epsilon
}
