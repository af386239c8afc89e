pub mod assignment;
pub mod criterion;
pub mod diagnostics;
pub mod distance;
pub mod error;
pub mod ingestion;
pub mod models;
pub mod permutations;
pub mod rejection;
pub mod scalar;
pub mod smc;
pub mod streams;

pub use assignment::{solve_full, solve_rectangular, solve_under_match, AssignmentResult, CostMatrix};
pub use distance::{Matching, ObservedData, SimulatedData};
pub use error::{Error, Result};
pub use scalar::{Cost, Real};

pub type ObservedDataF64 = ObservedData<f64>;
pub type ObservedDataF32 = ObservedData<f32>;
pub type SimulatedDataF64 = SimulatedData<f64>;
pub type SimulatedDataF32 = SimulatedData<f32>;
pub type CostMatrixF64 = CostMatrix<f64>;
pub type CostMatrixF32 = CostMatrix<f32>;
