//! Cost-sensitive feature acquisition over discrete Bayesian networks using a
//! lattice of irreducible feature subsets to share value-of-information work.

pub mod cli;
pub mod constraints;
pub mod cost;
pub mod fixtures;
pub mod harness;
pub mod inference;
pub mod lattice;
pub mod network;
pub mod policy;
pub mod valuation;

pub use constraints::LatticeError;
pub use cost::CostError;
pub use harness::HarnessError;
pub use inference::InferenceError;
pub use network::NetworkError;
pub use policy::PolicyError;
pub use valuation::ValuationError;
