//! Two-sided bounds on the maximum load of balls thrown into bins under an
//! arbitrary distribution, with exact small-instance oracles and a seeded
//! Monte Carlo engine to check them.
//!
//! Everything is controlled by `ρ = m ‖p‖_k / k`:
//!
//! ```text
//! Pr[Bino(m, ‖p‖_k) ≥ k]  ≤  Pr[M ≥ k]  ≤  C(m, k) ‖p‖_k^k
//! ```
//!
//! and `Pr[W ≤ m] = Pr[M ≥ k]` for the waiting time `W` until some bin holds
//! `k` balls.

pub mod bounds;
pub mod check;
pub mod error;
pub mod math;
pub mod numeric;
pub mod oracle;
pub mod sim;
pub mod sweep;

pub use bounds::{sandwich, BoundPair, BoundSource};
pub use error::{Error, Result};
pub use math::{k_norm, rho, validate_distribution, Distribution, ProblemInstance, Rho};
