//! Uniform-in-model least squares.
//!
//! Every nonempty model `M` of at most `k` covariates gets its own least
//! squares fit `β_M(Σ, Γ) = Σ(M)^{-1} Γ(M)`. This crate enumerates those
//! models, computes the sparse error norms that control all of them at once,
//! checks the deterministic inequalities relating them at machine precision,
//! and runs Monte Carlo harnesses for the probabilistic rates under
//! independent and functionally dependent sampling.

pub mod bounds;
pub mod datagen;
pub mod dependence;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod mest;
pub mod models;
pub mod net;
pub mod norms;
pub mod par;
pub mod regression;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::{ModelIndex, SymmetricMatrix};
pub use models::ModelClass;
pub use regression::{Dataset, RegressionPair};
