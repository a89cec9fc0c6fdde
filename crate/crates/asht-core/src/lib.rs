//! Active sequential hypothesis testing: instance model, partially and
//! fully adaptive policies, comparison baselines, a deterministic
//! Monte-Carlo replication engine, and the brute-force/closed-form oracle
//! suite that backs the acceptance checks.

pub mod bench;
pub mod engine;
pub mod error;
pub mod family;
pub mod instance;
pub mod oracles;
pub mod policy;
pub mod posterior;
pub mod ranking;
pub mod report;
pub mod rng;
pub mod simplex;
pub mod verify;

/// Scalar type used throughout the simulator. The numeric kernels
/// ([`family::bernoulli_kl`], [`simplex::solve`]) stay generic; everything
/// touching sampling, serialization, or tolerances pins this alias.
pub type Real = f64;

pub use error::{Error, Result};
pub use family::{Divergence, OutcomeFamily};
pub use instance::{
    generate_synthetic, load_mutation_table, load_mutation_table_path, uniform_instance, GenMode,
    Instance, SeparationReport,
};
pub use posterior::PosteriorState;
