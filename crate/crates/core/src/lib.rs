//! Joint broadcast/unicast resource management for a single cellular base
//! station: broadcast bandwidth, broadcast price and broadcast file order are
//! chosen to raise operator revenue without lowering any user's payoff
//! below what unicast would have given them.
//!
//! The crate is organized bottom-up:
//!
//! - [`demand`]: Zipf popularity, file catalog, aggregate delay tolerance.
//! - [`channel`]: two-region spectral-efficiency model.
//! - [`payoff`]: per-user payoffs, the BC/UC selection policy and the Monte
//!   Carlo estimator of true revenue.
//! - [`scheduler`]: Smith-rule broadcast queue ordering and its brute-force
//!   permutation oracle.
//! - [`optimizer`]: revenue lower bound, closed-form and exact optima,
//!   alternating maximization and revenue gain.
//! - [`scenario`]: experiment configs, unit normalization, sweeps and the
//!   validation battery.
//!
//! Data-parallel loops (delay-tolerance sampling, simulation trials, sweep
//! points, permutation enumeration) go through [`Execution`]. With the
//! `parallel` feature (on by default) they run on rayon; without it, or with
//! [`Execution::Sequential`], they run on the calling thread. Every stream of
//! random numbers is keyed by `(seed, domain, index)`, so both modes produce
//! bit-identical results.

// `!(x > 0.0)` also rejects NaN, which is the point wherever it appears.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod demand;
mod error;
mod exec;
mod numeric;
pub mod optimizer;
pub mod oracle;
pub mod payoff;
pub mod scenario;
pub mod scheduler;
mod seeding;

pub use channel::RateModel;
pub use demand::{DelayThreshold, FileCatalog, FileSpec, ZipfParams};
pub use error::{Error, Result};
pub use exec::Execution;
pub use optimizer::{CellConfig, OptimizationResult};
pub use payoff::{PricePair, Service, SimulationReport};
pub use scheduler::{Schedule, SchedulerKind};
