//! Throughput-optimal power allocation for a two-hop decode-and-forward relay
//! in which the source and the relay harvest RF energy from each other.
//!
//! * [`model`]: system parameters, schedules, feasibility, regimes, and the
//!   data/supplement decomposition.
//! * [`convex`]: a reference interior-point solver and the program builders.
//! * [`closed_form`]: regime-specific solvers and structural verifiers.
//! * [`report`]: the result type shared by all solvers.
//! * [`oracle`]: brute-force grid search used as ground truth.
//! * [`baselines`]: source-only and relay-only harvesting references.
//! * [`cli`]: the `relay-eh` command line.

pub mod baselines;
pub mod cli;
pub mod closed_form;
pub mod convex;
pub mod error;
pub mod model;
pub mod oracle;
pub mod report;

pub use error::{Error, Result};
