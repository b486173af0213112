//! Maximum-likelihood Markov policies on finite graphs with absorbing states.
//!
//! Given a prior Markov law, a target initial distribution over transient
//! states and target first-arrival masses `ν̂_j(τ)` at the absorbing states,
//! the solver returns the time-indexed Markov policy whose path law is
//! closest to the prior in relative entropy among all laws meeting the
//! targets. The pipeline is
//!
//! 1. [`expansion::telescopic_expand`]: space-time kernel `[ℬ 𝒜]`;
//! 2. [`sinkhorn::sinkhorn_partial`]: diagonal scalings `D`, `Λ`;
//! 3. [`synthesis::synthesize`]: per-stage kernels `B*_τ`, `A*_τ`.
//!
//! [`path_oracle`] recomputes the optimum by brute force on the explicit
//! path space, [`cost`] adds edge costs (free-energy minimization), and
//! [`simulator`] samples walkers for Monte-Carlo checks.

pub mod chain_model;
pub mod cost;
pub mod error;
pub mod expansion;
pub mod path_oracle;
pub mod pipeline;
pub mod problem;
pub mod simulator;
pub mod sinkhorn;
pub mod synthesis;
pub mod verify;

pub use chain_model::{
    support_feasibility_report, validate_marginals, validate_prior, validate_prior_with, FeasibilityReport,
    MarginalSpec, PriorLaw, StageFactors, StageKernel, StateSpace,
};
pub use cost::{solve_regularized, tilt_prior, EdgeCostSchedule, TiltedPrior};
pub use error::{Error, Result};
pub use expansion::{prior_arrival_distribution, telescopic_expand, ArrivalDistribution, PartitionedMatrix};
pub use path_oracle::{PathLaw, DEFAULT_PATH_CAP};
pub use pipeline::{solve, solve_factors, Solution};
pub use problem::{Problem, ProblemFile};
pub use simulator::{empirical_distance, sample_paths, EmpiricalLaw};
pub use sinkhorn::{classical_sb, sinkhorn_partial, ScalingPair, SinkhornDiagnostics, SinkhornOptions};
pub use synthesis::{induced_marginals, synthesize, Policy};
