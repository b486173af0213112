//! End-to-end solve: expand, scale, synthesize.

use serde::Serialize;

use crate::chain_model::{MarginalSpec, PriorLaw, StageFactors, StateSpace};
use crate::error::{Error, Result};
use crate::expansion::{telescopic_expand, PartitionedMatrix};
use crate::sinkhorn::{sinkhorn_partial_run, ScalingPair, SinkhornDiagnostics, SinkhornOptions};
use crate::synthesis::{synthesize_factors, Policy};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub expansion: PartitionedMatrix,
    pub scalings: ScalingPair,
    pub diagnostics: SinkhornDiagnostics,
    pub policy: Policy,
    pub options: SinkhornOptions,
}

/// Solves the first-arrival bridge for a validated prior.
pub fn solve(prior: &PriorLaw, spec: &MarginalSpec, opts: SinkhornOptions) -> Result<Solution> {
    solve_factors(prior.space(), prior.stages(), spec, opts)
}

/// Solves on arbitrary nonnegative stage factors; the scalings absorb any
/// lack of normalization.
pub fn solve_factors<S: AsRef<StageFactors>>(
    space: &StateSpace,
    stages: &[S],
    spec: &MarginalSpec,
    opts: SinkhornOptions,
) -> Result<Solution> {
    if spec.horizon() != stages.len() {
        return Err(Error::DimensionMismatch {
            field: "nu_hat".into(),
            expected: format!("{} columns (the horizon)", stages.len()),
            got: spec.horizon().to_string(),
        });
    }
    let expansion = telescopic_expand(stages);
    let run = sinkhorn_partial_run(&expansion, spec.mu_hat0(), &spec.nu_hat_flat(), opts)?;
    if !run.diagnostics.converged {
        return Err(Error::NotConverged {
            iterations: run.diagnostics.iterations,
            residual: run.diagnostics.final_residual,
        });
    }
    let policy = synthesize_factors(space, stages, &run.scalings)?;
    Ok(Solution {
        expansion,
        scalings: run.scalings,
        diagnostics: run.diagnostics,
        policy,
        options: opts,
    })
}
