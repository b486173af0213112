//! Oracle battery comparing a synthesized policy with the path-space optimum.

use serde::Serialize;

use crate::chain_model::{MarginalSpec, PriorLaw};
use crate::error::Result;
use crate::path_oracle::{
    enumerate_paths, ipf_project, kl_divergence, markovianity_check, shared_bridges_check, total_variation,
    IpfOptions, MarkovianityReport, SharedBridgesReport,
};
use crate::pipeline::Solution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyTolerances {
    pub tv: f64,
    pub markov: f64,
    pub bridges: f64,
    pub constraints: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        Self {
            tv: 1e-6,
            markov: 1e-6,
            bridges: 1e-6,
            constraints: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub num_paths: usize,
    pub kl_policy: f64,
    pub kl_ipf: f64,
    pub tv_policy_vs_ipf: f64,
    /// Largest deviation of the policy path law from `mu_hat0` and `nu_hat`.
    pub constraint_residual: f64,
    pub ipf_markovianity: MarkovianityReport,
    pub shared_bridges: SharedBridgesReport,
    pub tolerances: VerifyTolerances,
    pub passed: bool,
}

/// Enumerates the prior and the policy on path space, projects the prior by
/// proportional fitting and compares the two optima.
pub fn verify_solution(
    prior: &PriorLaw,
    spec: &MarginalSpec,
    solution: &Solution,
    cap: usize,
    tolerances: VerifyTolerances,
) -> Result<VerifyReport> {
    let q = enumerate_paths(prior.space(), prior.stages(), prior.mu0(), cap)?;
    let policy_law = enumerate_paths(prior.space(), solution.policy.stages(), spec.mu_hat0(), cap)?;
    let ipf = ipf_project(&q, spec.mu_hat0(), spec.nu_hat(), IpfOptions::default())?;

    let n = prior.space().n();
    let init = policy_law.initial_marginal(n);
    let arrivals = policy_law.arrival_masses();
    let constraint_residual = init
        .iter()
        .zip(spec.mu_hat0())
        .chain(arrivals.iter().zip(spec.nu_hat()))
        .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));

    let tv = total_variation(&policy_law, &ipf);
    let markov = markovianity_check(&ipf, tolerances.markov);
    let bridges = shared_bridges_check(&q, &policy_law, tolerances.bridges);
    let passed = tv <= tolerances.tv
        && markov.passed
        && bridges.passed
        && constraint_residual <= tolerances.constraints;
    Ok(VerifyReport {
        num_paths: q.num_paths(),
        kl_policy: kl_divergence(&policy_law, &q),
        kl_ipf: kl_divergence(&ipf, &q),
        tv_policy_vs_ipf: tv,
        constraint_residual,
        ipf_markovianity: markov,
        shared_bridges: bridges,
        tolerances,
        passed,
    })
}
