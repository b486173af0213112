//! State space, prior Markov law and marginal targets.
//!
//! Every matrix uses the block layout of the partitioned kernel
//! `[I 0; B A]`: absorbing states come first, transient states second. The
//! identity block on absorbing rows is implicit and never stored, so a stage
//! is just the pair `(B, A)` with `B` of shape `n × m` (transient → absorbing)
//! and `A` of shape `n × n` (transient → transient).

use std::collections::HashSet;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion;

/// Tolerance on row sums and total masses accepted by validation.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Labeled partition of the vertices into absorbing and transient states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    absorbing: Vec<String>,
    transient: Vec<String>,
}

impl StateSpace {
    pub fn new(absorbing: Vec<String>, transient: Vec<String>) -> Result<Self> {
        if absorbing.is_empty() {
            return Err(Error::EmptyStateSet("absorbing states"));
        }
        if transient.is_empty() {
            return Err(Error::EmptyStateSet("transient states"));
        }
        let mut seen = HashSet::new();
        for label in absorbing.iter().chain(transient.iter()) {
            if !seen.insert(label.as_str()) {
                return Err(Error::DuplicateLabel(label.clone()));
            }
        }
        Ok(Self {
            absorbing,
            transient,
        })
    }

    /// Space with generated labels `a0..`, `t0..`; handy for tests and synthetic instances.
    pub fn with_sizes(m: usize, n: usize) -> Result<Self> {
        Self::new(
            (0..m).map(|j| format!("a{j}")).collect(),
            (0..n).map(|i| format!("t{i}")).collect(),
        )
    }

    /// Number of absorbing states.
    pub fn m(&self) -> usize {
        self.absorbing.len()
    }

    /// Number of transient states.
    pub fn n(&self) -> usize {
        self.transient.len()
    }

    /// Size of the full alphabet (absorbing block first).
    pub fn size(&self) -> usize {
        self.m() + self.n()
    }

    pub fn absorbing_labels(&self) -> &[String] {
        &self.absorbing
    }

    pub fn transient_labels(&self) -> &[String] {
        &self.transient
    }

    pub fn absorbing_index(&self, label: &str) -> Option<usize> {
        self.absorbing.iter().position(|l| l == label)
    }

    pub fn transient_index(&self, label: &str) -> Option<usize> {
        self.transient.iter().position(|l| l == label)
    }

    /// Label of a state in full-alphabet indexing.
    pub fn label(&self, state: usize) -> &str {
        if state < self.m() {
            &self.absorbing[state]
        } else {
            &self.transient[state - self.m()]
        }
    }
}

/// A raw pair of nonnegative stage factors `(B, A)`.
///
/// Rows need not be stochastic: cost-tilted priors and synthesized policies
/// (whose unreachable rows are zero) are carried in this form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFactors {
    /// `n × m`, transient → absorbing.
    pub b: Array2<f64>,
    /// `n × n`, transient → transient.
    pub a: Array2<f64>,
}

impl StageFactors {
    pub fn new(b: Array2<f64>, a: Array2<f64>) -> Self {
        Self { b, a }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Row sums of `[B A]`.
    pub fn row_sums(&self) -> Array1<f64> {
        &self.b.sum_axis(ndarray::Axis(1)) + &self.a.sum_axis(ndarray::Axis(1))
    }
}

impl AsRef<StageFactors> for StageFactors {
    fn as_ref(&self) -> &StageFactors {
        self
    }
}

/// A validated row-stochastic stage `[B A]` with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageKernel(StageFactors);

impl StageKernel {
    pub fn factors(&self) -> &StageFactors {
        &self.0
    }

    pub fn b(&self) -> &Array2<f64> {
        &self.0.b
    }

    pub fn a(&self) -> &Array2<f64> {
        &self.0.a
    }

    pub fn into_factors(self) -> StageFactors {
        self.0
    }
}

impl AsRef<StageFactors> for StageKernel {
    fn as_ref(&self) -> &StageFactors {
        &self.0
    }
}

/// Validated prior Markov law over a finite horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorLaw {
    space: StateSpace,
    stages: Vec<StageKernel>,
    mu0: Array1<f64>,
}

impl PriorLaw {
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn stages(&self) -> &[StageKernel] {
        &self.stages
    }

    /// Initial distribution over transient states.
    pub fn mu0(&self) -> &Array1<f64> {
        &self.mu0
    }

    /// Raw factors of every stage, cloned.
    pub fn factors(&self) -> Vec<StageFactors> {
        self.stages.iter().map(|s| s.factors().clone()).collect()
    }
}

/// Validated marginal targets: initial law and first-arrival masses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalSpec {
    mu_hat0: Array1<f64>,
    nu_hat: Array2<f64>,
}

impl MarginalSpec {
    /// Target initial distribution over transient states.
    pub fn mu_hat0(&self) -> &Array1<f64> {
        &self.mu_hat0
    }

    /// `m × t`; entry `(j, τ-1)` is the target mass first arriving at `j` at time `τ`.
    pub fn nu_hat(&self) -> &Array2<f64> {
        &self.nu_hat
    }

    pub fn horizon(&self) -> usize {
        self.nu_hat.ncols()
    }

    pub fn total_arrival_mass(&self) -> f64 {
        self.nu_hat.sum()
    }

    /// Targets flattened in column-block order: stopped at τ=1 (all `j`),
    /// stopped at τ=2, and so on.
    pub fn nu_hat_flat(&self) -> Array1<f64> {
        let (m, t) = self.nu_hat.dim();
        Array1::from_shape_fn(m * t, |k| self.nu_hat[[k % m, k / m]])
    }
}

fn check_entries<'a>(field: &str, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    for &v in values {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::NegativeEntry {
                field: field.to_string(),
                value: v,
            });
        }
    }
    Ok(())
}

/// Accepts a distribution over transient states (length `n`) or over the
/// full alphabet (length `m + n`, absorbing entries must be zero).
fn transient_distribution(space: &StateSpace, field: &str, mu: Array1<f64>) -> Result<Array1<f64>> {
    let (m, n) = (space.m(), space.n());
    let mu = if mu.len() == n {
        mu
    } else if mu.len() == m + n {
        check_entries(field, mu.iter())?;
        for j in 0..m {
            if mu[j] != 0.0 {
                return Err(Error::InitialMassOnAbsorbing {
                    field: field.to_string(),
                    state: space.absorbing[j].clone(),
                });
            }
        }
        mu.slice(ndarray::s![m..]).to_owned()
    } else {
        return Err(Error::DimensionMismatch {
            field: field.to_string(),
            expected: format!("{n} (or {} including absorbing states)", m + n),
            got: mu.len().to_string(),
        });
    };
    check_entries(field, mu.iter())?;
    let sum = mu.sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::NotNormalized {
            field: field.to_string(),
            sum,
        });
    }
    Ok(mu)
}

fn check_stage_shape(space: &StateSpace, stage: usize, f: &StageFactors) -> Result<()> {
    let (m, n) = (space.m(), space.n());
    if f.b.dim() != (n, m) {
        return Err(Error::DimensionMismatch {
            field: format!("stages[{stage}].B"),
            expected: format!("{n}x{m}"),
            got: format!("{}x{}", f.b.nrows(), f.b.ncols()),
        });
    }
    if f.a.dim() != (n, n) {
        return Err(Error::DimensionMismatch {
            field: format!("stages[{stage}].A"),
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", f.a.nrows(), f.a.ncols()),
        });
    }
    Ok(())
}

/// Validates a prior law. Row sums must be 1 within [`STOCHASTIC_TOL`].
pub fn validate_prior(space: StateSpace, stages: Vec<StageFactors>, mu0: Array1<f64>) -> Result<PriorLaw> {
    validate_prior_with(space, stages, mu0, false)
}

/// Like [`validate_prior`]; with `renormalize` set, rows that miss the
/// tolerance are divided by their sum instead of rejected.
pub fn validate_prior_with(
    space: StateSpace,
    stages: Vec<StageFactors>,
    mu0: Array1<f64>,
    renormalize: bool,
) -> Result<PriorLaw> {
    if stages.is_empty() {
        return Err(Error::InvalidValue {
            field: "horizon".into(),
            reason: "must be a positive integer".into(),
        });
    }
    let mut kernels = Vec::with_capacity(stages.len());
    for (tau, mut f) in stages.into_iter().enumerate() {
        check_stage_shape(&space, tau, &f)?;
        check_entries(&format!("stages[{tau}].B"), f.b.iter())?;
        check_entries(&format!("stages[{tau}].A"), f.a.iter())?;
        for (x, sum) in f.row_sums().iter().enumerate() {
            let deviation = (sum - 1.0).abs();
            if deviation <= STOCHASTIC_TOL {
                continue;
            }
            if renormalize && *sum > 0.0 {
                f.b.row_mut(x).mapv_inplace(|v| v / sum);
                f.a.row_mut(x).mapv_inplace(|v| v / sum);
            } else {
                return Err(Error::RowSumViolation {
                    stage: tau + 1,
                    row: space.transient[x].clone(),
                    sum: *sum,
                    deviation,
                });
            }
        }
        if let Some(&v) = f.b.iter().chain(f.a.iter()).find(|&&v| v > 1.0) {
            return Err(Error::InvalidValue {
                field: format!("stages[{tau}]"),
                reason: format!("probability {v} exceeds 1"),
            });
        }
        kernels.push(StageKernel(f));
    }
    let mu0 = transient_distribution(&space, "mu0", mu0)?;
    Ok(PriorLaw {
        space,
        stages: kernels,
        mu0,
    })
}

/// Validates the initial target and the `m × t` first-arrival target matrix.
pub fn validate_marginals(
    space: &StateSpace,
    horizon: usize,
    mu_hat0: Array1<f64>,
    nu_hat: Array2<f64>,
) -> Result<MarginalSpec> {
    if nu_hat.dim() != (space.m(), horizon) {
        return Err(Error::DimensionMismatch {
            field: "nu_hat".into(),
            expected: format!("{}x{}", space.m(), horizon),
            got: format!("{}x{}", nu_hat.nrows(), nu_hat.ncols()),
        });
    }
    check_entries("nu_hat", nu_hat.iter())?;
    let total = nu_hat.sum();
    if total > 1.0 + STOCHASTIC_TOL {
        return Err(Error::MassExceedsOne { total });
    }
    let mu_hat0 = transient_distribution(space, "mu_hat0", mu_hat0)?;
    Ok(MarginalSpec { mu_hat0, nu_hat })
}

/// A demanded arrival that the prior cannot produce from `mu_hat0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnreachableTarget {
    pub state: String,
    /// Absorbing index `j`.
    pub j: usize,
    /// Arrival time, 1-based.
    pub tau: usize,
    pub target: f64,
}

/// Outcome of the support check. An empty list is necessary, not sufficient, for feasibility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub unreachable: Vec<UnreachableTarget>,
}

impl FeasibilityReport {
    pub fn is_empty(&self) -> bool {
        self.unreachable.is_empty()
    }
}

/// Lists every `(j, τ)` with a positive target but zero prior arrival probability from `mu_hat0`.
pub fn support_feasibility_report(prior: &PriorLaw, spec: &MarginalSpec) -> FeasibilityReport {
    let arrival = expansion::prior_arrival_distribution(prior.stages(), spec.mu_hat0());
    let mut unreachable = Vec::new();
    for ((j, tau0), &target) in spec.nu_hat().indexed_iter() {
        if target > 0.0 && arrival.arrivals[[j, tau0]] == 0.0 {
            unreachable.push(UnreachableTarget {
                state: prior.space().absorbing_labels()[j].clone(),
                j,
                tau: tau0 + 1,
                target,
            });
        }
    }
    FeasibilityReport { unreachable }
}
