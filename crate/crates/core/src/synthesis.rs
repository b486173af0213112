//! Markov policy synthesis from converged scalings.
//!
//! With `d_t = 𝟙` and `d_{τ-1} = B_τ·Λ_τ + A_τ·d_τ` (one right-to-left sweep),
//! the posterior stages are
//!
//! ```text
//! B*_τ = diag(d_{τ-1})^♯ · B_τ · diag(Λ_τ)
//! A*_τ = diag(d_{τ-1})^♯ · A_τ · diag(d_τ)
//! ```
//!
//! where `♯` is the entrywise reciprocal with `0 ↦ 0`. Every row with
//! `d_{τ-1}(x) > 0` sums to one by construction; rows with `d_{τ-1}(x) = 0`
//! carry no mass and are left at zero and listed in [`Policy::unreachable`].

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::chain_model::{PriorLaw, StageFactors, StateSpace};
use crate::error::{Error, Result};
use crate::expansion::{prior_arrival_distribution, ArrivalDistribution};
use crate::sinkhorn::ScalingPair;

/// Rows of a synthesized stage that carry no mass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnreachableRow {
    /// 1-based stage index.
    pub stage: usize,
    /// Transient index.
    pub state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Policy {
    space: StateSpace,
    stages: Vec<StageFactors>,
    /// `d_1 … d_t` (`d_t = 𝟙`).
    d_vectors: Vec<Array1<f64>>,
    /// `d_0 = ℬΛ + 𝒜𝟙`; its reciprocal is the kernel scaling `D_0`.
    d0: Array1<f64>,
    unreachable: Vec<UnreachableRow>,
}

impl Policy {
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn stages(&self) -> &[StageFactors] {
        &self.stages
    }

    /// `d_τ` for `τ = 1..=t`.
    pub fn d_vectors(&self) -> &[Array1<f64>] {
        &self.d_vectors
    }

    pub fn d0(&self) -> &Array1<f64> {
        &self.d0
    }

    /// `D_0 = diag(d_0)^♯` as a vector.
    pub fn kernel_d0(&self) -> Array1<f64> {
        self.d0.mapv(pinv)
    }

    pub fn unreachable(&self) -> &[UnreachableRow] {
        &self.unreachable
    }
}

fn pinv(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        1.0 / v
    }
}

/// Deviation from unit row sum above which a reachable row is rejected.
pub const OUTPUT_ROW_TOL: f64 = 1e-8;

/// Synthesizes the optimal stage kernels for `prior` from its scalings.
pub fn synthesize(prior: &PriorLaw, scalings: &ScalingPair) -> Result<Policy> {
    synthesize_factors(prior.space(), prior.stages(), scalings)
}

/// Same as [`synthesize`] for arbitrary nonnegative factors (e.g. a cost-tilted prior).
pub fn synthesize_factors<S: AsRef<StageFactors>>(
    space: &StateSpace,
    stages: &[S],
    scalings: &ScalingPair,
) -> Result<Policy> {
    let (m, n, t) = (space.m(), space.n(), stages.len());
    if scalings.m() != m || scalings.lambda.len() != m * t || scalings.d.len() != n {
        return Err(Error::ScalingMismatch(format!(
            "space is m={m}, n={n}, t={t}; scalings have m={}, |Λ|={}, |D|={}",
            scalings.m(),
            scalings.lambda.len(),
            scalings.d.len()
        )));
    }

    // d[τ] for τ = 0..=t
    let mut d = vec![Array1::<f64>::ones(n); t + 1];
    for tau in (1..=t).rev() {
        let stage = stages[tau - 1].as_ref();
        let lam = scalings.lambda_block(tau);
        d[tau - 1] = stage.b.dot(&lam) + stage.a.dot(&d[tau]);
    }

    let mut out = Vec::with_capacity(t);
    let mut unreachable = Vec::new();
    for tau in 1..=t {
        let stage = stages[tau - 1].as_ref();
        let lam = scalings.lambda_block(tau);
        let mut b = Array2::zeros((n, m));
        let mut a = Array2::zeros((n, n));
        for x in 0..n {
            let scale = pinv(d[tau - 1][x]);
            if scale == 0.0 {
                unreachable.push(UnreachableRow { stage: tau, state: x });
                continue;
            }
            for j in 0..m {
                b[[x, j]] = scale * stage.b[[x, j]] * lam[j];
            }
            for y in 0..n {
                a[[x, y]] = scale * stage.a[[x, y]] * d[tau][y];
            }
            let sum = b.row(x).sum() + a.row(x).sum();
            if (sum - 1.0).abs() > OUTPUT_ROW_TOL {
                return Err(Error::NonStochasticOutput { stage: tau, row: x, sum });
            }
        }
        out.push(StageFactors::new(b, a));
    }
    let d0 = d.remove(0);
    Ok(Policy {
        space: space.clone(),
        stages: out,
        d_vectors: d,
        d0,
        unreachable,
    })
}

/// First-arrival masses and residual under the policy started at `mu_hat0`.
pub fn induced_marginals(policy: &Policy, mu_hat0: &Array1<f64>) -> ArrivalDistribution {
    prior_arrival_distribution(policy.stages(), mu_hat0)
}
