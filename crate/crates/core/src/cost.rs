//! Entropic-regularized transport: edge costs tilt the prior by `e^{-βU}`
//! and the tilted (unnormalized) factors go through the same scaling and
//! synthesis pipeline.
//!
//! Costs on absorbing self-loops are zero; the `B`-block cost is charged
//! once, on the arrival step.

use ndarray::Array1;
use serde::Serialize;

use crate::chain_model::{MarginalSpec, PriorLaw, StageFactors, StateSpace};
use crate::error::{Error, Result};
use crate::path_oracle::{kl_divergence, PathLaw};
use crate::pipeline::{solve_factors, Solution};
use crate::sinkhorn::SinkhornOptions;

/// Largest `β·|U|` accepted before `exp` leaves a safe range.
pub const EXP_GUARD: f64 = 700.0;

/// Per-stage edge costs plus temperature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeCostSchedule {
    /// Stage `τ` holds the cost of each edge traversed on the step `τ-1 → τ`.
    stages: Vec<StageFactors>,
    beta_inv: f64,
}

impl EdgeCostSchedule {
    pub fn new(space: &StateSpace, stages: Vec<StageFactors>, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidValue {
                field: "beta".into(),
                reason: format!("must be positive and finite, got {beta}"),
            });
        }
        let (m, n) = (space.m(), space.n());
        for (tau, s) in stages.iter().enumerate() {
            if s.b.dim() != (n, m) || s.a.dim() != (n, n) {
                return Err(Error::DimensionMismatch {
                    field: format!("costs[{tau}]"),
                    expected: format!("B {n}x{m}, A {n}x{n}"),
                    got: format!("B {:?}, A {:?}", s.b.dim(), s.a.dim()),
                });
            }
            if let Some(&v) = s.b.iter().chain(s.a.iter()).find(|v| !v.is_finite()) {
                return Err(Error::InvalidValue {
                    field: format!("costs[{tau}]"),
                    reason: format!("non-finite cost {v}"),
                });
            }
        }
        Ok(Self {
            stages,
            beta_inv: 1.0 / beta,
        })
    }

    /// All-zero costs over `horizon` stages.
    pub fn zeros(space: &StateSpace, horizon: usize, beta: f64) -> Result<Self> {
        let (m, n) = (space.m(), space.n());
        let zero = StageFactors::new(ndarray::Array2::zeros((n, m)), ndarray::Array2::zeros((n, n)));
        Self::new(space, vec![zero; horizon], beta)
    }

    pub fn beta(&self) -> f64 {
        1.0 / self.beta_inv
    }

    pub fn beta_inv(&self) -> f64 {
        self.beta_inv
    }

    pub fn stages(&self) -> &[StageFactors] {
        &self.stages
    }

    fn max_abs(&self) -> f64 {
        self.stages
            .iter()
            .flat_map(|s| s.b.iter().chain(s.a.iter()))
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Cost of the step from full-alphabet state `from` to `to` at 1-based `tau`.
    pub fn step_cost(&self, m: usize, tau: usize, from: usize, to: usize) -> f64 {
        if from < m {
            return 0.0;
        }
        let s = &self.stages[tau - 1];
        if to < m {
            s.b[[from - m, to]]
        } else {
            s.a[[from - m, to - m]]
        }
    }

    /// Cumulative cost `Σ_τ U_τ(x_{τ-1}, x_τ)` of one path.
    pub fn path_cost(&self, m: usize, path: &[u16]) -> f64 {
        path.windows(2)
            .enumerate()
            .map(|(k, w)| self.step_cost(m, k + 1, w[0] as usize, w[1] as usize))
            .sum()
    }
}

/// Cost-tilted prior factors `B ∘ e^{-βU_B}`, `A ∘ e^{-βU_A}`; rows need not sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltedPrior {
    pub space: StateSpace,
    pub stages: Vec<StageFactors>,
    pub mu0: Array1<f64>,
}

pub fn tilt_prior(prior: &PriorLaw, costs: &EdgeCostSchedule) -> Result<TiltedPrior> {
    if costs.stages.len() != prior.horizon() {
        return Err(Error::DimensionMismatch {
            field: "costs".into(),
            expected: format!("{} stages", prior.horizon()),
            got: costs.stages.len().to_string(),
        });
    }
    let beta = costs.beta();
    let guard = beta * costs.max_abs();
    if guard > EXP_GUARD {
        return Err(Error::Overflow(guard));
    }
    let stages = prior
        .stages()
        .iter()
        .zip(&costs.stages)
        .map(|(k, u)| {
            StageFactors::new(
                k.b() * &u.b.mapv(|c| (-beta * c).exp()),
                k.a() * &u.a.mapv(|c| (-beta * c).exp()),
            )
        })
        .collect();
    Ok(TiltedPrior {
        space: prior.space().clone(),
        stages,
        mu0: prior.mu0().clone(),
    })
}

/// Expected cumulative path cost `𝕁(P) = Σ P(x) U(x)`.
pub fn transport_cost(law: &PathLaw, costs: &EdgeCostSchedule) -> f64 {
    law.iter().map(|(p, w)| w * costs.path_cost(law.m(), p)).sum()
}

/// Free energy `𝕁(P) + β⁻¹·𝔻(P‖Q)`; `+∞` when `P` is not absolutely continuous w.r.t. `Q`.
pub fn free_energy(p: &PathLaw, q: &PathLaw, costs: &EdgeCostSchedule) -> f64 {
    let kl = kl_divergence(p, q);
    if kl.is_infinite() {
        return f64::INFINITY;
    }
    transport_cost(p, costs) + costs.beta_inv() * kl
}

/// The same free energy written as a divergence to the normalized tilted
/// measure `Q e^{-βU} / Z`, with the normalizer kept explicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltedFreeEnergy {
    pub kl_to_tilted: f64,
    pub log_normalizer: f64,
    /// `β⁻¹ (kl_to_tilted − log Z)`.
    pub value: f64,
}

/// Path-wise tilt `Q(x) e^{-βU(x)}`, unnormalized.
pub fn tilt_path_law(q: &PathLaw, costs: &EdgeCostSchedule) -> PathLaw {
    let beta = costs.beta();
    q.with_probs(
        q.iter()
            .map(|(p, w)| w * (-beta * costs.path_cost(q.m(), p)).exp())
            .collect(),
    )
}

pub fn free_energy_via_tilted(p: &PathLaw, q: &PathLaw, costs: &EdgeCostSchedule) -> TiltedFreeEnergy {
    let tilted = tilt_path_law(q, costs);
    let z = tilted.total();
    let kl_to_tilted = kl_divergence(p, &tilted.normalized());
    let log_normalizer = z.ln();
    TiltedFreeEnergy {
        kl_to_tilted,
        log_normalizer,
        value: costs.beta_inv() * (kl_to_tilted - log_normalizer),
    }
}

/// Minimizes the free energy subject to the marginal targets.
pub fn solve_regularized(
    prior: &PriorLaw,
    costs: &EdgeCostSchedule,
    spec: &MarginalSpec,
    opts: SinkhornOptions,
) -> Result<Solution> {
    let tilted = tilt_prior(prior, costs)?;
    solve_factors(&tilted.space, &tilted.stages, spec, opts)
}
