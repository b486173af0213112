//! Space-time ("telescopic") expansion of the stage kernels.
//!
//! `Π = [B1, A1·B2, …, (A1⋯A_{t-1})·B_t, A1⋯A_t]` with the first `t` blocks
//! collected in `bcal` and the surviving transient block in `acal`.

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::Serialize;

use crate::chain_model::StageFactors;

/// `bcal` is `n × (m·t)`, column block `τ` holds `(A1⋯A_{τ-1})·B_τ`;
/// `acal` is `n × n`, the product `A1⋯A_t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionedMatrix {
    pub bcal: Array2<f64>,
    pub acal: Array2<f64>,
    m: usize,
    horizon: usize,
}

impl PartitionedMatrix {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.acal.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Column of `bcal` holding first arrivals at absorbing `j` at time `tau` (1-based).
    pub fn column(&self, j: usize, tau: usize) -> usize {
        debug_assert!(j < self.m && (1..=self.horizon).contains(&tau));
        (tau - 1) * self.m + j
    }

    /// Block `tau` (1-based) of `bcal`, shape `n × m`.
    pub fn block(&self, tau: usize) -> ArrayView2<'_, f64> {
        let lo = (tau - 1) * self.m;
        self.bcal.slice(s![.., lo..lo + self.m])
    }
}

/// Builds the telescopic expansion. Products accumulate left to right in
/// increasing `τ`; the empty prefix is the identity.
pub fn telescopic_expand<S: AsRef<StageFactors>>(stages: &[S]) -> PartitionedMatrix {
    let first = stages.first().expect("at least one stage").as_ref();
    let (n, m, t) = (first.n(), first.m(), stages.len());
    let mut bcal = Array2::zeros((n, m * t));
    let mut prefix = Array2::<f64>::eye(n);
    for (k, stage) in stages.iter().enumerate() {
        let stage = stage.as_ref();
        bcal.slice_mut(s![.., k * m..(k + 1) * m])
            .assign(&prefix.dot(&stage.b));
        prefix = prefix.dot(&stage.a);
    }
    PartitionedMatrix {
        bcal,
        acal: prefix,
        m,
        horizon: t,
    }
}

/// First-arrival masses and the surviving transient mass at the horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArrivalDistribution {
    /// `m × t`; entry `(j, τ-1)` is the probability of first arriving at `j` at time `τ`.
    pub arrivals: Array2<f64>,
    /// Probability of sitting at each transient state at time `t`, unabsorbed.
    pub residual: Array1<f64>,
}

impl ArrivalDistribution {
    pub fn total(&self) -> f64 {
        self.arrivals.sum() + self.residual.sum()
    }
}

/// Propagates `mu` forward through the stages, collecting first arrivals.
///
/// Works for any nonnegative factors, so it serves priors and synthesized
/// policies alike.
pub fn prior_arrival_distribution<S: AsRef<StageFactors>>(stages: &[S], mu: &Array1<f64>) -> ArrivalDistribution {
    let m = stages[0].as_ref().m();
    let mut arrivals = Array2::zeros((m, stages.len()));
    let mut occupancy = mu.clone();
    for (k, stage) in stages.iter().enumerate() {
        let stage = stage.as_ref();
        arrivals.column_mut(k).assign(&occupancy.dot(&stage.b));
        occupancy = occupancy.dot(&stage.a);
    }
    ArrivalDistribution {
        arrivals,
        residual: occupancy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fair() -> StageFactors {
        StageFactors::new(
            array![[0.5, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.5]],
            array![
                [0.0, 0.5, 0.0, 0.0],
                [0.5, 0.0, 0.5, 0.0],
                [0.0, 0.5, 0.0, 0.5],
                [0.0, 0.0, 0.5, 0.0]
            ],
        )
    }

    #[test]
    fn single_stage_is_identity_expansion() {
        let pm = telescopic_expand(&[fair()]);
        assert_eq!(pm.bcal, fair().b);
        assert_eq!(pm.acal, fair().a);
    }

    #[test]
    fn de_moivre_rows_are_stochastic() {
        let pm = telescopic_expand(&vec![fair(); 3]);
        let sums = pm.bcal.sum_axis(ndarray::Axis(1)) + pm.acal.sum_axis(ndarray::Axis(1));
        for s in sums {
            assert!((s - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn block_indexing() {
        let pm = telescopic_expand(&vec![fair(); 3]);
        // wealth 2 -> 1 -> ruin: 0.5 * 0.5
        assert_eq!(pm.block(2)[[1, 0]], 0.25);
        assert_eq!(pm.bcal[[1, pm.column(0, 2)]], 0.25);
        // wealth 1 cannot hit ruin exactly at τ=2
        assert_eq!(pm.block(2)[[0, 0]], 0.0);
    }

    #[test]
    fn no_absorption_leaves_everything_residual() {
        let a = array![[0.2, 0.8], [0.6, 0.4]];
        let st = StageFactors::new(Array2::zeros((2, 1)), a.clone());
        let mu = array![0.3, 0.7];
        let arr = prior_arrival_distribution(&vec![st; 3], &mu);
        assert!(arr.arrivals.iter().all(|&v| v == 0.0));
        let expect = mu.dot(&a).dot(&a).dot(&a);
        assert!((&arr.residual - &expect).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn arrival_matches_expansion_route() {
        let stages = vec![fair(); 3];
        let mu = Array1::from_elem(4, 0.25);
        let pm = telescopic_expand(&stages);
        let arr = prior_arrival_distribution(&stages, &mu);
        for tau in 1..=3 {
            let via_block = mu.dot(&pm.block(tau));
            for j in 0..2 {
                assert!((via_block[j] - arr.arrivals[[j, tau - 1]]).abs() < 1e-15);
            }
        }
        assert!((arr.total() - 1.0).abs() < 1e-12);
    }
}
