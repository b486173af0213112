//! Monte-Carlo sampling of walkers under a prior or a synthesized policy.
//!
//! Each walker draws from its own ChaCha stream keyed by `(seed, walker
//! index)`, so counts do not depend on how walkers are split across threads.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain_model::StageFactors;

const CHUNK: u64 = 1 << 14;

/// First-arrival counts of `n_samples` walkers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmpiricalLaw {
    /// `m × t` first-arrival counts.
    pub counts: Array2<u64>,
    /// Walkers still transient at the horizon, by state.
    pub residual_counts: Array1<u64>,
    pub n_samples: u64,
    pub seed: u64,
}

impl EmpiricalLaw {
    /// Normalized arrival frequencies.
    pub fn frequencies(&self) -> Array2<f64> {
        self.counts.mapv(|c| c as f64 / self.n_samples as f64)
    }

    pub fn residual_frequencies(&self) -> Array1<f64> {
        self.residual_counts.mapv(|c| c as f64 / self.n_samples as f64)
    }
}

/// Cumulative weights of one row `[B A]`; indices follow the full alphabet.
struct Row {
    cumulative: Vec<f64>,
}

impl Row {
    fn new(weights: impl Iterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    fn sample(&self, u: f64) -> Option<usize> {
        let total = self.total();
        if total <= 0.0 {
            return None;
        }
        let target = u * total;
        let k = self.cumulative.partition_point(|&c| c <= target);
        if k < self.cumulative.len() {
            return Some(k);
        }
        // target rounded up onto the total: take the last slot with weight
        (0..self.cumulative.len())
            .rev()
            .find(|&i| self.cumulative[i] > if i == 0 { 0.0 } else { self.cumulative[i - 1] })
    }
}

/// Samples `n_samples` walkers from `mu0` through the given stages.
///
/// A walker that reaches a row with no mass (an unreachable row of a
/// policy) stops and is counted as residual at that state.
pub fn sample_paths<S: AsRef<StageFactors> + Sync>(
    stages: &[S],
    mu0: &Array1<f64>,
    n_samples: u64,
    seed: u64,
) -> EmpiricalLaw {
    let first = stages[0].as_ref();
    let (m, n, t) = (first.m(), first.n(), stages.len());
    let init = Row::new(mu0.iter().copied());
    let rows: Vec<Vec<Row>> = stages
        .iter()
        .map(|s| {
            let s = s.as_ref();
            (0..n)
                .map(|x| Row::new(s.b.row(x).iter().chain(s.a.row(x).iter()).copied()))
                .collect()
        })
        .collect();
    let base = ChaCha8Rng::seed_from_u64(seed);

    let chunks = n_samples.div_ceil(CHUNK);
    let (counts, residual) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![0u64; m * t];
            let mut residual = vec![0u64; n];
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n_samples);
            for walker in lo..hi {
                let mut rng = base.clone();
                rng.set_stream(walker);
                let Some(mut x) = init.sample(rng.random::<f64>()) else {
                    continue;
                };
                let mut absorbed = false;
                for (k, stage) in rows.iter().enumerate() {
                    match stage[x].sample(rng.random::<f64>()) {
                        Some(next) if next < m => {
                            counts[k * m + next] += 1;
                            absorbed = true;
                            break;
                        }
                        Some(next) => x = next - m,
                        None => break,
                    }
                }
                if !absorbed {
                    residual[x] += 1;
                }
            }
            (counts, residual)
        })
        .reduce(
            || (vec![0u64; m * t], vec![0u64; n]),
            |(mut a, mut ra), (b, rb)| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                ra.iter_mut().zip(rb).for_each(|(x, y)| *x += y);
                (a, ra)
            },
        );
    EmpiricalLaw {
        counts: Array2::from_shape_fn((m, t), |(j, k)| counts[k * m + j]),
        residual_counts: Array1::from(residual),
        n_samples,
        seed,
    }
}

/// `(L∞, L1)` distance between normalized arrival counts and `target`.
pub fn empirical_distance(emp: &EmpiricalLaw, target: &Array2<f64>) -> (f64, f64) {
    assert_eq!(emp.counts.dim(), target.dim(), "shape mismatch");
    emp.frequencies()
        .iter()
        .zip(target.iter())
        .fold((0.0_f64, 0.0), |(linf, l1), (a, b)| {
            let d = (a - b).abs();
            (linf.max(d), l1 + d)
        })
}
