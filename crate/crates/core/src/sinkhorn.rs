//! Diagonal scaling of the partitioned kernel `[ℬ 𝒜]`.
//!
//! Finds `D` (length `n`) and `Λ` (length `m·t`) such that the joint law
//! `diag(D)·ℬ·diag(Λ)`, `diag(D)·𝒜` has row sums `μ̂` and the `ℬ` part has
//! column sums `ν̂`. Iterates
//!
//! ```text
//! D ← μ̂ ⊘ (ℬΛ + 𝒜𝟙)
//! Λ ← ν̂ ⊘ ℬᵀD
//! ```
//!
//! from `Λ = 𝟙`, with `0 ⊘ 0 = 0` and `x ⊘ 0` (x > 0) an error.
//!
//! `D` lives on the joint-law scale (`D ≈ μ̂` for consistent data). The
//! per-row kernel scaling used to build row-stochastic kernels is
//! `D ⊘ μ̂`, see [`ScalingPair::kernel_scaling`].

use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expansion::PartitionedMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SinkhornOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Converged (or last) scalings of the partial-marginal problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPair {
    /// Row scaling on the joint-law scale.
    pub d: Array1<f64>,
    /// Column scaling of `ℬ`, in `(τ, j)` block order.
    pub lambda: Array1<f64>,
    /// `D ⊘ μ̂` with `0/0 = 0`.
    pub kernel_d: Array1<f64>,
    m: usize,
}

impl ScalingPair {
    pub fn kernel_scaling(&self) -> &Array1<f64> {
        &self.kernel_d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> usize {
        self.lambda.len() / self.m
    }

    /// `Λ_τ` for 1-based `tau`, length `m`.
    pub fn lambda_block(&self, tau: usize) -> Array1<f64> {
        self.lambda
            .slice(ndarray::s![(tau - 1) * self.m..tau * self.m])
            .to_owned()
    }

    /// `Λ` reshaped `t × m`: row `τ-1` is `Λ_τᵀ`.
    pub fn lambda_table(&self) -> Array2<f64> {
        let t = self.horizon();
        Array2::from_shape_fn((t, self.m), |(k, j)| self.lambda[k * self.m + j])
    }

    /// Joint law `(diag(D)·ℬ·diag(Λ), diag(D)·𝒜)`.
    pub fn joint_law(&self, pm: &PartitionedMatrix) -> (Array2<f64>, Array2<f64>) {
        let d = self.d.view().insert_axis(Axis(1));
        let lam = self.lambda.view().insert_axis(Axis(0));
        (&pm.bcal * &d * lam, &pm.acal * &d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SinkhornDiagnostics {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub residual_history: Vec<f64>,
}

/// Scalings plus diagnostics, returned whether or not the tolerance was met.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SinkhornRun {
    pub scalings: ScalingPair,
    pub diagnostics: SinkhornDiagnostics,
}

/// Entrywise `num ⊘ den` with `0/0 = 0`; a positive numerator over zero is a blowup.
fn safe_divide(num: &Array1<f64>, den: &Array1<f64>, what: &'static str) -> Result<Array1<f64>> {
    let mut out = Array1::zeros(num.len());
    for (i, (&a, &b)) in num.iter().zip(den.iter()).enumerate() {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(Error::DivisionBlowup {
                what,
                index: i,
                target: a,
            });
        }
        out[i] = a / b;
    }
    Ok(out)
}

fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Runs the partial-marginal iteration; non-convergence is reported in the
/// diagnostics, not as an error.
pub fn sinkhorn_partial_run(
    pm: &PartitionedMatrix,
    mu_hat: &Array1<f64>,
    nu_hat: &Array1<f64>,
    opts: SinkhornOptions,
) -> Result<SinkhornRun> {
    let (n, mt) = pm.bcal.dim();
    if mu_hat.len() != n || nu_hat.len() != mt {
        return Err(Error::ScalingMismatch(format!(
            "expected mu_hat of length {n} and nu_hat of length {mt}, got {} and {}",
            mu_hat.len(),
            nu_hat.len()
        )));
    }
    let survive = pm.acal.sum_axis(Axis(1));
    let mut lambda = Array1::<f64>::ones(mt);
    let mut history = Vec::new();
    let mut d;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let denom = pm.bcal.dot(&lambda) + &survive;
        d = safe_divide(mu_hat, &denom, "row")?;
        let col = pm.bcal.t().dot(&d);
        let residual = max_abs_diff(&(&lambda * &col), nu_hat);
        history.push(residual);
        if residual <= opts.tol || iterations >= opts.max_iter {
            break;
        }
        lambda = safe_divide(nu_hat, &col, "column")?;
    }

    let rows = &d * &(pm.bcal.dot(&lambda) + &survive);
    let cols = &lambda * &pm.bcal.t().dot(&d);
    let final_residual = max_abs_diff(&rows, mu_hat).max(max_abs_diff(&cols, nu_hat));
    let kernel_d = safe_divide(&d, mu_hat, "kernel")?;
    Ok(SinkhornRun {
        scalings: ScalingPair {
            d,
            lambda,
            kernel_d,
            m: pm.m(),
        },
        diagnostics: SinkhornDiagnostics {
            iterations,
            final_residual,
            converged: final_residual <= opts.tol,
            residual_history: history,
        },
    })
}

/// Partial-marginal Sinkhorn; `NotConverged` when the tolerance is missed.
pub fn sinkhorn_partial(
    pm: &PartitionedMatrix,
    mu_hat: &Array1<f64>,
    nu_hat: &Array1<f64>,
    opts: SinkhornOptions,
) -> Result<(ScalingPair, SinkhornDiagnostics)> {
    let run = sinkhorn_partial_run(pm, mu_hat, nu_hat, opts)?;
    if !run.diagnostics.converged {
        return Err(Error::NotConverged {
            iterations: run.diagnostics.iterations,
            residual: run.diagnostics.final_residual,
        });
    }
    Ok((run.scalings, run.diagnostics))
}

/// Two-endpoint scaling: `diag(L)·G·diag(R)` with row sums `mu0` and column sums `mu_t`.
pub fn classical_sb(
    g: &Array2<f64>,
    mu0: &Array1<f64>,
    mu_t: &Array1<f64>,
    opts: SinkhornOptions,
) -> Result<(Array1<f64>, Array1<f64>, SinkhornDiagnostics)> {
    if g.nrows() != mu0.len() || g.ncols() != mu_t.len() {
        return Err(Error::ScalingMismatch(format!(
            "G is {}x{}, marginals have lengths {} and {}",
            g.nrows(),
            g.ncols(),
            mu0.len(),
            mu_t.len()
        )));
    }
    let mut right = Array1::<f64>::ones(g.ncols());
    let mut history = Vec::new();
    let mut left;
    let mut iterations = 0;
    loop {
        iterations += 1;
        left = safe_divide(mu0, &g.dot(&right), "row")?;
        let col = g.t().dot(&left);
        let residual = max_abs_diff(&(&right * &col), mu_t);
        history.push(residual);
        if residual <= opts.tol || iterations >= opts.max_iter {
            break;
        }
        right = safe_divide(mu_t, &col, "column")?;
    }
    let rows = &left * &g.dot(&right);
    let cols = &right * &g.t().dot(&left);
    let final_residual = max_abs_diff(&rows, mu0).max(max_abs_diff(&cols, mu_t));
    let diagnostics = SinkhornDiagnostics {
        iterations,
        final_residual,
        converged: final_residual <= opts.tol,
        residual_history: history,
    };
    if !diagnostics.converged {
        return Err(Error::NotConverged {
            iterations,
            residual: final_residual,
        });
    }
    Ok((left, right, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_model::StageFactors;
    use crate::expansion::{prior_arrival_distribution, telescopic_expand};
    use ndarray::array;

    #[test]
    fn consistent_data_is_a_fixed_point() {
        let st = StageFactors::new(
            array![[0.2, 0.1], [0.0, 0.3], [0.1, 0.1]],
            array![[0.3, 0.2, 0.2], [0.4, 0.1, 0.2], [0.2, 0.5, 0.1]],
        );
        let stages = vec![st; 3];
        let mu = array![0.5, 0.3, 0.2];
        let pm = telescopic_expand(&stages);
        let arr = prior_arrival_distribution(&stages, &mu);
        let nu = Array1::from_shape_fn(6, |k| arr.arrivals[[k % 2, k / 2]]);
        let (sc, diag) = sinkhorn_partial(&pm, &mu, &nu, SinkhornOptions::default()).unwrap();
        assert_eq!(diag.iterations, 1);
        assert!(sc.lambda.iter().all(|l| (l - 1.0).abs() < 1e-12));
        assert!(sc.kernel_d.iter().all(|l| (l - 1.0).abs() < 1e-12));
        assert!((&sc.d - &mu).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn zero_targets_get_zero_lambda() {
        let st = StageFactors::new(array![[0.5, 0.5], [0.25, 0.25]], array![[0.0, 0.0], [0.5, 0.0]]);
        let pm = telescopic_expand(&[st]);
        let mu = array![0.5, 0.5];
        let nu = array![0.6, 0.0];
        let (sc, _) = sinkhorn_partial(&pm, &mu, &nu, SinkhornOptions::default()).unwrap();
        assert_eq!(sc.lambda[1], 0.0);
    }

    #[test]
    fn unreachable_positive_target_blows_up() {
        let st = StageFactors::new(array![[0.0, 0.5]], array![[0.5]]);
        let pm = telescopic_expand(&[st]);
        let err = sinkhorn_partial(&pm, &array![1.0], &array![0.2, 0.1], SinkhornOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DivisionBlowup { what: "column", index: 0, .. }));
    }

    #[test]
    fn infeasible_mass_does_not_converge() {
        // only half the mass can ever be absorbed
        let st = StageFactors::new(array![[0.5]], array![[0.5]]);
        let pm = telescopic_expand(&[st]);
        let opts = SinkhornOptions { tol: 1e-10, max_iter: 50 };
        let run = sinkhorn_partial_run(&pm, &array![1.0], &array![1.0], opts);
        // 𝒜𝟙 > 0 keeps D finite; Λ grows without bound
        let run = run.unwrap();
        assert!(!run.diagnostics.converged);
        assert_eq!(run.diagnostics.iterations, 50);
        assert!(matches!(
            sinkhorn_partial(&pm, &array![1.0], &array![1.0], opts),
            Err(Error::NotConverged { iterations: 50, .. })
        ));
    }

    #[test]
    fn classical_doubly_stochastic_uniform() {
        let g = array![[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.3, 0.2, 0.5]];
        let u = Array1::from_elem(3, 1.0 / 3.0);
        let (l, r, _) = classical_sb(&g, &u, &u, SinkhornOptions::default()).unwrap();
        for i in 1..3 {
            assert!((l[i] / l[0] - 1.0).abs() < 1e-12);
            assert!((r[i] / r[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn classical_rank_one_gives_product_measure() {
        let g = array![[0.5, 0.5], [0.5, 0.5]];
        let (l, r, _) = classical_sb(&g, &array![0.5, 0.5], &array![0.3, 0.7], SinkhornOptions::default()).unwrap();
        let expect = array![[0.15, 0.35], [0.15, 0.35]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((l[i] * g[[i, j]] * r[j] - expect[[i, j]]).abs() < 1e-10);
            }
        }
    }
}
