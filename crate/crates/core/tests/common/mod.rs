#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stopbridge_core::{
    prior_arrival_distribution, validate_marginals, validate_prior, MarginalSpec, PriorLaw, Problem, StageFactors,
    StateSpace,
};

pub fn bundled(name: &str) -> Problem {
    Problem::bundled(name).expect("bundled example").expect("example loads")
}

pub fn max_abs(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().zip(b).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Random probability vector; each entry is zeroed with probability `sparsity`
/// unless that would empty the vector.
fn random_simplex(rng: &mut ChaCha8Rng, len: usize, sparsity: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..len)
        .map(|_| if rng.random::<f64>() < sparsity { 0.0 } else { rng.random_range(0.05..1.0) })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.random_range(0..len)] = 1.0;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// Stage whose support is `mask` with fresh random weights.
fn stage_on_mask(rng: &mut ChaCha8Rng, mask: &StageFactors) -> StageFactors {
    let (n, m) = (mask.n(), mask.m());
    let mut b = Array2::zeros((n, m));
    let mut a = Array2::zeros((n, n));
    for x in 0..n {
        let w: Vec<f64> = mask
            .b
            .row(x)
            .iter()
            .chain(mask.a.row(x).iter())
            .map(|&v| if v > 0.0 { rng.random_range(0.05..1.0) } else { 0.0 })
            .collect();
        let s: f64 = w.iter().sum();
        for k in 0..m + n {
            let v = w[k] / s;
            if k < m {
                b[[x, k]] = v;
            } else {
                a[[x, k - m]] = v;
            }
        }
    }
    StageFactors::new(b, a)
}

pub struct Instance {
    pub prior: PriorLaw,
    pub spec: MarginalSpec,
    /// Second chain on the prior's support.
    pub witness: Vec<StageFactors>,
}

/// Random instance with `n ≤ 4`, `m ≤ 2`, `t ≤ 4`. The targets mix the
/// prior's own arrival masses with those of a second chain on the prior's
/// support; both are attainable, so the mixture is too.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=4);
    let m = rng.random_range(1..=2);
    let t = rng.random_range(1..=4);
    let space = StateSpace::with_sizes(m, n).unwrap();
    let stages: Vec<StageFactors> = (0..t)
        .map(|_| {
            let mut b = Array2::zeros((n, m));
            let mut a = Array2::zeros((n, n));
            for x in 0..n {
                let row = random_simplex(&mut rng, m + n, 0.3);
                for k in 0..m + n {
                    if k < m {
                        b[[x, k]] = row[k];
                    } else {
                        a[[x, k - m]] = row[k];
                    }
                }
            }
            StageFactors::new(b, a)
        })
        .collect();
    let mu0 = Array1::from(random_simplex(&mut rng, n, 0.0));
    let witness: Vec<StageFactors> = stages.iter().map(|s| stage_on_mask(&mut rng, s)).collect();
    let mu_hat0 = Array1::from(random_simplex(&mut rng, n, 0.0));
    let alpha: f64 = rng.random();
    let own = prior_arrival_distribution(&stages, &mu_hat0).arrivals;
    let other = prior_arrival_distribution(&witness, &mu_hat0).arrivals;
    let nu_hat = &own * (1.0 - alpha) + &other * alpha;
    let prior = validate_prior(space.clone(), stages, mu0).unwrap();
    let spec = validate_marginals(&space, t, mu_hat0, nu_hat).unwrap();
    Instance { prior, spec, witness }
}
