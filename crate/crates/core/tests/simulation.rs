mod common;

use std::time::Instant;

use common::bundled;
use ndarray::{array, Array2};
use stopbridge_core::{
    empirical_distance, induced_marginals, prior_arrival_distribution, sample_paths, solve, StageFactors,
};

#[test]
fn de_moivre_policy_hits_targets() {
    let p = bundled("de_moivre");
    let sol = solve(&p.prior, &p.spec, p.options).unwrap();
    let start = Instant::now();
    let emp = sample_paths(sol.policy.stages(), p.spec.mu_hat0(), 1_000_000, 2024);
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert_eq!(emp.counts.sum() + emp.residual_counts.sum(), emp.n_samples);
    let (linf, _) = empirical_distance(&emp, p.spec.nu_hat());
    assert!(linf <= 0.005, "{linf}");
}

#[test]
fn prior_sampling_matches_exact_arrivals() {
    for name in ["de_moivre", "traffic"] {
        let p = bundled(name);
        let exact = prior_arrival_distribution(p.prior.stages(), p.prior.mu0());
        let emp = sample_paths(p.prior.stages(), p.prior.mu0(), 1_000_000, 7);
        let (linf, _) = empirical_distance(&emp, &exact.arrivals);
        assert!(linf <= 0.005, "{name}: {linf}");
        let residual = emp.residual_frequencies();
        for (a, b) in residual.iter().zip(exact.residual.iter()) {
            assert!((a - b).abs() <= 0.005);
        }
    }
}

#[test]
fn counts_do_not_depend_on_thread_count() {
    let p = bundled("traffic");
    let sol = solve(&p.prior, &p.spec, p.options).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sample_paths(sol.policy.stages(), p.spec.mu_hat0(), 100_003, 99))
    };
    let one = run(1);
    assert_eq!(one, run(1));
    for threads in [2, 3, 8] {
        assert_eq!(one, run(threads));
    }
    assert_ne!(one.counts, sample_paths(sol.policy.stages(), p.spec.mu_hat0(), 100_003, 100).counts);
}

#[test]
fn error_shrinks_with_more_walkers() {
    let p = bundled("de_moivre");
    let sol = solve(&p.prior, &p.spec, p.options).unwrap();
    let exact = induced_marginals(&sol.policy, p.spec.mu_hat0()).arrivals;
    let better = (0..100u64)
        .filter(|&seed| {
            let small = sample_paths(sol.policy.stages(), p.spec.mu_hat0(), 10_000, 1000 + seed);
            let large = sample_paths(sol.policy.stages(), p.spec.mu_hat0(), 1_000_000, 1000 + seed);
            empirical_distance(&large, &exact).0 < empirical_distance(&small, &exact).0
        })
        .count();
    assert!(better >= 95, "{better} of 100");
}

#[test]
fn unreachable_rows_leave_walkers_in_place() {
    // stage 2 has no mass on row 1; the walkers that get there stop
    let st1 = StageFactors::new(array![[0.0], [0.0]], array![[0.5, 0.5], [0.0, 1.0]]);
    let st2 = StageFactors::new(array![[1.0], [0.0]], Array2::zeros((2, 2)));
    let emp = sample_paths(&[st1, st2], &array![1.0, 0.0], 10_000, 3);
    assert_eq!(emp.counts.sum() + emp.residual_counts.sum(), 10_000);
    assert_eq!(emp.residual_counts[0], 0);
    assert_eq!(emp.counts[[0, 1]] + emp.residual_counts[1], 10_000);
}
