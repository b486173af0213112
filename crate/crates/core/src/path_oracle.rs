//! Ground truth on explicitly enumerated path spaces.
//!
//! Paths use full-alphabet indexing (absorbing states `0..m`, transient
//! states `m..m+n`) and always have length `t + 1`: once a walker is
//! absorbed at `j`, the remaining entries repeat `j`. Enumeration emits paths
//! in lexicographic order, which the comparison routines rely on.

use std::cmp::Ordering;
use std::collections::HashMap;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::Serialize;

use crate::chain_model::{StageFactors, StateSpace};
use crate::error::{Error, Result};

/// Default cap on `(m + n)^(t + 1)`.
pub const DEFAULT_PATH_CAP: usize = 2_000_000;

/// An explicit (possibly unnormalized) measure on paths of length `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLaw {
    m: usize,
    len: usize,
    paths: Vec<u16>,
    probs: Vec<f64>,
}

impl PathLaw {
    /// Number of absorbing states.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Horizon `t`.
    pub fn horizon(&self) -> usize {
        self.len - 1
    }

    pub fn num_paths(&self) -> usize {
        self.probs.len()
    }

    pub fn path(&self, k: usize) -> &[u16] {
        &self.paths[k * self.len..(k + 1) * self.len]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u16], f64)> + '_ {
        self.paths.chunks_exact(self.len).zip(self.probs.iter().copied())
    }

    /// Same support with new masses.
    pub fn with_probs(&self, probs: Vec<f64>) -> Self {
        assert_eq!(probs.len(), self.probs.len());
        Self {
            probs,
            ..self.clone()
        }
    }

    pub fn normalized(&self) -> Self {
        let z = self.total();
        self.with_probs(self.probs.iter().map(|p| p / z).collect())
    }

    /// First absorption `(j, τ)`, `τ` 1-based, or `None` if the path ends transient.
    pub fn first_arrival(&self, path: &[u16]) -> Option<(usize, usize)> {
        path.iter()
            .enumerate()
            .skip(1)
            .find(|(_, &x)| (x as usize) < self.m)
            .map(|(tau, &x)| (x as usize, tau))
    }

    /// Distribution of `x_0` over transient states (length `n_states - m`).
    pub fn initial_marginal(&self, n: usize) -> Array1<f64> {
        let mut out = Array1::zeros(n);
        for (p, w) in self.iter() {
            out[p[0] as usize - self.m] += w;
        }
        out
    }

    /// Distribution of `x_tau` over the full alphabet of `size` states.
    pub fn marginal(&self, tau: usize, size: usize) -> Array1<f64> {
        let mut out = Array1::zeros(size);
        for (p, w) in self.iter() {
            out[p[tau] as usize] += w;
        }
        out
    }

    /// `m × t` first-arrival masses.
    pub fn arrival_masses(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.m, self.horizon()));
        for (p, w) in self.iter() {
            if let Some((j, tau)) = self.first_arrival(p) {
                out[[j, tau - 1]] += w;
            }
        }
        out
    }
}

fn enumeration_size(space: &StateSpace, horizon: usize) -> f64 {
    (space.size() as f64).powi(horizon as i32 + 1)
}

/// Refuses path spaces with more than `cap` sequences.
pub fn check_cap(space: &StateSpace, horizon: usize, cap: usize) -> Result<()> {
    let size = enumeration_size(space, horizon);
    if size > cap as f64 {
        return Err(Error::StateSpaceTooLarge { size, cap });
    }
    Ok(())
}

fn extend<S: AsRef<StageFactors>>(
    stages: &[S],
    m: usize,
    prefix: &mut Vec<u16>,
    mass: f64,
    paths: &mut Vec<u16>,
    probs: &mut Vec<f64>,
) {
    let tau = prefix.len() - 1;
    if tau == stages.len() {
        paths.extend_from_slice(prefix);
        probs.push(mass);
        return;
    }
    let last = *prefix.last().unwrap() as usize;
    if last < m {
        prefix.push(last as u16);
        extend(stages, m, prefix, mass, paths, probs);
        prefix.pop();
        return;
    }
    let x = last - m;
    let stage = stages[tau].as_ref();
    for (j, &p) in stage.b.row(x).iter().enumerate() {
        if p > 0.0 {
            prefix.push(j as u16);
            extend(stages, m, prefix, mass * p, paths, probs);
            prefix.pop();
        }
    }
    for (y, &p) in stage.a.row(x).iter().enumerate() {
        if p > 0.0 {
            prefix.push((m + y) as u16);
            extend(stages, m, prefix, mass * p, paths, probs);
            prefix.pop();
        }
    }
}

/// Enumerates every path with positive mass under `mu` and the given stage factors.
pub fn enumerate_paths<S: AsRef<StageFactors> + Sync>(
    space: &StateSpace,
    stages: &[S],
    mu: &Array1<f64>,
    cap: usize,
) -> Result<PathLaw> {
    check_cap(space, stages.len(), cap)?;
    let m = space.m();
    let chunks: Vec<(Vec<u16>, Vec<f64>)> = (0..space.n())
        .into_par_iter()
        .map(|x0| {
            let mut paths = Vec::new();
            let mut probs = Vec::new();
            if mu[x0] > 0.0 {
                let mut prefix = vec![(m + x0) as u16];
                extend(stages, m, &mut prefix, mu[x0], &mut paths, &mut probs);
            }
            (paths, probs)
        })
        .collect();
    let mut paths = Vec::new();
    let mut probs = Vec::new();
    for (p, w) in chunks {
        paths.extend(p);
        probs.extend(w);
    }
    Ok(PathLaw {
        m,
        len: stages.len() + 1,
        paths,
        probs,
    })
}

/// Walks two lexicographically sorted laws together, yielding `(path, p, q)`
/// over the union of supports (missing entries are 0).
fn merge_join<'a>(p: &'a PathLaw, q: &'a PathLaw) -> Vec<(&'a [u16], f64, f64)> {
    assert_eq!(p.len, q.len, "path laws over different horizons");
    let mut out = Vec::with_capacity(p.num_paths().max(q.num_paths()));
    let (mut i, mut k) = (0, 0);
    while i < p.num_paths() || k < q.num_paths() {
        let ord = match (i < p.num_paths(), k < q.num_paths()) {
            (true, true) => p.path(i).cmp(q.path(k)),
            (true, false) => Ordering::Less,
            _ => Ordering::Greater,
        };
        match ord {
            Ordering::Less => {
                out.push((p.path(i), p.probs[i], 0.0));
                i += 1;
            }
            Ordering::Greater => {
                out.push((q.path(k), 0.0, q.probs[k]));
                k += 1;
            }
            Ordering::Equal => {
                out.push((p.path(i), p.probs[i], q.probs[k]));
                i += 1;
                k += 1;
            }
        }
    }
    out
}

/// Relative entropy `Σ P log(P/Q)` with `0·log 0 = 0`; `+∞` without absolute continuity.
pub fn kl_divergence(p: &PathLaw, q: &PathLaw) -> f64 {
    let mut acc = 0.0;
    for (_, pw, qw) in merge_join(p, q) {
        if pw == 0.0 {
            continue;
        }
        if qw == 0.0 {
            return f64::INFINITY;
        }
        acc += pw * (pw / qw).ln();
    }
    acc
}

/// Total variation `½ Σ |P − Q|`.
pub fn total_variation(p: &PathLaw, q: &PathLaw) -> f64 {
    0.5 * merge_join(p, q)
        .into_iter()
        .map(|(_, a, b)| (a - b).abs())
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IpfOptions {
    pub max_sweeps: usize,
    /// Largest allowed constraint violation after a sweep.
    pub tol: f64,
}

impl Default for IpfOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 200_000,
            tol: 1e-14,
        }
    }
}

/// Scales all paths in `members` (a predicate over path index) to total
/// `target`, and the complement to `1 - target`. Masses must sum to 1.
fn binary_fit(probs: &mut [f64], member: &[bool], target: f64) -> std::result::Result<(), f64> {
    let inside: f64 = probs.iter().zip(member).filter(|(_, &m)| m).map(|(p, _)| p).sum();
    let outside: f64 = probs.iter().zip(member).filter(|(_, &m)| !m).map(|(p, _)| p).sum();
    let factor = |want: f64, have: f64| -> std::result::Result<f64, f64> {
        if want == 0.0 {
            Ok(0.0)
        } else if have == 0.0 {
            Err(want)
        } else {
            Ok(want / have)
        }
    };
    let f_in = factor(target, inside)?;
    let f_out = factor((1.0 - target).max(0.0), outside)?;
    for (p, &m) in probs.iter_mut().zip(member) {
        *p *= if m { f_in } else { f_out };
    }
    Ok(())
}

/// Fits the partition `labels` (one class id per path) to `targets`.
fn partition_fit(probs: &mut [f64], labels: &[usize], targets: &[f64]) -> std::result::Result<(), f64> {
    let mut sums = vec![0.0; targets.len()];
    for (p, &c) in probs.iter().zip(labels) {
        sums[c] += p;
    }
    let mut factors = vec![0.0; targets.len()];
    for (c, (&want, &have)) in targets.iter().zip(&sums).enumerate() {
        if want > 0.0 {
            if have == 0.0 {
                return Err(want);
            }
            factors[c] = want / have;
        }
    }
    for (p, &c) in probs.iter_mut().zip(labels) {
        *p *= factors[c];
    }
    Ok(())
}

fn partition_violation(probs: &[f64], labels: &[usize], targets: &[f64]) -> f64 {
    let mut sums = vec![0.0; targets.len()];
    for (p, &c) in probs.iter().zip(labels) {
        sums[c] += p;
    }
    sums.iter()
        .zip(targets)
        .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
}

/// I-projection of `q` onto `{initial marginal = mu_hat0, first-arrival masses = nu_hat}`
/// by cyclic proportional fitting: the initial family first, then each
/// `(j, τ)` constraint in lexicographic order.
pub fn ipf_project(q: &PathLaw, mu_hat0: &Array1<f64>, nu_hat: &Array2<f64>, opts: IpfOptions) -> Result<PathLaw> {
    let m = q.m;
    let t = q.horizon();
    assert_eq!(nu_hat.dim(), (m, t));
    let starts: Vec<usize> = q.iter().map(|(p, _)| p[0] as usize - m).collect();
    let arrivals: Vec<Option<(usize, usize)>> = q.iter().map(|(p, _)| q.first_arrival(p)).collect();
    let mut constraints: Vec<((usize, usize), Vec<bool>)> = Vec::with_capacity(m * t);
    for j in 0..m {
        for tau in 1..=t {
            let member = arrivals.iter().map(|a| *a == Some((j, tau))).collect();
            constraints.push(((j, tau), member));
        }
    }
    let mu_targets: Vec<f64> = mu_hat0.to_vec();
    let infeasible = |sweeps: usize| Error::IpfNotConverged {
        sweeps,
        violation: f64::INFINITY,
    };

    let mut probs = q.normalized().probs;
    let mut violation = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        partition_fit(&mut probs, &starts, &mu_targets).map_err(|_| infeasible(sweep))?;
        for ((j, tau), member) in &constraints {
            binary_fit(&mut probs, member, nu_hat[[*j, tau - 1]]).map_err(|_| infeasible(sweep))?;
        }
        violation = partition_violation(&probs, &starts, &mu_targets);
        let mut masses = Array2::<f64>::zeros((m, t));
        for (w, a) in probs.iter().zip(&arrivals) {
            if let Some((j, tau)) = a {
                masses[[*j, tau - 1]] += w;
            }
        }
        for (a, b) in masses.iter().zip(nu_hat.iter()) {
            violation = violation.max((a - b).abs());
        }
        if violation <= opts.tol {
            return Ok(q.with_probs(probs));
        }
    }
    Err(Error::IpfNotConverged {
        sweeps: opts.max_sweeps,
        violation,
    })
}

/// I-projection onto prescribed distributions of `x_0` and `x_t` over the full alphabet.
pub fn ipf_endpoints(q: &PathLaw, mu0: &Array1<f64>, mu_t: &Array1<f64>, opts: IpfOptions) -> Result<PathLaw> {
    let first: Vec<usize> = q.iter().map(|(p, _)| p[0] as usize).collect();
    let last: Vec<usize> = q.iter().map(|(p, _)| *p.last().unwrap() as usize).collect();
    let (a, b) = (mu0.to_vec(), mu_t.to_vec());
    let mut probs = q.normalized().probs;
    let mut violation = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        let fail = |_| Error::IpfNotConverged {
            sweeps: sweep,
            violation: f64::INFINITY,
        };
        partition_fit(&mut probs, &first, &a).map_err(fail)?;
        partition_fit(&mut probs, &last, &b).map_err(fail)?;
        violation = partition_violation(&probs, &first, &a).max(partition_violation(&probs, &last, &b));
        if violation <= opts.tol {
            return Ok(q.with_probs(probs));
        }
    }
    Err(Error::IpfNotConverged {
        sweeps: opts.max_sweeps,
        violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovianityReport {
    /// Largest spread of `P(x_{τ+1} = y | history)` across histories sharing `x_τ`.
    pub worst_violation: f64,
    /// `(τ, x_τ, y)` at the worst violation.
    pub worst_at: Option<(usize, usize, usize)>,
    pub passed: bool,
}

/// Checks that next-step conditionals depend on the history only through the current state.
pub fn markovianity_check(p: &PathLaw, tol: f64) -> MarkovianityReport {
    let alphabet = p.iter().flat_map(|(x, _)| x.iter().copied()).max().map_or(0, |v| v as usize + 1);
    let mut worst = 0.0_f64;
    let mut worst_at = None;
    for tau in 0..p.horizon() {
        // (x_τ, y) -> (min, max) of conditionals across histories
        let mut bounds: HashMap<usize, (Vec<f64>, Vec<f64>)> = HashMap::new();
        let mut k = 0;
        while k < p.num_paths() {
            let prefix = &p.path(k)[..=tau];
            let mut next = vec![0.0; alphabet];
            let mut mass = 0.0;
            let mut end = k;
            while end < p.num_paths() && &p.path(end)[..=tau] == prefix {
                next[p.path(end)[tau + 1] as usize] += p.probs[end];
                mass += p.probs[end];
                end += 1;
            }
            if mass > 0.0 {
                let state = prefix[tau] as usize;
                let entry = bounds
                    .entry(state)
                    .or_insert_with(|| (vec![f64::INFINITY; alphabet], vec![f64::NEG_INFINITY; alphabet]));
                for (y, w) in next.iter().enumerate() {
                    let c = w / mass;
                    entry.0[y] = entry.0[y].min(c);
                    entry.1[y] = entry.1[y].max(c);
                }
            }
            k = end;
        }
        for (state, (lo, hi)) in &bounds {
            for y in 0..alphabet {
                let spread = hi[y] - lo[y];
                if spread > worst {
                    worst = spread;
                    worst_at = Some((tau, *state, y));
                }
            }
        }
    }
    MarkovianityReport {
        worst_violation: worst,
        worst_at,
        passed: worst <= tol,
    }
}

/// Endpoint class of a path: start state plus first arrival, or start plus
/// terminal transient state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum PinnedClass {
    Absorbed { start: u16, j: usize, tau: usize },
    Surviving { start: u16, end: u16 },
}

fn pinned_class(law: &PathLaw, path: &[u16]) -> PinnedClass {
    match law.first_arrival(path) {
        Some((j, tau)) => PinnedClass::Absorbed { start: path[0], j, tau },
        None => PinnedClass::Surviving {
            start: path[0],
            end: *path.last().unwrap(),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharedBridgesReport {
    pub worst_violation: f64,
    /// Pinned classes carrying mass under both laws.
    pub classes_compared: usize,
    pub passed: bool,
}

/// Compares the conditional path distributions of `q` and `p` within every
/// pinned class that has positive mass under both.
pub fn shared_bridges_check(q: &PathLaw, p: &PathLaw, tol: f64) -> SharedBridgesReport {
    let joined = merge_join(q, p);
    let mut class_mass: HashMap<PinnedClass, (f64, f64)> = HashMap::new();
    for (path, qw, pw) in &joined {
        let e = class_mass.entry(pinned_class(q, path)).or_insert((0.0, 0.0));
        e.0 += qw;
        e.1 += pw;
    }
    let mut worst = 0.0_f64;
    for (path, qw, pw) in &joined {
        let (qc, pc) = class_mass[&pinned_class(q, path)];
        if qc > 0.0 && pc > 0.0 {
            worst = worst.max((qw / qc - pw / pc).abs());
        }
    }
    SharedBridgesReport {
        worst_violation: worst,
        classes_compared: class_mass.values().filter(|(a, b)| *a > 0.0 && *b > 0.0).count(),
        passed: worst <= tol,
    }
}

/// Mass at absorbing `j` at or before time `tau`.
pub fn cumulative_constraint_eval(p: &PathLaw, j: usize, tau: usize) -> f64 {
    p.iter()
        .filter(|(path, _)| path[tau] as usize == j)
        .map(|(_, w)| w)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_path_law(p: f64) -> PathLaw {
        let space = StateSpace::with_sizes(1, 1).unwrap();
        let st = StageFactors::new(array![[p]], array![[1.0 - p]]);
        enumerate_paths(&space, &[st], &array![1.0], DEFAULT_PATH_CAP).unwrap()
    }

    #[test]
    fn two_paths() {
        let law = two_path_law(0.3);
        assert_eq!(law.num_paths(), 2);
        assert_eq!(law.path(0), &[1, 0]);
        assert_eq!(law.probs(), &[0.3, 0.7]);
    }

    #[test]
    fn kl_closed_forms() {
        let q = two_path_law(0.5);
        assert_eq!(kl_divergence(&q, &q), 0.0);
        let p = q.with_probs(vec![1.0, 0.0]);
        assert!((kl_divergence(&p, &q) - 2f64.ln()).abs() < 1e-15);
        let point = q.with_probs(vec![1.0, 0.0]);
        assert_eq!(kl_divergence(&q, &point), f64::INFINITY);
        assert!((total_variation(&p, &q) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn padding_and_cumulative() {
        let space = StateSpace::with_sizes(1, 1).unwrap();
        let st = StageFactors::new(array![[0.25]], array![[0.75]]);
        let law = enumerate_paths(&space, &vec![st; 3], &array![1.0], DEFAULT_PATH_CAP).unwrap();
        for (p, _) in law.iter() {
            if let Some(pos) = p.iter().position(|&x| x == 0) {
                assert!(p[pos..].iter().all(|&x| x == 0));
            }
        }
        let total = cumulative_constraint_eval(&law, 0, 3) + law.iter().filter(|(p, _)| p[3] == 1).map(|(_, w)| w).sum::<f64>();
        assert!((total - 1.0).abs() < 1e-15);
        assert!((cumulative_constraint_eval(&law, 0, 2) - (0.25 + 0.75 * 0.25)).abs() < 1e-15);
    }

    #[test]
    fn cap_is_enforced() {
        let space = StateSpace::with_sizes(3, 6).unwrap();
        assert!(matches!(check_cap(&space, 8, DEFAULT_PATH_CAP), Err(Error::StateSpaceTooLarge { .. })));
        assert!(check_cap(&StateSpace::with_sizes(2, 5).unwrap(), 5, DEFAULT_PATH_CAP).is_ok());
    }

    #[test]
    fn initial_only_projection_reweights() {
        let space = StateSpace::with_sizes(1, 2).unwrap();
        let st = StageFactors::new(array![[0.3], [0.6]], array![[0.5, 0.2], [0.1, 0.3]]);
        let mu0 = array![0.5, 0.5];
        let q = enumerate_paths(&space, &vec![st; 2], &mu0, DEFAULT_PATH_CAP).unwrap();
        // arrivals left at their prior values so only the initial family binds
        let target0 = array![0.8, 0.2];
        let reweighted: Vec<f64> = q.iter().map(|(p, w)| w * target0[p[0] as usize - 1] / mu0[p[0] as usize - 1]).collect();
        let expect = q.with_probs(reweighted);
        let nu = expect.arrival_masses();
        let got = ipf_project(&q, &target0, &nu, IpfOptions::default()).unwrap();
        assert!(total_variation(&got, &expect) < 1e-12);
    }

    #[test]
    fn consistent_constraints_leave_law_unchanged() {
        let space = StateSpace::with_sizes(2, 2).unwrap();
        let st = StageFactors::new(array![[0.3, 0.1], [0.2, 0.2]], array![[0.4, 0.2], [0.1, 0.5]]);
        let q = enumerate_paths(&space, &vec![st; 3], &array![0.6, 0.4], DEFAULT_PATH_CAP).unwrap();
        let got = ipf_project(&q, &array![0.6, 0.4], &q.arrival_masses(), IpfOptions::default()).unwrap();
        for (a, b) in got.probs().iter().zip(q.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn markov_laws_pass_and_mixtures_fail() {
        let space = StateSpace::with_sizes(1, 2).unwrap();
        let s1 = StageFactors::new(array![[0.1], [0.2]], array![[0.6, 0.3], [0.3, 0.5]]);
        let s2 = StageFactors::new(array![[0.4], [0.1]], array![[0.1, 0.5], [0.8, 0.1]]);
        let mu = array![0.5, 0.5];
        let p1 = enumerate_paths(&space, &vec![s1.clone(); 3], &mu, DEFAULT_PATH_CAP).unwrap();
        let p2 = enumerate_paths(&space, &vec![s2; 3], &mu, DEFAULT_PATH_CAP).unwrap();
        assert!(markovianity_check(&p1, 1e-12).passed);
        assert!(markovianity_check(&p2, 1e-12).passed);
        let mixed = p1.with_probs(
            merge_join(&p1, &p2)
                .into_iter()
                .map(|(_, a, b)| 0.5 * a + 0.5 * b)
                .collect(),
        );
        let report = markovianity_check(&mixed, 1e-6);
        assert!(!report.passed);
        assert!(report.worst_violation > 1e-3);
    }

    #[test]
    fn shared_bridges_trivial() {
        let law = two_path_law(0.4);
        let r = shared_bridges_check(&law, &law, 1e-12);
        assert!(r.passed);
        assert_eq!(r.classes_compared, 2);
    }
}
