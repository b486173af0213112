//! `stopbridge` command-line front end.
//!
//! Exit codes: 0 ok, 1 invalid input or usage, 2 not converged, 3 path space
//! above the enumeration cap, 4 verification ran but a check failed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use stopbridge_core::path_oracle::check_cap;
use stopbridge_core::problem::{rows, ArrivalDocument, PolicyDocument, BUNDLED_EXAMPLES};
use stopbridge_core::verify::{verify_solution, VerifyReport, VerifyTolerances};
use stopbridge_core::{
    empirical_distance, induced_marginals, prior_arrival_distribution, sample_paths, solve, solve_regularized,
    ArrivalDistribution, Error, Problem, Solution, StateSpace, DEFAULT_PATH_CAP,
};

#[derive(Debug, Parser)]
#[command(name = "stopbridge", version, about = "Schrödinger bridges with stopping-time marginals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the optimal policy.
    Solve {
        /// Problem file, or the name of a bundled example.
        problem: String,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Solve, then audit the policy against path-space fitting.
    Verify {
        problem: String,
        /// Largest path space to enumerate.
        #[arg(long, env = "STOPBRIDGE_CAP", default_value_t = DEFAULT_PATH_CAP)]
        cap: usize,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// First-arrival distribution of the prior from `mu0`.
    Arrival {
        problem: String,
        /// Use the solved policy started from `mu_hat0` instead of the prior.
        #[arg(long)]
        policy: bool,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte-Carlo walkers under the solved policy, started from `mu_hat0`.
    Simulate {
        problem: String,
        /// Number of walkers.
        #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulate the prior from `mu0` and compare with its exact arrivals.
        #[arg(long)]
        prior: bool,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Bundled example problems.
    Example {
        #[command(subcommand)]
        action: ExampleAction,
    },
}

#[derive(Debug, Subcommand)]
enum ExampleAction {
    /// Names and descriptions.
    List,
    /// Print the problem file.
    Show { name: String },
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Stopping tolerance on the arrival residual.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Print a single JSON document instead of tables.
    #[arg(long)]
    json: bool,
    /// Also write the JSON document to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NotConverged { .. } | Error::IpfNotConverged { .. } => 2,
            Error::StateSpaceTooLarge { .. } => 3,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<u8, Failure>;

fn load(problem: &str, solver: &SolverArgs) -> Result<Problem, Failure> {
    let path = Path::new(problem);
    let mut p = if path.exists() {
        Problem::load(path)?
    } else if let Some(bundled) = Problem::bundled(problem) {
        bundled?
    } else {
        return Err(Failure {
            code: 1,
            message: format!("no problem file or bundled example named {problem:?}"),
        });
    };
    if let Some(tol) = solver.tol {
        if !(tol.is_finite() && tol >= 0.0) {
            return Err(Error::InvalidValue {
                field: "tol".into(),
                reason: "must be finite and nonnegative".into(),
            }
            .into());
        }
        p.options.tol = tol;
    }
    if let Some(max_iter) = solver.max_iter {
        p.options.max_iter = max_iter;
    }
    Ok(p)
}

fn run_solver(p: &Problem) -> stopbridge_core::Result<Solution> {
    match &p.costs {
        Some(costs) => solve_regularized(&p.prior, costs, &p.spec, p.options),
        None => solve(&p.prior, &p.spec, p.options),
    }
}

fn emit(doc: &Value, human: String, output: &OutputArgs) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(doc).expect("documents serialize");
    if let Some(path) = &output.out {
        std::fs::write(path, format!("{text}\n")).map_err(|e| Failure {
            code: 1,
            message: format!("cannot write {}: {e}", path.display()),
        })?;
    }
    if output.json {
        println!("{text}");
    } else {
        print!("{human}");
    }
    Ok(())
}

fn table(out: &mut String, title: &str, row_labels: &[String], col_labels: &[String], cells: &[Vec<f64>]) {
    let width = row_labels.iter().map(String::len).max().unwrap_or(0).max(4);
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "  {:width$}", "");
    for c in col_labels {
        let _ = write!(out, " {c:>22}");
    }
    let _ = writeln!(out);
    for (label, row) in row_labels.iter().zip(cells) {
        let _ = write!(out, "  {label:width$}");
        for v in row {
            let _ = write!(out, " {v:>22}");
        }
        let _ = writeln!(out);
    }
}

fn taus(t: usize) -> Vec<String> {
    (1..=t).map(|tau| format!("tau={tau}")).collect()
}

fn arrival_table(out: &mut String, title: &str, space: &StateSpace, doc: &ArrivalDocument) {
    table(out, title, space.absorbing_labels(), &taus(doc.arrivals.first().map_or(0, Vec::len)), &doc.arrivals);
    let _ = writeln!(out, "  still transient: {:?}", doc.residual);
    let _ = writeln!(out, "  total arrival mass: {}", doc.total);
}

fn cmd_solve(problem: &str, solver: &SolverArgs, output: &OutputArgs) -> CliResult {
    let p = load(problem, solver)?;
    let sol = match run_solver(&p) {
        Ok(s) => s,
        Err(e @ Error::NotConverged { .. }) => {
            eprintln!("{e}");
            eprintln!("tol {} max_iter {}", p.options.tol, p.options.max_iter);
            return Ok(2);
        }
        Err(e) => return Err(e.into()),
    };
    let induced = induced_marginals(&sol.policy, p.spec.mu_hat0());
    let doc = PolicyDocument::new(&p, &sol, &induced);

    let space = p.prior.space();
    let mut labels: Vec<String> = space.absorbing_labels().to_vec();
    labels.extend(space.transient_labels().iter().cloned());
    let mut human = String::new();
    if let Some(name) = &doc.name {
        let _ = writeln!(human, "problem {name}");
    }
    for (k, stage) in doc.stages.iter().enumerate() {
        let cells: Vec<Vec<f64>> = stage.b.iter().zip(&stage.a).map(|(b, a)| b.iter().chain(a).copied().collect()).collect();
        table(&mut human, &format!("stage {} transitions", k + 1), space.transient_labels(), &labels, &cells);
    }
    table(
        &mut human,
        "Lambda",
        &taus(doc.horizon),
        space.absorbing_labels(),
        &doc.scaling.lambda,
    );
    let mut d_cells = vec![doc.scaling.kernel_d.clone()];
    d_cells.extend(doc.d_vectors.iter().cloned());
    let d_labels: Vec<String> = (0..=doc.horizon).map(|k| if k == 0 { "D0".into() } else { format!("d{k}") }).collect();
    table(&mut human, "row scalings", &d_labels, space.transient_labels(), &d_cells);
    for u in &doc.unreachable {
        let _ = writeln!(human, "unreachable: state {} at stage {}", u.state, u.stage);
    }
    arrival_table(&mut human, "induced arrivals", space, &doc.induced);
    let pr = &doc.provenance;
    let _ = writeln!(
        human,
        "iterations {} final residual {:e} (tol {:e}, max_iter {}){}",
        pr.iterations,
        pr.final_residual,
        pr.tol,
        pr.max_iter,
        if pr.regularized { ", cost regularized" } else { "" }
    );

    emit(&serde_json::to_value(&doc).expect("policy serializes"), human, output)?;
    Ok(0)
}

fn verify_human(report: &VerifyReport) -> String {
    let mark = |ok: bool| if ok { "ok" } else { "FAILED" };
    let t = &report.tolerances;
    let mut s = String::new();
    let _ = writeln!(s, "paths enumerated: {}", report.num_paths);
    let _ = writeln!(s, "KL(policy || prior): {}", report.kl_policy);
    let _ = writeln!(s, "KL(fitted || prior): {}", report.kl_ipf);
    let _ = writeln!(
        s,
        "TV(policy, fitted): {:e} (tol {:e}) {}",
        report.tv_policy_vs_ipf,
        t.tv,
        mark(report.tv_policy_vs_ipf <= t.tv)
    );
    let _ = writeln!(
        s,
        "constraint residual: {:e} (tol {:e}) {}",
        report.constraint_residual,
        t.constraints,
        mark(report.constraint_residual <= t.constraints)
    );
    let _ = writeln!(
        s,
        "Markovianity of fitted law: {:e} (tol {:e}) {}",
        report.ipf_markovianity.worst_violation,
        t.markov,
        mark(report.ipf_markovianity.passed)
    );
    let _ = writeln!(
        s,
        "shared bridges: {:e} over {} classes (tol {:e}) {}",
        report.shared_bridges.worst_violation,
        report.shared_bridges.classes_compared,
        t.bridges,
        mark(report.shared_bridges.passed)
    );
    let _ = writeln!(s, "{}", if report.passed { "all checks passed" } else { "verification failed" });
    s
}

fn cmd_verify(problem: &str, cap: usize, solver: &SolverArgs, output: &OutputArgs) -> CliResult {
    let p = load(problem, solver)?;
    check_cap(p.prior.space(), p.prior.horizon(), cap)?;
    if p.costs.is_some() {
        return Err(Failure {
            code: 1,
            message: "verify compares against the unregularized projection; remove costs and beta".into(),
        });
    }
    let sol = run_solver(&p)?;
    let report = verify_solution(&p.prior, &p.spec, &sol, cap, VerifyTolerances::default())?;
    emit(&serde_json::to_value(&report).expect("report serializes"), verify_human(&report), output)?;
    Ok(if report.passed { 0 } else { 4 })
}

fn cmd_arrival(problem: &str, policy: bool, solver: &SolverArgs, output: &OutputArgs) -> CliResult {
    let p = load(problem, solver)?;
    let (arrival, title): (ArrivalDistribution, _) = if policy {
        let sol = run_solver(&p)?;
        (induced_marginals(&sol.policy, p.spec.mu_hat0()), "policy arrivals from mu_hat0")
    } else {
        (prior_arrival_distribution(p.prior.stages(), p.prior.mu0()), "prior arrivals from mu0")
    };
    let doc = ArrivalDocument::new(p.prior.space(), &arrival);
    let mut human = String::new();
    arrival_table(&mut human, title, p.prior.space(), &doc);
    emit(&serde_json::to_value(&doc).expect("arrivals serialize"), human, output)?;
    Ok(0)
}

fn cmd_simulate(problem: &str, n: u64, seed: u64, prior: bool, solver: &SolverArgs, output: &OutputArgs) -> CliResult {
    let p = load(problem, solver)?;
    let (emp, target) = if prior {
        let exact = prior_arrival_distribution(p.prior.stages(), p.prior.mu0());
        (sample_paths(p.prior.stages(), p.prior.mu0(), n, seed), exact.arrivals)
    } else {
        let sol = run_solver(&p)?;
        (sample_paths(sol.policy.stages(), p.spec.mu_hat0(), n, seed), p.spec.nu_hat().clone())
    };
    let (linf, l1) = empirical_distance(&emp, &target);
    let freq = emp.frequencies();
    let doc = json!({
        "law": if prior { "prior" } else { "policy" },
        "n": n,
        "seed": seed,
        "frequencies": rows(&freq),
        "target": rows(&target),
        "residual_frequencies": emp.residual_frequencies().to_vec(),
        "linf": linf,
        "l1": l1,
    });

    let space = p.prior.space();
    let mut human = String::new();
    let _ = writeln!(human, "{} walkers under the {}, seed {seed}", n, if prior { "prior" } else { "policy" });
    table(&mut human, "empirical arrivals", space.absorbing_labels(), &taus(target.ncols()), &rows(&freq));
    table(&mut human, "target arrivals", space.absorbing_labels(), &taus(target.ncols()), &rows(&target));
    let _ = writeln!(human, "  still transient: {:?}", emp.residual_frequencies().to_vec());
    let _ = writeln!(human, "Linf {linf} L1 {l1}");
    emit(&doc, human, output)?;
    Ok(0)
}

fn cmd_example(action: &ExampleAction) -> CliResult {
    match action {
        ExampleAction::List => {
            for (name, text) in BUNDLED_EXAMPLES {
                let description = serde_json::from_str::<Value>(text)
                    .ok()
                    .and_then(|v| v["description"].as_str().map(str::to_owned))
                    .unwrap_or_default();
                println!("{name:12} {description}");
            }
            Ok(0)
        }
        ExampleAction::Show { name } => match BUNDLED_EXAMPLES.iter().find(|(n, _)| n == name) {
            Some((_, text)) => {
                print!("{text}");
                Ok(0)
            }
            None => Err(Failure {
                code: 1,
                message: format!("no bundled example named {name:?}"),
            }),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Solve { problem, solver, output } => cmd_solve(problem, solver, output),
        Command::Verify {
            problem,
            cap,
            solver,
            output,
        } => cmd_verify(problem, *cap, solver, output),
        Command::Arrival {
            problem,
            policy,
            solver,
            output,
        } => cmd_arrival(problem, *policy, solver, output),
        Command::Simulate {
            problem,
            n,
            seed,
            prior,
            solver,
            output,
        } => cmd_simulate(problem, *n, *seed, *prior, solver, output),
        Command::Example { action } => cmd_example(action),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
