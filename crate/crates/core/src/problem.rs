//! JSON problem files and policy documents.
//!
//! A problem file names the states, gives the prior stages (one object for a
//! time-invariant prior, or one object per stage), the initial laws and the
//! `m × t` first-arrival targets. Numbers may be JSON numbers or strings
//! holding a decimal or a fraction such as `"1/8"`.
//!
//! ```json
//! {
//!   "states": { "absorbing": ["ruin", "win"], "transient": ["1", "2"] },
//!   "horizon": 2,
//!   "stages": { "B": [[0.5, 0], [0, 0.5]], "A": [[0, 0.5], [0.5, 0]] },
//!   "mu0": [0.5, 0.5],
//!   "mu_hat0": [0.5, 0.5],
//!   "nu_hat": [["1/4", "1/8"], ["1/4", "1/8"]]
//! }
//! ```
//!
//! Optional fields: `costs` (same shape as `stages`) with `beta`, `solver`
//! (`tol`, `max_iter`) and `renormalize`.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::chain_model::{
    validate_marginals, validate_prior_with, MarginalSpec, PriorLaw, StageFactors, StateSpace,
};
use crate::cost::EdgeCostSchedule;
use crate::error::{Error, Result};
use crate::expansion::ArrivalDistribution;
use crate::pipeline::Solution;
use crate::sinkhorn::SinkhornOptions;

/// Bundled example problems, `(name, json)`.
pub const BUNDLED_EXAMPLES: &[(&str, &str)] = &[
    ("de_moivre", include_str!("../examples/de_moivre.json")),
    ("traffic", include_str!("../examples/traffic.json")),
];

/// A number given either as a JSON number or as a decimal/fraction string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Float(f64),
    Text(String),
}

impl From<f64> for Number {
    fn from(v: f64) -> Self {
        Number::Float(v)
    }
}

impl Number {
    pub fn value(&self, field: &str) -> Result<f64> {
        let bad = |reason: String| Error::InvalidValue {
            field: field.to_string(),
            reason,
        };
        match self {
            Number::Float(v) => Ok(*v),
            Number::Text(s) => {
                let s = s.trim();
                let v = match s.split_once('/') {
                    Some((num, den)) => {
                        let num: f64 = num.trim().parse().map_err(|_| bad(format!("cannot parse {s:?}")))?;
                        let den: f64 = den.trim().parse().map_err(|_| bad(format!("cannot parse {s:?}")))?;
                        if den == 0.0 {
                            return Err(bad(format!("zero denominator in {s:?}")));
                        }
                        num / den
                    }
                    None => s.parse().map_err(|_| bad(format!("cannot parse {s:?}")))?,
                };
                Ok(v)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatesSection {
    pub absorbing: Vec<String>,
    pub transient: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    #[serde(rename = "B")]
    pub b: Vec<Vec<Number>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<Number>>,
}

/// One stage replicated over the horizon, or one entry per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StagesSection {
    Invariant(StageSection),
    PerStage(Vec<StageSection>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub states: StatesSection,
    pub horizon: usize,
    pub stages: StagesSection,
    pub mu0: Vec<Number>,
    pub mu_hat0: Vec<Number>,
    pub nu_hat: Vec<Vec<Number>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<StagesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renormalize: Option<bool>,
}

/// A loaded and validated problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub name: Option<String>,
    pub prior: PriorLaw,
    pub spec: MarginalSpec,
    pub costs: Option<EdgeCostSchedule>,
    pub options: SinkhornOptions,
}

fn vector(field: &str, values: &[Number]) -> Result<Array1<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| v.value(&format!("{field}[{i}]")))
        .collect::<Result<Vec<_>>>()
        .map(Array1::from)
}

fn matrix(field: &str, rows: &[Vec<Number>], shape: (usize, usize)) -> Result<Array2<f64>> {
    let (r, c) = shape;
    if rows.len() != r {
        return Err(Error::DimensionMismatch {
            field: field.to_string(),
            expected: format!("{r} rows"),
            got: rows.len().to_string(),
        });
    }
    let mut out = Array2::zeros(shape);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != c {
            return Err(Error::DimensionMismatch {
                field: format!("{field}[{i}]"),
                expected: format!("{c} entries"),
                got: row.len().to_string(),
            });
        }
        for (k, v) in row.iter().enumerate() {
            out[[i, k]] = v.value(&format!("{field}[{i}][{k}]"))?;
        }
    }
    Ok(out)
}

fn stage_factors(field: &str, section: &StagesSection, space: &StateSpace, horizon: usize) -> Result<Vec<StageFactors>> {
    let (m, n) = (space.m(), space.n());
    let build = |name: String, s: &StageSection| -> Result<StageFactors> {
        Ok(StageFactors::new(
            matrix(&format!("{name}.B"), &s.b, (n, m))?,
            matrix(&format!("{name}.A"), &s.a, (n, n))?,
        ))
    };
    match section {
        StagesSection::Invariant(s) => Ok(vec![build(field.to_string(), s)?; horizon]),
        StagesSection::PerStage(list) => {
            if list.len() != horizon {
                return Err(Error::DimensionMismatch {
                    field: field.to_string(),
                    expected: format!("{horizon} stages"),
                    got: list.len().to_string(),
                });
            }
            list.iter()
                .enumerate()
                .map(|(k, s)| build(format!("{field}[{k}]"), s))
                .collect()
        }
    }
}

impl ProblemFile {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize")
    }

    /// Validates every section and builds the solver inputs.
    pub fn build(&self) -> Result<Problem> {
        let space = StateSpace::new(self.states.absorbing.clone(), self.states.transient.clone())?;
        if self.horizon == 0 {
            return Err(Error::InvalidValue {
                field: "horizon".into(),
                reason: "must be a positive integer".into(),
            });
        }
        let stages = stage_factors("stages", &self.stages, &space, self.horizon)?;
        let prior = validate_prior_with(
            space.clone(),
            stages,
            vector("mu0", &self.mu0)?,
            self.renormalize.unwrap_or(false),
        )?;
        let spec = validate_marginals(
            &space,
            self.horizon,
            vector("mu_hat0", &self.mu_hat0)?,
            matrix("nu_hat", &self.nu_hat, (space.m(), self.horizon))?,
        )?;
        let costs = match (&self.costs, &self.beta) {
            (None, None) => None,
            (Some(c), Some(beta)) => Some(EdgeCostSchedule::new(
                &space,
                stage_factors("costs", c, &space, self.horizon)?,
                beta.value("beta")?,
            )?),
            (Some(_), None) => {
                return Err(Error::InvalidValue {
                    field: "beta".into(),
                    reason: "required when costs are given".into(),
                })
            }
            (None, Some(_)) => {
                return Err(Error::InvalidValue {
                    field: "costs".into(),
                    reason: "required when beta is given".into(),
                })
            }
        };
        let mut options = SinkhornOptions::default();
        if let Some(solver) = &self.solver {
            if let Some(tol) = solver.tol {
                options.tol = tol;
            }
            if let Some(max_iter) = solver.max_iter {
                options.max_iter = max_iter;
            }
        }
        Ok(Problem {
            name: self.name.clone(),
            prior,
            spec,
            costs,
            options,
        })
    }
}

impl Problem {
    pub fn load(path: &Path) -> Result<Self> {
        ProblemFile::load(path)?.build()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        ProblemFile::from_json_str(text)?.build()
    }

    pub fn bundled(name: &str) -> Option<Result<Self>> {
        BUNDLED_EXAMPLES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_json_str(text))
    }
}

pub fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageDocument {
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingDocument {
    /// Row scaling on the joint-law scale.
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    /// `D ⊘ mu_hat0`, the per-row kernel scaling.
    #[serde(rename = "D0")]
    pub kernel_d: Vec<f64>,
    /// `t × m`, row `τ-1` is `Λ_τ`.
    pub lambda: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProvenanceDocument {
    pub tol: f64,
    pub max_iter: usize,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub regularized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArrivalDocument {
    pub states: StatesSection,
    /// `m × t` first-arrival masses.
    pub arrivals: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
    pub total: f64,
}

impl ArrivalDocument {
    pub fn new(space: &StateSpace, arrival: &ArrivalDistribution) -> Self {
        Self {
            states: states_section(space),
            arrivals: rows(&arrival.arrivals),
            residual: arrival.residual.to_vec(),
            total: arrival.total(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnreachableDocument {
    pub stage: usize,
    pub state: String,
}

/// Serialized policy: stages in input format plus scalings, `d` vectors and provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyDocument {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub states: StatesSection,
    pub horizon: usize,
    pub stages: Vec<StageDocument>,
    pub scaling: ScalingDocument,
    pub d0: Vec<f64>,
    pub d_vectors: Vec<Vec<f64>>,
    pub unreachable: Vec<UnreachableDocument>,
    pub induced: ArrivalDocument,
    pub provenance: ProvenanceDocument,
}

fn states_section(space: &StateSpace) -> StatesSection {
    StatesSection {
        absorbing: space.absorbing_labels().to_vec(),
        transient: space.transient_labels().to_vec(),
    }
}

impl PolicyDocument {
    pub fn new(problem: &Problem, solution: &Solution, induced: &ArrivalDistribution) -> Self {
        let policy = &solution.policy;
        let space = policy.space();
        Self {
            name: problem.name.clone(),
            states: states_section(space),
            horizon: policy.horizon(),
            stages: policy
                .stages()
                .iter()
                .map(|s| StageDocument {
                    b: rows(&s.b),
                    a: rows(&s.a),
                })
                .collect(),
            scaling: ScalingDocument {
                d: solution.scalings.d.to_vec(),
                kernel_d: solution.scalings.kernel_scaling().to_vec(),
                lambda: rows(&solution.scalings.lambda_table()),
            },
            d0: policy.d0().to_vec(),
            d_vectors: policy.d_vectors().iter().map(|d| d.to_vec()).collect(),
            unreachable: policy
                .unreachable()
                .iter()
                .map(|u| UnreachableDocument {
                    stage: u.stage,
                    state: space.transient_labels()[u.state].clone(),
                })
                .collect(),
            induced: ArrivalDocument::new(space, induced),
            provenance: ProvenanceDocument {
                tol: solution.options.tol,
                max_iter: solution.options.max_iter,
                iterations: solution.diagnostics.iterations,
                final_residual: solution.diagnostics.final_residual,
                converged: solution.diagnostics.converged,
                regularized: problem.costs.is_some(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_parse() {
        assert_eq!(Number::Text("1/8".into()).value("x").unwrap(), 0.125);
        assert_eq!(Number::Text(" 0.25 ".into()).value("x").unwrap(), 0.25);
        assert_eq!(Number::Float(0.5).value("x").unwrap(), 0.5);
        assert!(Number::Text("1/0".into()).value("x").is_err());
        assert!(Number::Text("abc".into()).value("x").is_err());
    }

    #[test]
    fn bundled_examples_load() {
        for (name, _) in BUNDLED_EXAMPLES {
            let p = Problem::bundled(name).unwrap().unwrap();
            assert_eq!(p.name.as_deref(), Some(*name));
        }
        assert!(Problem::bundled("nope").is_none());
    }

    #[test]
    fn six_entry_row_is_rejected() {
        let text = BUNDLED_EXAMPLES[1].1;
        let mut file = ProblemFile::from_json_str(text).unwrap();
        file.nu_hat[0].push(Number::Float(0.0));
        let err = file.build().unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { ref field, .. } if field == "nu_hat[0]"));
    }

    #[test]
    fn excess_mass_names_nu_hat() {
        let mut file = ProblemFile::from_json_str(BUNDLED_EXAMPLES[0].1).unwrap();
        file.nu_hat[0][0] = Number::Float(0.7);
        let err = file.build().unwrap_err();
        assert!(matches!(err, Error::MassExceedsOne { .. }));
        assert!(err.to_string().contains("nu_hat"));
    }

    #[test]
    fn costs_require_beta() {
        let mut file = ProblemFile::from_json_str(BUNDLED_EXAMPLES[0].1).unwrap();
        file.costs = Some(file.stages.clone());
        assert!(matches!(file.build(), Err(Error::InvalidValue { ref field, .. }) if field == "beta"));
        file.beta = Some(Number::Float(2.0));
        let p = file.build().unwrap();
        assert_eq!(p.costs.unwrap().beta(), 2.0);
    }

    #[test]
    fn syntax_errors_are_parse_errors() {
        assert!(matches!(ProblemFile::from_json_str("{"), Err(Error::Parse(_))));
    }
}
