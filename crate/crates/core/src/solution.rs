//! Solving an instance end to end, and the solution file format.
//!
//! A solution file carries the deployment, the nonzero assignment
//! fractions, the unscaled objective terms and the solver summary:
//!
//! ```json
//! {
//!   "instance": "50_20_30",
//!   "model": "sp",
//!   "lambda": 0.5,
//!   "dims": {"periods": 24, "nodes": 50, "stations": 20, "types": 2},
//!   "deployment": {"open": [0, 3], "counts": {"0": {"0": 3, "1": 1}, "3": {"1": 2}}},
//!   "assignment": {"0": {"3": {"1": 1.0}}},
//!   "objective": {"scaled": 0.12, "avg_distance_m": 812.4, "total_cost": 131000.0},
//!   "solve": {"status": "optimal", "objective": 0.12, "bound": 0.12, "gap_pct": 0.0, "wall_s": 1.3}
//! }
//! ```
//!
//! Assignments map node, station and type to the routed fraction and omit
//! zeros. Multi-period files add the period as the outermost key.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Assignment, Deployment, Instance, ModelKind, MpAssignment, SpAssignment};
use crate::evaluator::{
    check_mp_feasible, objective_components, occupancy, reallocate, EvalError, EvaluationReport, FeasibilityReport,
    ObjectiveComponents, OccupancyLedger, VacancyRule,
};
use crate::formulation::{ExtractError, ModelError};
use crate::milp::{make_scaling, MilpError, ScalingSpec, SolveOptions, SolveResult, SolverBackend};
use crate::{mp, sp};

#[derive(Debug, Error)]
pub enum SolutionError {
    #[error("malformed solution file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("solution does not fit the instance: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub periods: usize,
    pub nodes: usize,
    pub stations: usize,
    pub types: usize,
}

impl Dims {
    pub fn of(inst: &Instance) -> Self {
        Self {
            periods: inst.periods,
            nodes: inst.num_nodes(),
            stations: inst.num_stations(),
            types: inst.num_types(),
        }
    }
}

/// Nonzero chargers per station and type.
type Counts = BTreeMap<usize, BTreeMap<usize, u32>>;
/// Nonzero fractions by node, station and type.
type Routing = BTreeMap<usize, BTreeMap<usize, BTreeMap<usize, f64>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DeploymentFile {
    /// Ids of the open stations.
    open: Vec<usize>,
    counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ObjectiveFile {
    scaled: f64,
    avg_distance_m: f64,
    total_cost: f64,
}

#[derive(Deserialize)]
struct ModelTag {
    model: ModelKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SolutionFile<A> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instance: Option<String>,
    model: ModelKind,
    lambda: f64,
    dims: Dims,
    deployment: DeploymentFile,
    /// `Routing` for SP, keyed by period first for MP.
    assignment: A,
    objective: ObjectiveFile,
    solve: SolveResult,
}

/// A solved model in instance terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub instance: Option<String>,
    pub lambda: f64,
    pub dims: Dims,
    pub deployment: Deployment,
    pub assignment: Assignment,
    pub components: ObjectiveComponents,
    pub scaled_objective: f64,
    pub solve: SolveResult,
}

impl Solution {
    pub fn model(&self) -> ModelKind {
        self.assignment.mode()
    }

    pub fn sp_assignment(&self) -> Option<&SpAssignment> {
        match &self.assignment {
            Assignment::Single(x) => Some(x),
            Assignment::Multi(_) => None,
        }
    }

    pub fn mp_assignment(&self) -> Option<&MpAssignment> {
        match &self.assignment {
            Assignment::Multi(x) => Some(x),
            Assignment::Single(_) => None,
        }
    }

    pub fn to_json(&self) -> String {
        let d = &self.dims;
        let mut counts = Counts::new();
        for j in 0..d.stations {
            for k in 0..d.types {
                let c = self.deployment.count(j, k);
                if c > 0 {
                    counts.entry(j).or_default().insert(k, c);
                }
            }
        }
        let deployment = DeploymentFile {
            open: (0..d.stations).filter(|&j| self.deployment.open[j]).collect(),
            counts,
        };
        let routing = |get: &dyn Fn(usize, usize, usize) -> f64| {
            let mut r = Routing::new();
            for i in 0..d.nodes {
                for j in 0..d.stations {
                    for k in 0..d.types {
                        let v = get(i, j, k);
                        if v != 0.0 {
                            r.entry(i).or_default().entry(j).or_default().insert(k, v);
                        }
                    }
                }
            }
            r
        };
        match &self.assignment {
            Assignment::Single(x) => self.file_text(deployment, routing(&|i, j, k| x.get(i, j, k))),
            Assignment::Multi(x) => {
                let per_period: BTreeMap<usize, Routing> = (0..d.periods)
                    .map(|t| (t, routing(&|i, j, k| x.get(t, i, j, k))))
                    .filter(|(_, r)| !r.is_empty())
                    .collect();
                self.file_text(deployment, per_period)
            }
        }
    }

    fn file_text<A: Serialize>(&self, deployment: DeploymentFile, assignment: A) -> String {
        let file = SolutionFile {
            instance: self.instance.clone(),
            model: self.model(),
            lambda: self.lambda,
            dims: self.dims,
            deployment,
            assignment,
            objective: ObjectiveFile {
                scaled: self.scaled_objective,
                avg_distance_m: self.components.avg_distance_m,
                total_cost: self.components.total_cost,
            },
            solve: self.solve.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("solution serializes");
        s.push('\n');
        s
    }
    pub fn from_json(text: &str) -> Result<Self, SolutionError> {
        match serde_json::from_str::<ModelTag>(text)?.model {
            ModelKind::Sp => Self::from_file(serde_json::from_str::<SolutionFile<Routing>>(text)?),
            ModelKind::Mp => Self::from_file(serde_json::from_str::<SolutionFile<BTreeMap<usize, Routing>>>(text)?),
        }
    }

    fn from_file<A: IntoAssignment>(f: SolutionFile<A>) -> Result<Self, SolutionError> {
        let d = f.dims;
        let bad = |m: String| Err(SolutionError::Mismatch(m));
        let mut dep = Deployment::closed(d.stations, d.types);
        for &j in &f.deployment.open {
            if j >= d.stations {
                return bad(format!("open station {j} out of range"));
            }
            dep.open[j] = true;
        }
        for (&j, row) in &f.deployment.counts {
            for (&k, &c) in row {
                if j >= d.stations || k >= d.types {
                    return bad(format!("count for station {j}, type {k} out of range"));
                }
                dep.set_count(j, k, c);
            }
        }
        let assignment = f.assignment.into_assignment(d)?;
        Ok(Self {
            instance: f.instance,
            lambda: f.lambda,
            dims: d,
            deployment: dep,
            assignment,
            components: ObjectiveComponents {
                avg_distance_m: f.objective.avg_distance_m,
                total_cost: f.objective.total_cost,
            },
            scaled_objective: f.objective.scaled,
            solve: f.solve,
        })
    }

    /// Fails unless the solution's shape matches `inst`.
    pub fn check_fits(&self, inst: &Instance) -> Result<(), SolutionError> {
        if self.dims != Dims::of(inst) {
            return Err(SolutionError::Mismatch(format!(
                "solution dims {:?}, instance dims {:?}",
                self.dims,
                Dims::of(inst)
            )));
        }
        Ok(())
    }

    /// Replays the solution over the horizon.
    ///
    /// SP solutions go through reallocation. MP solutions are checked
    /// against every multi-period constraint and only get a report when the
    /// check is clean.
    pub fn evaluate(&self, inst: &Instance, rule: VacancyRule) -> Result<SolutionEvaluation, EvalError> {
        let dep = &self.deployment;
        match &self.assignment {
            Assignment::Single(x) => {
                let out = reallocate(inst, dep, x, rule)?;
                Ok(SolutionEvaluation {
                    report: Some(EvaluationReport::new(inst, dep, &out)),
                    conservation_error: Some(out.conservation_error()),
                    feasibility: FeasibilityReport::default(),
                    ledger: out.ledger,
                })
            }
            Assignment::Multi(x) => {
                let feasibility = check_mp_feasible(inst, dep, x);
                Ok(SolutionEvaluation {
                    report: feasibility.is_empty().then(|| EvaluationReport::fully_served(inst, dep)),
                    conservation_error: None,
                    ledger: occupancy(inst, dep, x)?,
                    feasibility,
                })
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolutionEvaluation {
    /// `None` for an MP solution that failed its feasibility check.
    pub report: Option<EvaluationReport>,
    pub ledger: OccupancyLedger,
    /// Always empty for SP solutions.
    pub feasibility: FeasibilityReport,
    /// SP only.
    pub conservation_error: Option<f64>,
}

fn fill(d: Dims, r: &Routing, set: &mut dyn FnMut(usize, usize, usize, f64)) -> Result<(), SolutionError> {
    for (&i, by_station) in r {
        for (&j, by_type) in by_station {
            for (&k, &v) in by_type {
                if i >= d.nodes || j >= d.stations || k >= d.types {
                    return Err(SolutionError::Mismatch(format!("assignment ({i}, {j}, {k}) out of range")));
                }
                set(i, j, k, v);
            }
        }
    }
    Ok(())
}

trait IntoAssignment {
    fn into_assignment(self, d: Dims) -> Result<Assignment, SolutionError>;
}

impl IntoAssignment for Routing {
    fn into_assignment(self, d: Dims) -> Result<Assignment, SolutionError> {
        let mut x = SpAssignment::zeros(d.nodes, d.stations, d.types);
        fill(d, &self, &mut |i, j, k, v| x.set(i, j, k, v))?;
        Ok(Assignment::Single(x))
    }
}

impl IntoAssignment for BTreeMap<usize, Routing> {
    fn into_assignment(self, d: Dims) -> Result<Assignment, SolutionError> {
        let mut x = MpAssignment::zeros(d.periods, d.nodes, d.stations, d.types);
        for (&t, r) in &self {
            if t >= d.periods {
                return Err(SolutionError::Mismatch(format!("assignment period {t} out of range")));
            }
            fill(d, r, &mut |i, j, k, v| x.set(t, i, j, k, v))?;
        }
        Ok(Assignment::Multi(x))
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Everything known about one solve.
#[derive(Debug, Clone)]
pub struct Run {
    pub model: ModelKind,
    pub lambda: f64,
    pub backend: &'static str,
    pub scaling: ScalingSpec,
    pub num_vars: usize,
    pub num_constraints: usize,
    pub build_s: f64,
    pub result: SolveResult,
    /// Present whenever the solver returned an incumbent.
    pub solution: Option<Solution>,
}

/// Run metadata written next to a solution file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    pub model: ModelKind,
    pub lambda: f64,
    pub backend: String,
    pub options: SolveOptions,
    pub scaling: ScalingSpec,
    pub num_vars: usize,
    pub num_constraints: usize,
    pub build_s: f64,
    pub solve: SolveResult,
    pub version: String,
}

impl Run {
    pub fn metadata(&self, instance: Option<String>, options: &SolveOptions) -> RunMetadata {
        RunMetadata {
            instance,
            model: self.model,
            lambda: self.lambda,
            backend: self.backend.to_string(),
            options: options.clone(),
            scaling: self.scaling,
            num_vars: self.num_vars,
            num_constraints: self.num_constraints,
            build_s: self.build_s,
            solve: self.result.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Builds, solves and extracts one model of `inst`.
pub fn solve_instance(
    inst: &Instance,
    model: ModelKind,
    lambda: f64,
    options: &SolveOptions,
    backend: &dyn SolverBackend,
) -> Result<Run, RunError> {
    let scaling = make_scaling(inst)?;
    let start = Instant::now();
    enum Index {
        Sp(sp::SpVarIndex),
        Mp(mp::MpVarIndex),
    }
    let (milp, index) = match model {
        ModelKind::Sp => {
            let (m, i) = sp::build_sp(inst, lambda, &scaling)?;
            (m, Index::Sp(i))
        }
        ModelKind::Mp => {
            let (m, i) = mp::build_mp(inst, lambda, &scaling)?;
            (m, Index::Mp(i))
        }
    };
    let build_s = start.elapsed().as_secs_f64();
    log::info!(
        "{} {} lambda={lambda}: {} vars, {} rows",
        inst.name.as_deref().unwrap_or("instance"),
        model,
        milp.num_vars(),
        milp.num_constraints()
    );
    let result = backend.solve(&milp, options)?;
    let solution = if result.status.has_solution() {
        let (deployment, assignment) = match &index {
            Index::Sp(i) => {
                let (d, x) = sp::extract_sp(&result, i)?;
                (d, Assignment::Single(x))
            }
            Index::Mp(i) => {
                let (d, x) = mp::extract_mp(&result, i)?;
                (d, Assignment::Multi(x))
            }
        };
        let components = objective_components(inst, &deployment, &assignment)?;
        Some(Solution {
            instance: inst.name.clone(),
            lambda,
            dims: Dims::of(inst),
            scaled_objective: components.scaled(lambda, &scaling),
            deployment,
            assignment,
            components,
            solve: SolveResult {
                values: Vec::new(),
                ..result.clone()
            },
        })
    } else {
        None
    };
    Ok(Run {
        model,
        lambda,
        backend: backend.id(),
        scaling,
        num_vars: milp.num_vars(),
        num_constraints: milp.num_constraints(),
        build_s,
        result,
        solution,
    })
}
