//! Backend-neutral mixed-integer linear models.
//!
//! A [`MilpModel`] is a plain registry of variables, linear constraints and a
//! minimization objective. Backends implement [`SolverBackend`] and translate
//! the registry into whatever their native API expects.

use std::collections::HashSet;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Instance, ModelKind};

#[cfg(feature = "highs")]
mod highs_backend;
mod lp_format;

#[cfg(feature = "highs")]
pub use highs_backend::HighsBackend;
pub use lp_format::write_lp;

/// Denominator floor in the relative gap.
pub const GAP_EPSILON: f64 = 1e-9;

/// Environment variable naming the backend used by [`default_backend`].
pub const BACKEND_ENV: &str = "EVCFL_BACKEND";

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("constraint `{constraint}` references unregistered variable {var}")]
    UnknownVariable { constraint: String, var: usize },
    #[error("invalid scaling: {0}")]
    Scaling(String),
    #[error("solver configuration: {0}")]
    Config(String),
    #[error("solver backend failure: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarKind {
    Binary,
    Integer { lb: f64, ub: f64 },
    Continuous { lb: f64, ub: f64 },
}

impl VarKind {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            VarKind::Binary => (0.0, 1.0),
            VarKind::Integer { lb, ub } | VarKind::Continuous { lb, ub } => (lb, ub),
        }
    }

    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintSense {
    Le,
    Eq,
    Ge,
}

impl ConstraintSense {
    pub fn symbol(self) -> &'static str {
        match self {
            ConstraintSense::Le => "<=",
            ConstraintSense::Eq => "=",
            ConstraintSense::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: ConstraintSense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violate the constraint; zero when satisfied.
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            ConstraintSense::Le => (lhs - self.rhs).max(0.0),
            ConstraintSense::Ge => (self.rhs - lhs).max(0.0),
            ConstraintSense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub instance: Option<String>,
    pub kind: Option<ModelKind>,
    pub lambda: Option<f64>,
}

/// Minimization MILP.
#[derive(Debug, Clone, Default)]
pub struct MilpModel {
    vars: Vec<Variable>,
    objective: Vec<f64>,
    constraints: Vec<LinearConstraint>,
    var_names: HashSet<String>,
    row_names: HashSet<String>,
    pub meta: ModelMeta,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, cost: f64) -> Result<VarId, MilpError> {
        let name = name.into();
        if !self.var_names.insert(name.clone()) {
            return Err(MilpError::DuplicateName(name));
        }
        self.vars.push(Variable { name, kind });
        self.objective.push(cost);
        Ok(VarId(self.vars.len() - 1))
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        sense: ConstraintSense,
        rhs: f64,
    ) -> Result<(), MilpError> {
        let name = name.into();
        if let Some(&(bad, _)) = terms.iter().find(|(v, _)| v.0 >= self.vars.len()) {
            return Err(MilpError::UnknownVariable {
                constraint: name,
                var: bad.0,
            });
        }
        if !self.row_names.insert(name.clone()) {
            return Err(MilpError::DuplicateName(name));
        }
        self.constraints.push(LinearConstraint { name, terms, sense, rhs });
        Ok(())
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn has_integers(&self) -> bool {
        self.vars.iter().any(|v| v.kind.is_integral())
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, x)| c * x).sum()
    }

    /// Largest bound or row violation of a candidate point.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let bounds = self.vars.iter().zip(values).map(|(v, &x)| {
            let (lb, ub) = v.kind.bounds();
            (lb - x).max(x - ub).max(0.0)
        });
        let rows = self.constraints.iter().map(|c| c.violation(values));
        bounds.chain(rows).fold(0.0, f64::max)
    }
}

/// Drops integrality; bounds are kept.
pub fn lp_relaxation(model: &MilpModel) -> MilpModel {
    let mut relaxed = model.clone();
    for v in &mut relaxed.vars {
        let (lb, ub) = v.kind.bounds();
        v.kind = VarKind::Continuous { lb, ub };
    }
    relaxed
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    /// A limit stopped the search with an incumbent in hand.
    Feasible,
    Infeasible,
    Unbounded,
    Error,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::Error => "error",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    #[serde(skip)]
    pub values: Vec<f64>,
    pub objective: Option<f64>,
    pub bound: Option<f64>,
    pub gap_pct: Option<f64>,
    pub wall_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl SolveResult {
    pub fn without_solution(status: SolveStatus, wall: Duration, message: Option<String>) -> Self {
        Self {
            status,
            values: Vec::new(),
            objective: None,
            bound: None,
            gap_pct: None,
            wall_s: wall.as_secs_f64(),
            message,
        }
    }
}

/// Relative gap in percent: `100 (obj - bound) / max(|obj|, eps)`, clamped
/// at zero.
pub fn gap_percent(objective: f64, bound: f64) -> f64 {
    (100.0 * (objective - bound) / objective.abs().max(GAP_EPSILON)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub time_limit_s: f64,
    pub threads: u32,
    pub seed: u64,
    pub mip_rel_gap: f64,
    pub mip_abs_gap: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            time_limit_s: 3600.0,
            threads: std::thread::available_parallelism().map(|n| n.get() as u32).unwrap_or(1),
            seed: 0,
            mip_rel_gap: 1e-6,
            mip_abs_gap: 1e-9,
        }
    }
}

impl SolveOptions {
    pub fn with_time_limit(mut self, seconds: f64) -> Self {
        self.time_limit_s = seconds;
        self
    }

    pub fn with_threads(mut self, threads: u32) -> Self {
        self.threads = threads;
        self
    }
}

/// The narrow contract every solver backend fulfils.
pub trait SolverBackend: Send + Sync {
    fn id(&self) -> &'static str;

    fn solve(&self, model: &MilpModel, options: &SolveOptions) -> Result<SolveResult, MilpError>;
}

/// Resolves a backend by name: `highs` or `exact-tiny`.
pub fn backend_by_name(name: &str) -> Result<Box<dyn SolverBackend>, MilpError> {
    match name {
        #[cfg(feature = "highs")]
        "highs" => Ok(Box::new(HighsBackend)),
        #[cfg(not(feature = "highs"))]
        "highs" => Err(MilpError::Config("built without the `highs` feature".into())),
        "exact-tiny" => Ok(Box::new(crate::oracle::TinyExactBackend::default())),
        other => Err(MilpError::Config(format!("unknown backend `{other}`"))),
    }
}

/// Backend named by `EVCFL_BACKEND`, defaulting to HiGHS.
pub fn default_backend() -> Result<Box<dyn SolverBackend>, MilpError> {
    let name = std::env::var(BACKEND_ENV).unwrap_or_else(|_| "highs".to_string());
    backend_by_name(&name)
}

/// Solves with the default backend.
pub fn solve(model: &MilpModel, options: &SolveOptions) -> Result<SolveResult, MilpError> {
    default_backend()?.solve(model, options)
}

/// Divisors that bring the distance and cost terms of the objectives to a
/// comparable magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub distance_divisor: f64,
    pub cost_divisor: f64,
}

impl ScalingSpec {
    pub const IDENTITY: ScalingSpec = ScalingSpec {
        distance_divisor: 1.0,
        cost_divisor: 1.0,
    };
}

/// Distance divisor is the longest node-station distance, cost divisor the
/// price of opening every station at full capacity. A zero divisor falls
/// back to 1; both zero means the objective vanishes and is rejected.
pub fn make_scaling(inst: &Instance) -> Result<ScalingSpec, MilpError> {
    let d_max = inst.distances.max();
    let c_max: f64 = inst
        .stations
        .iter()
        .map(|s| {
            s.open_cost
                + s.install_cost
                    .iter()
                    .zip(&s.cap_per_type)
                    .map(|(f, &u)| f * u as f64)
                    .sum::<f64>()
        })
        .sum();
    if !d_max.is_finite() || !c_max.is_finite() {
        return Err(MilpError::Scaling("non-finite distance or cost data".into()));
    }
    if d_max <= 0.0 && c_max <= 0.0 {
        return Err(MilpError::Scaling("all distances and all costs are zero".into()));
    }
    let fallback = |v: f64| if v > 0.0 { v } else { 1.0 };
    Ok(ScalingSpec {
        distance_divisor: fallback(d_max),
        cost_divisor: fallback(c_max),
    })
}
