//! Pieces shared by the single- and multi-period formulations: opening and
//! charger variables, station caps, zone quotas, and solution extraction.

use thiserror::Error;

use crate::domain::{Deployment, Instance};
use crate::milp::{ConstraintSense, MilpError, MilpModel, ScalingSpec, SolveResult, SolveStatus, VarId, VarKind};

/// Largest distance between a rounded integer value and the raw solver value.
pub const INTEGRALITY_TOLERANCE: f64 = 1e-4;
/// Allowed deviation of an assignment row sum from one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("lambda must lie in [0, 1], got {0}")]
    Lambda(f64),
    #[error("charger type {charger}: recharge periods {recharge} do not divide horizon {periods}")]
    Indivisible { charger: usize, recharge: u32, periods: usize },
    #[error("instance has no demand")]
    ZeroDemand,
    #[error("malformed instance: {0}")]
    Malformed(String),
    #[error(transparent)]
    Milp(#[from] MilpError),
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("solve ended with status {0}, no solution to extract")]
    NoSolution(SolveStatus),
    #[error("result has {got} values, model has {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("variable {name} = {value} is not integral within tolerance")]
    Integrality { name: String, value: f64 },
    #[error("assignment row of node {node}{} sums to {sum}", period.map(|t| format!(" period {t}")).unwrap_or_default())]
    RowSum { node: usize, period: Option<usize>, sum: f64 },
}

/// Structural sanity needed before any model is built.
pub(crate) fn check_structure(inst: &Instance, lambda: f64) -> Result<Vec<u32>, ModelError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(ModelError::Lambda(lambda));
    }
    let kk = inst.num_types();
    let malformed = |m: String| Err(ModelError::Malformed(m));
    if inst.periods == 0 {
        return malformed("zero periods".into());
    }
    if inst.distances.rows() != inst.num_nodes() || inst.distances.cols() != inst.num_stations() {
        return malformed("distance matrix shape".into());
    }
    for s in &inst.stations {
        if s.cap_per_type.len() != kk || s.install_cost.len() != kk || s.zone >= inst.zones.len() {
            return malformed(format!("station {}", s.id));
        }
    }
    for z in &inst.zones {
        if z.min_share.len() != kk {
            return malformed(format!("zone {}", z.id));
        }
    }
    for n in &inst.nodes {
        if n.profile.len() != inst.periods || n.zone >= inst.zones.len() {
            return malformed(format!("node {}", n.id));
        }
    }
    let p = inst.throughputs().map_err(|k| ModelError::Indivisible {
        charger: k,
        recharge: inst.chargers[k].recharge_periods,
        periods: inst.periods,
    })?;
    if inst.total_demand() == 0 {
        return Err(ModelError::ZeroDemand);
    }
    Ok(p)
}

/// Opening binaries `z_j` and charger counts `y_jk`, carrying the cost
/// half of the objective.
pub(crate) struct DeploymentVars {
    pub z: Vec<VarId>,
    pub y: Vec<VarId>,
    pub types: usize,
}

impl DeploymentVars {
    pub fn y(&self, j: usize, k: usize) -> VarId {
        self.y[j * self.types + k]
    }
}

pub(crate) fn add_deployment(
    model: &mut MilpModel,
    inst: &Instance,
    lambda: f64,
    scaling: &ScalingSpec,
) -> Result<DeploymentVars, MilpError> {
    let w = (1.0 - lambda) / scaling.cost_divisor;
    let kk = inst.num_types();
    let mut z = Vec::with_capacity(inst.num_stations());
    let mut y = Vec::with_capacity(inst.num_stations() * kk);
    for s in &inst.stations {
        z.push(model.add_var(format!("z_{}", s.id), VarKind::Binary, w * s.open_cost)?);
    }
    for s in &inst.stations {
        for k in 0..kk {
            let kind = VarKind::Integer {
                lb: 0.0,
                ub: s.cap_per_type[k] as f64,
            };
            y.push(model.add_var(format!("y_{}_{}", s.id, k), kind, w * s.install_cost[k])?);
        }
    }
    Ok(DeploymentVars { z, y, types: kk })
}

/// Per-type and total caps at each station; both vanish when the station
/// stays closed.
pub(crate) fn add_station_caps(model: &mut MilpModel, inst: &Instance, dv: &DeploymentVars) -> Result<(), MilpError> {
    for s in &inst.stations {
        for k in 0..dv.types {
            model.add_constraint(
                format!("typecap_{}_{}", s.id, k),
                vec![(dv.y(s.id, k), 1.0), (dv.z[s.id], -(s.cap_per_type[k] as f64))],
                ConstraintSense::Le,
                0.0,
            )?;
        }
    }
    for s in &inst.stations {
        let mut terms: Vec<(VarId, f64)> = (0..dv.types).map(|k| (dv.y(s.id, k), 1.0)).collect();
        terms.push((dv.z[s.id], -(s.cap_total as f64)));
        model.add_constraint(format!("totcap_{}", s.id), terms, ConstraintSense::Le, 0.0)?;
    }
    Ok(())
}

/// `sum_{j in zone} y_jk >= rho_lk * sum_{j in zone} sum_k' y_jk'`, one row
/// per zone and type.
pub(crate) fn add_zone_quotas(model: &mut MilpModel, inst: &Instance, dv: &DeploymentVars) -> Result<(), MilpError> {
    for zone in &inst.zones {
        let members: Vec<usize> = inst.station_members(zone.id).collect();
        for k in 0..dv.types {
            let rho = zone.min_share[k];
            let mut terms = Vec::with_capacity(members.len() * dv.types);
            for &j in &members {
                for k2 in 0..dv.types {
                    let coef = if k2 == k { 1.0 - rho } else { -rho };
                    if coef != 0.0 {
                        terms.push((dv.y(j, k2), coef));
                    }
                }
            }
            model.add_constraint(format!("quota_{}_{}", zone.id, k), terms, ConstraintSense::Ge, 0.0)?;
        }
    }
    Ok(())
}

pub(crate) fn solution_values(result: &SolveResult, expected: usize) -> Result<&[f64], ExtractError> {
    if !result.status.has_solution() {
        return Err(ExtractError::NoSolution(result.status));
    }
    if result.values.len() != expected {
        return Err(ExtractError::Dimension {
            got: result.values.len(),
            expected,
        });
    }
    Ok(&result.values)
}

pub(crate) fn round_integral(name: impl FnOnce() -> String, value: f64) -> Result<u32, ExtractError> {
    let r = value.round();
    if (value - r).abs() > INTEGRALITY_TOLERANCE || r < 0.0 {
        return Err(ExtractError::Integrality { name: name(), value });
    }
    Ok(r as u32)
}

pub(crate) fn extract_deployment(values: &[f64], dv: &DeploymentVars) -> Result<Deployment, ExtractError> {
    let stations = dv.z.len();
    let mut dep = Deployment::closed(stations, dv.types);
    for j in 0..stations {
        dep.open[j] = round_integral(|| format!("z_{j}"), values[dv.z[j].0])? == 1;
        for k in 0..dv.types {
            let v = round_integral(|| format!("y_{j}_{k}"), values[dv.y(j, k).0])?;
            dep.set_count(j, k, v);
        }
    }
    Ok(dep)
}

pub(crate) fn clip_unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}
