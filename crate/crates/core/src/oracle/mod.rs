//! Exhaustive reference solvers for tiny instances.
//!
//! [`brute_force_sp`] and [`brute_force_mp`] enumerate every deployment that
//! respects the station caps and zone quotas and, for each, route the demand
//! optimally with a min-cost flow. They share nothing with the MILP
//! formulations beyond the instance data, which is what makes them useful
//! for cross-checking.

mod exact;
mod mcf;

use std::cmp::Ordering;

use thiserror::Error;

use crate::domain::{Deployment, Instance};
use crate::formulation::{check_structure, ModelError};
use crate::milp::ScalingSpec;

pub use exact::{solve_lp_exact, LpOutcome, TinyExactBackend};
pub use mcf::{FlowResult, MinCostFlow};

pub const MAX_STATIONS: usize = 3;
pub const MAX_TOTAL_CAP: u32 = 6;
pub const MAX_NODES: usize = 5;
pub const MAX_MP_PERIODS: usize = 4;

/// Objective values within this relative distance are treated as ties.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance exceeds the enumeration budget: {0}")]
    Budget(String),
    #[error("outside the oracle's scope: {0}")]
    Scope(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// Scaled objective, directly comparable with the MILP value.
    pub objective: f64,
    pub deployment: Deployment,
    /// Demand-weighted mean distance, meters.
    pub avg_distance_m: f64,
    pub total_cost: f64,
    /// Number of deployments examined.
    pub enumerated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Optimal(OracleSolution),
    Infeasible { enumerated: usize },
}

impl OracleOutcome {
    pub fn objective(&self) -> Option<f64> {
        match self {
            OracleOutcome::Optimal(s) => Some(s.objective),
            OracleOutcome::Infeasible { .. } => None,
        }
    }

    pub fn solution(&self) -> Option<&OracleSolution> {
        match self {
            OracleOutcome::Optimal(s) => Some(s),
            OracleOutcome::Infeasible { .. } => None,
        }
    }
}

fn check_budget(inst: &Instance) -> Result<(), OracleError> {
    if inst.num_stations() > MAX_STATIONS {
        return Err(OracleError::Budget(format!("{} stations > {MAX_STATIONS}", inst.num_stations())));
    }
    if inst.num_nodes() > MAX_NODES {
        return Err(OracleError::Budget(format!("{} nodes > {MAX_NODES}", inst.num_nodes())));
    }
    let cap: u32 = inst.stations.iter().map(|s| s.cap_total).sum();
    if cap > MAX_TOTAL_CAP {
        return Err(OracleError::Budget(format!("total station cap {cap} > {MAX_TOTAL_CAP}")));
    }
    Ok(())
}

/// Every deployment allowed by the per-type and total caps.
fn enumerate_deployments(inst: &Instance) -> Vec<Deployment> {
    let kk = inst.num_types();
    let mut out = vec![Deployment::closed(inst.num_stations(), kk)];
    for s in &inst.stations {
        let mut vectors: Vec<Vec<u32>> = vec![Vec::new()];
        for k in 0..kk {
            vectors = vectors
                .into_iter()
                .flat_map(|v| {
                    (0..=s.cap_per_type[k]).map(move |c| {
                        let mut w = v.clone();
                        w.push(c);
                        w
                    })
                })
                .filter(|v| v.iter().sum::<u32>() <= s.cap_total)
                .collect();
        }
        let mut next = Vec::with_capacity(out.len() * (vectors.len() + 1));
        for dep in &out {
            next.push(dep.clone());
            for v in &vectors {
                let mut d = dep.clone();
                d.open[s.id] = true;
                for (k, &c) in v.iter().enumerate() {
                    d.set_count(s.id, k, c);
                }
                next.push(d);
            }
        }
        out = next;
    }
    out
}

fn satisfies_quotas(inst: &Instance, dep: &Deployment) -> bool {
    dep.violations(inst).is_empty()
}

fn deployment_cost(inst: &Instance, dep: &Deployment) -> f64 {
    inst.stations
        .iter()
        .map(|s| {
            let open = if dep.open[s.id] { s.open_cost } else { 0.0 };
            open + (0..dep.num_types())
                .map(|k| s.install_cost[k] * dep.count(s.id, k) as f64)
                .sum::<f64>()
        })
        .sum()
}

/// Minimum of `sum_i sum_j demand_i c_ij (flow share)` when station `j`
/// can absorb `capacity[j]` units in total. `None` if the demand does not
/// fit.
pub fn transport_cost(inst: &Instance, demand: &[u64], capacity: &[u64]) -> Option<f64> {
    let (ni, nj) = (inst.num_nodes(), inst.num_stations());
    let total: u64 = demand.iter().sum();
    if total == 0 {
        return Some(0.0);
    }
    let source = ni + nj;
    let sink = source + 1;
    let mut g = MinCostFlow::new(ni + nj + 2);
    for (i, &d) in demand.iter().enumerate() {
        if d == 0 {
            continue;
        }
        g.add_arc(source, i, d as i64, 0.0);
        for (j, &c) in capacity.iter().enumerate() {
            if c > 0 {
                g.add_arc(i, ni + j, d as i64, inst.distances.get(i, j));
            }
        }
    }
    for (j, &c) in capacity.iter().enumerate() {
        if c > 0 {
            g.add_arc(ni + j, sink, c as i64, 0.0);
        }
    }
    let r = g.run(source, sink, total as i64);
    (r.flow == total as i64).then_some(r.cost)
}

fn pick_best(
    inst: &Instance,
    lambda: f64,
    scaling: &ScalingSpec,
    routing: impl Fn(&Deployment) -> Option<f64>,
) -> Result<OracleOutcome, OracleError> {
    let total = inst.total_demand() as f64;
    let candidates = enumerate_deployments(inst);
    let enumerated = candidates.len();
    let mut best: Option<(f64, OracleSolution)> = None;
    for dep in candidates {
        if !satisfies_quotas(inst, &dep) {
            continue;
        }
        let Some(flow_cost) = routing(&dep) else {
            continue;
        };
        let cost = deployment_cost(inst, &dep);
        let objective = lambda * flow_cost / (total * scaling.distance_divisor) + (1.0 - lambda) * cost / scaling.cost_divisor;
        let replace = match &best {
            None => true,
            Some((b, s)) => {
                let tol = TIE_TOLERANCE * b.abs().max(1.0);
                if objective < b - tol {
                    true
                } else if objective <= b + tol {
                    // Ties go to the lexicographically smallest deployment so
                    // the answer does not depend on enumeration order.
                    compare_deployments(&dep, &s.deployment) == Ordering::Less
                } else {
                    false
                }
            }
        };
        if replace {
            let sol = OracleSolution {
                objective,
                deployment: dep,
                avg_distance_m: flow_cost / total,
                total_cost: cost,
                enumerated,
            };
            best = Some((objective, sol));
        }
    }
    Ok(match best {
        Some((_, s)) => OracleOutcome::Optimal(s),
        None => OracleOutcome::Infeasible { enumerated },
    })
}

fn compare_deployments(a: &Deployment, b: &Deployment) -> Ordering {
    let key = |d: &Deployment| {
        let counts: Vec<u32> = (0..d.num_stations())
            .flat_map(|j| (0..d.num_types()).map(move |k| (j, k)))
            .map(|(j, k)| d.count(j, k))
            .collect();
        (d.total_chargers(), counts, d.open.clone())
    };
    key(a).cmp(&key(b))
}

/// Exact SP-CFL optimum by enumeration. Budget: at most 3 stations, 5 nodes
/// and a summed station cap of 6.
pub fn brute_force_sp(inst: &Instance, lambda: f64, scaling: &ScalingSpec) -> Result<OracleOutcome, OracleError> {
    let p = check_structure(inst, lambda)?;
    check_budget(inst)?;
    let demand: Vec<u64> = inst.nodes.iter().map(|n| n.total() as u64).collect();
    pick_best(inst, lambda, scaling, |dep| {
        let capacity: Vec<u64> = (0..inst.num_stations())
            .map(|j| (0..inst.num_types()).map(|k| p[k] as u64 * dep.count(j, k) as u64).sum())
            .collect();
        transport_cost(inst, &demand, &capacity)
    })
}

/// Exact MP-CFL optimum by enumeration, restricted to single-period
/// recharges and horizons of at most 4 periods so that every period is an
/// independent transportation problem.
pub fn brute_force_mp(inst: &Instance, lambda: f64, scaling: &ScalingSpec) -> Result<OracleOutcome, OracleError> {
    check_structure(inst, lambda)?;
    if let Some(c) = inst.chargers.iter().find(|c| c.recharge_periods != 1) {
        return Err(OracleError::Scope(format!(
            "charger type {} recharges over {} periods",
            c.id, c.recharge_periods
        )));
    }
    if inst.periods > MAX_MP_PERIODS {
        return Err(OracleError::Scope(format!("{} periods > {MAX_MP_PERIODS}", inst.periods)));
    }
    check_budget(inst)?;
    pick_best(inst, lambda, scaling, |dep| {
        let capacity: Vec<u64> = (0..inst.num_stations()).map(|j| dep.station_chargers(j) as u64).collect();
        (0..inst.periods).try_fold(0.0, |acc, t| {
            let demand: Vec<u64> = (0..inst.num_nodes()).map(|i| inst.demand(i, t) as u64).collect();
            transport_cost(inst, &demand, &capacity).map(|c| acc + c)
        })
    })
}
