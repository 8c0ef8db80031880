//! Single-period capacitated facility location (SP-CFL).
//!
//! Demand is aggregated over the horizon and each charger of type `k` is
//! credited with `p_k = T / R_k` recharges. Variables: `x_ijk` continuous in
//! `[0, 1]`, `y_jk` integer in `[0, u_jk]`, `z_j` binary.
//!
//! Row count with strengthening: `J·K` type caps + `J` total caps + `I`
//! assignment rows + `J·K` throughput rows + `I·J·K` linking rows `x ≤ y` +
//! `L·K` zone quotas. Without strengthening the `I·J·K` block is absent.

use crate::domain::{Deployment, Instance, ModelKind, SpAssignment};
use crate::formulation::{
    add_deployment, add_station_caps, add_zone_quotas, check_structure, clip_unit, extract_deployment,
    solution_values, DeploymentVars, ExtractError, ModelError, ROW_SUM_TOLERANCE,
};
use crate::milp::{ConstraintSense, MilpModel, ScalingSpec, SolveResult, VarId, VarKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpOptions {
    /// Adds the redundant `x_ijk <= y_jk` rows that tighten the relaxation.
    pub strengthening: bool,
}

impl Default for SpOptions {
    fn default() -> Self {
        Self { strengthening: true }
    }
}

/// Maps formulation indices to model variables.
#[derive(Debug, Clone)]
pub struct SpVarIndex {
    nodes: usize,
    stations: usize,
    types: usize,
    z: Vec<VarId>,
    y: Vec<VarId>,
    x: Vec<VarId>,
}

impl SpVarIndex {
    pub fn z(&self, j: usize) -> VarId {
        self.z[j]
    }

    pub fn y(&self, j: usize, k: usize) -> VarId {
        self.y[j * self.types + k]
    }

    pub fn x(&self, i: usize, j: usize, k: usize) -> VarId {
        self.x[(i * self.stations + j) * self.types + k]
    }

    pub fn num_vars(&self) -> usize {
        self.z.len() + self.y.len() + self.x.len()
    }

    fn deployment_vars(&self) -> DeploymentVars {
        DeploymentVars {
            z: self.z.clone(),
            y: self.y.clone(),
            types: self.types,
        }
    }
}

pub fn build_sp(inst: &Instance, lambda: f64, scaling: &ScalingSpec) -> Result<(MilpModel, SpVarIndex), ModelError> {
    build_sp_with(inst, lambda, scaling, SpOptions::default())
}

#[allow(clippy::needless_range_loop)] // indices mirror the formulation
pub fn build_sp_with(
    inst: &Instance,
    lambda: f64,
    scaling: &ScalingSpec,
    options: SpOptions,
) -> Result<(MilpModel, SpVarIndex), ModelError> {
    let p = check_structure(inst, lambda)?;
    let (ni, nj, kk) = (inst.num_nodes(), inst.num_stations(), inst.num_types());
    let total = inst.total_demand() as f64;
    let demand: Vec<f64> = inst.nodes.iter().map(|n| n.total() as f64).collect();

    let mut model = MilpModel::new();
    model.meta.instance = inst.name.clone();
    model.meta.kind = Some(ModelKind::Sp);
    model.meta.lambda = Some(lambda);

    let dv = add_deployment(&mut model, inst, lambda, scaling)?;
    let w = lambda / (total * scaling.distance_divisor);
    let mut x = Vec::with_capacity(ni * nj * kk);
    for i in 0..ni {
        for j in 0..nj {
            let cost = w * demand[i] * inst.distances.get(i, j);
            for k in 0..kk {
                let kind = VarKind::Continuous { lb: 0.0, ub: 1.0 };
                x.push(model.add_var(format!("x_{i}_{j}_{k}"), kind, cost)?);
            }
        }
    }
    let index = SpVarIndex {
        nodes: ni,
        stations: nj,
        types: kk,
        z: dv.z.clone(),
        y: dv.y.clone(),
        x,
    };

    add_station_caps(&mut model, inst, &dv)?;
    for i in 0..ni {
        let terms = (0..nj)
            .flat_map(|j| (0..kk).map(move |k| (j, k)))
            .map(|(j, k)| (index.x(i, j, k), 1.0))
            .collect();
        model.add_constraint(format!("assign_{i}"), terms, ConstraintSense::Eq, 1.0)?;
    }
    for j in 0..nj {
        for k in 0..kk {
            let mut terms: Vec<(VarId, f64)> = (0..ni)
                .filter(|&i| demand[i] > 0.0)
                .map(|i| (index.x(i, j, k), demand[i]))
                .collect();
            terms.push((index.y(j, k), -(p[k] as f64)));
            model.add_constraint(format!("throughput_{j}_{k}"), terms, ConstraintSense::Le, 0.0)?;
        }
    }
    if options.strengthening {
        for i in 0..ni {
            for j in 0..nj {
                for k in 0..kk {
                    model.add_constraint(
                        format!("link_{i}_{j}_{k}"),
                        vec![(index.x(i, j, k), 1.0), (index.y(j, k), -1.0)],
                        ConstraintSense::Le,
                        0.0,
                    )?;
                }
            }
        }
    }
    add_zone_quotas(&mut model, inst, &dv)?;
    Ok((model, index))
}

/// Rounds the integer decisions, clips the fractions and re-checks that
/// every node is fully assigned.
pub fn extract_sp(result: &SolveResult, index: &SpVarIndex) -> Result<(Deployment, SpAssignment), ExtractError> {
    let values = solution_values(result, index.num_vars())?;
    let dep = extract_deployment(values, &index.deployment_vars())?;
    let mut asg = SpAssignment::zeros(index.nodes, index.stations, index.types);
    for i in 0..index.nodes {
        for j in 0..index.stations {
            for k in 0..index.types {
                asg.set(i, j, k, clip_unit(values[index.x(i, j, k).0]));
            }
        }
        let sum = asg.row_sum(i);
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(ExtractError::RowSum {
                node: i,
                period: None,
                sum,
            });
        }
    }
    Ok((dep, asg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::*;
    use crate::milp::{SolveStatus};

    fn single(d: u32, p: u32) -> Instance {
        // One node, one station, one type with throughput p over a horizon of p periods.
        Instance {
            name: None,
            horizon_label: "h".into(),
            periods: p as usize,
            chargers: vec![ChargerType {
                id: 0,
                name: None,
                recharge_periods: 1,
                install_cost: 3_000.0,
            }],
            zones: vec![Zone {
                id: 0,
                kind: ZoneKind::Commercial,
                min_share: vec![0.0],
            }],
            stations: vec![Station {
                id: 0,
                position: Point::ORIGIN,
                zone: 0,
                open_cost: 100_000.0,
                install_cost: vec![3_000.0],
                cap_per_type: vec![1],
                cap_total: 1,
            }],
            nodes: vec![DemandNode {
                id: 0,
                position: Point::new(10.0, 0.0),
                zone: 0,
                profile: {
                    let mut v = vec![0; p as usize];
                    v[0] = d;
                    v
                },
                declared_total: None,
            }],
            distances: DistanceMatrix::from_rows(vec![vec![10.0]], 1).unwrap(),
        }
    }

    #[test]
    fn variable_and_row_counts() {
        let inst = single(6, 6);
        let (m, idx) = build_sp(&inst, 0.5, &ScalingSpec::IDENTITY).unwrap();
        // I·J·K + J·K + J
        assert_eq!(m.num_vars(), 3);
        assert_eq!(idx.num_vars(), 3);
        // J·K + J + I + J·K + I·J·K + L·K
        assert_eq!(m.num_constraints(), 6);
        let (m, _) = build_sp_with(&inst, 0.5, &ScalingSpec::IDENTITY, SpOptions { strengthening: false }).unwrap();
        assert_eq!(m.num_constraints(), 5);
    }

    #[test]
    fn objective_coefficients() {
        let inst = single(6, 6);
        let scaling = ScalingSpec {
            distance_divisor: 10.0,
            cost_divisor: 103_000.0,
        };
        let (m, idx) = build_sp(&inst, 0.25, &scaling).unwrap();
        let obj = m.objective();
        assert!((obj[idx.z(0).0] - 0.75 * 100_000.0 / 103_000.0).abs() < 1e-15);
        assert!((obj[idx.y(0, 0).0] - 0.75 * 3_000.0 / 103_000.0).abs() < 1e-15);
        // λ · d · c / (Σd · D_max) = 0.25 · 6 · 10 / (6 · 10)
        assert!((obj[idx.x(0, 0, 0).0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_lambda_and_indivisible_horizon() {
        let inst = single(6, 6);
        assert!(matches!(
            build_sp(&inst, 1.5, &ScalingSpec::IDENTITY),
            Err(ModelError::Lambda(_))
        ));
        let mut inst = single(6, 6);
        inst.chargers[0].recharge_periods = 4;
        assert!(matches!(
            build_sp(&inst, 0.5, &ScalingSpec::IDENTITY),
            Err(ModelError::Indivisible { .. })
        ));
        let inst = single(0, 6);
        assert!(matches!(
            build_sp(&inst, 0.5, &ScalingSpec::IDENTITY),
            Err(ModelError::ZeroDemand)
        ));
    }

    fn fake_result(values: Vec<f64>, status: SolveStatus) -> SolveResult {
        SolveResult {
            status,
            values,
            objective: Some(0.0),
            bound: Some(0.0),
            gap_pct: Some(0.0),
            wall_s: 0.0,
            message: None,
        }
    }

    #[test]
    fn extraction_rounds_and_clips() {
        let inst = single(6, 6);
        let (_, idx) = build_sp(&inst, 0.5, &ScalingSpec::IDENTITY).unwrap();
        let mut values = vec![0.0; 3];
        values[idx.z(0).0] = 0.99999997;
        values[idx.y(0, 0).0] = 1.00002;
        values[idx.x(0, 0, 0).0] = 1.0 + 3e-9;
        let (dep, asg) = extract_sp(&fake_result(values, SolveStatus::Optimal), &idx).unwrap();
        assert!(dep.open[0]);
        assert_eq!(dep.count(0, 0), 1);
        assert_eq!(asg.get(0, 0, 0), 1.0);
    }

    #[test]
    fn extraction_clips_negative_fraction() {
        let mut inst = single(6, 6);
        inst.stations.push(Station {
            id: 1,
            ..inst.stations[0].clone()
        });
        inst.distances = DistanceMatrix::from_rows(vec![vec![10.0, 10.0]], 2).unwrap();
        let (_, idx) = build_sp(&inst, 0.5, &ScalingSpec::IDENTITY).unwrap();
        let mut values = vec![0.0; idx.num_vars()];
        values[idx.z(0).0] = 1.0;
        values[idx.y(0, 0).0] = 1.0;
        values[idx.x(0, 0, 0).0] = 1.0;
        values[idx.x(0, 1, 0).0] = -3e-9;
        let (_, asg) = extract_sp(&fake_result(values, SolveStatus::Feasible), &idx).unwrap();
        assert_eq!(asg.get(0, 1, 0), 0.0);
    }

    #[test]
    fn extraction_errors() {
        let inst = single(6, 6);
        let (_, idx) = build_sp(&inst, 0.5, &ScalingSpec::IDENTITY).unwrap();
        let r = fake_result(vec![], SolveStatus::Infeasible);
        assert!(matches!(extract_sp(&r, &idx), Err(ExtractError::NoSolution(_))));
        let mut values = vec![1.0; 3];
        values[idx.y(0, 0).0] = 0.5;
        let r = fake_result(values, SolveStatus::Optimal);
        assert!(matches!(extract_sp(&r, &idx), Err(ExtractError::Integrality { .. })));
        let mut values = vec![1.0; 3];
        values[idx.x(0, 0, 0).0] = 0.9;
        let r = fake_result(values, SolveStatus::Optimal);
        assert!(matches!(extract_sp(&r, &idx), Err(ExtractError::RowSum { .. })));
    }
}
