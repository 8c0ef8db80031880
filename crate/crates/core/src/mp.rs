//! Multi-period capacitated facility location (MP-CFL).
//!
//! Each period's demand must be served in that period, and a recharge
//! started at `t` on a type-`k` charger holds it through `t + R_k - 1`. The
//! occupancy row for `(j, k, t)` sums the starts of the last
//! `W = min(t, R_k)` periods (1-based `t`), so early periods see a window
//! truncated at the start of the horizon. Nothing wraps past period `T`.
//!
//! Row count: `J·K` type caps + `J` total caps + `I·T` assignment rows +
//! `I·J·K·T` linking rows + `J·K·T` occupancy rows + `L·K` zone quotas.

use crate::domain::{Deployment, Instance, ModelKind, MpAssignment};
use crate::formulation::{
    add_deployment, add_station_caps, add_zone_quotas, check_structure, clip_unit, extract_deployment,
    solution_values, DeploymentVars, ExtractError, ModelError, ROW_SUM_TOLERANCE,
};
use crate::milp::{ConstraintSense, MilpModel, ScalingSpec, SolveResult, VarId, VarKind};

#[derive(Debug, Clone)]
pub struct MpVarIndex {
    periods: usize,
    nodes: usize,
    stations: usize,
    types: usize,
    z: Vec<VarId>,
    y: Vec<VarId>,
    x: Vec<VarId>,
    /// Zero-demand rows, canonicalized to zero on extraction.
    idle: Vec<bool>,
}

impl MpVarIndex {
    pub fn z(&self, j: usize) -> VarId {
        self.z[j]
    }

    pub fn y(&self, j: usize, k: usize) -> VarId {
        self.y[j * self.types + k]
    }

    pub fn x(&self, t: usize, i: usize, j: usize, k: usize) -> VarId {
        self.x[((t * self.nodes + i) * self.stations + j) * self.types + k]
    }

    pub fn num_vars(&self) -> usize {
        self.z.len() + self.y.len() + self.x.len()
    }
}

/// First period (0-based) of the occupancy window ending at `t`.
pub fn window_start(t: usize, recharge_periods: u32) -> usize {
    (t + 1).saturating_sub(recharge_periods as usize)
}

pub fn build_mp(inst: &Instance, lambda: f64, scaling: &ScalingSpec) -> Result<(MilpModel, MpVarIndex), ModelError> {
    check_structure(inst, lambda)?;
    let (nt, ni, nj, kk) = (inst.periods, inst.num_nodes(), inst.num_stations(), inst.num_types());
    let total = inst.total_demand() as f64;

    let mut model = MilpModel::new();
    model.meta.instance = inst.name.clone();
    model.meta.kind = Some(ModelKind::Mp);
    model.meta.lambda = Some(lambda);

    let dv: DeploymentVars = add_deployment(&mut model, inst, lambda, scaling)?;
    let w = lambda / (total * scaling.distance_divisor);
    let mut x = Vec::with_capacity(nt * ni * nj * kk);
    for t in 0..nt {
        for i in 0..ni {
            let d = inst.demand(i, t) as f64;
            for j in 0..nj {
                let cost = w * d * inst.distances.get(i, j);
                for k in 0..kk {
                    let kind = VarKind::Continuous { lb: 0.0, ub: 1.0 };
                    x.push(model.add_var(format!("x_{i}_{j}_{k}_{t}"), kind, cost)?);
                }
            }
        }
    }
    let index = MpVarIndex {
        periods: nt,
        nodes: ni,
        stations: nj,
        types: kk,
        z: dv.z.clone(),
        y: dv.y.clone(),
        x,
        idle: (0..nt)
            .flat_map(|t| (0..ni).map(move |i| (t, i)))
            .map(|(t, i)| inst.demand(i, t) == 0)
            .collect(),
    };

    add_station_caps(&mut model, inst, &dv)?;
    for t in 0..nt {
        for i in 0..ni {
            let terms = (0..nj)
                .flat_map(|j| (0..kk).map(move |k| (j, k)))
                .map(|(j, k)| (index.x(t, i, j, k), 1.0))
                .collect();
            model.add_constraint(format!("assign_{i}_{t}"), terms, ConstraintSense::Eq, 1.0)?;
        }
    }
    for t in 0..nt {
        for i in 0..ni {
            for j in 0..nj {
                for k in 0..kk {
                    model.add_constraint(
                        format!("link_{i}_{j}_{k}_{t}"),
                        vec![(index.x(t, i, j, k), 1.0), (dv.y(j, k), -1.0)],
                        ConstraintSense::Le,
                        0.0,
                    )?;
                }
            }
        }
    }
    for j in 0..nj {
        for (k, charger) in inst.chargers.iter().enumerate() {
            for t in 0..nt {
                let mut terms = Vec::new();
                for s in window_start(t, charger.recharge_periods)..=t {
                    for i in 0..ni {
                        let d = inst.demand(i, s);
                        if d > 0 {
                            terms.push((index.x(s, i, j, k), d as f64));
                        }
                    }
                }
                terms.push((dv.y(j, k), -1.0));
                model.add_constraint(format!("occupancy_{j}_{k}_{t}"), terms, ConstraintSense::Le, 0.0)?;
            }
        }
    }
    add_zone_quotas(&mut model, inst, &dv)?;
    Ok((model, index))
}

pub fn extract_mp(result: &SolveResult, index: &MpVarIndex) -> Result<(Deployment, MpAssignment), ExtractError> {
    let values = solution_values(result, index.num_vars())?;
    let dv = DeploymentVars {
        z: index.z.clone(),
        y: index.y.clone(),
        types: index.types,
    };
    let dep = extract_deployment(values, &dv)?;
    let mut asg = MpAssignment::zeros(index.periods, index.nodes, index.stations, index.types);
    for t in 0..index.periods {
        for i in 0..index.nodes {
            if index.idle[t * index.nodes + i] {
                continue;
            }
            for j in 0..index.stations {
                for k in 0..index.types {
                    asg.set(t, i, j, k, clip_unit(values[index.x(t, i, j, k).0]));
                }
            }
            let sum = asg.row_sum(t, i);
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(ExtractError::RowSum {
                    node: i,
                    period: Some(t),
                    sum,
                });
            }
        }
    }
    Ok((dep, asg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{LinearConstraint, SolveStatus};

    #[test]
    fn window_truncates_at_horizon_start() {
        // R = 4 at 1-based t = 2 covers τ ∈ {0, 1}, i.e. 0-based periods 0 and 1.
        assert_eq!(window_start(1, 4), 0);
        assert_eq!(window_start(5, 4), 2);
        assert_eq!(window_start(3, 1), 3);
    }

    fn occupancy_row<'a>(m: &'a MilpModel, name: &str) -> &'a LinearConstraint {
        m.constraints().iter().find(|c| c.name == name).unwrap()
    }

    #[test]
    fn unit_recharge_collapses_to_per_period_capacity() {
        let inst = crate::instgen::build_worstcase_instance(4, 8, 1).unwrap();
        let (m, idx) = build_mp(&inst, 0.5, &ScalingSpec::IDENTITY).unwrap();
        let row = occupancy_row(&m, "occupancy_0_0_1");
        assert_eq!(row.terms, vec![(idx.x(1, 0, 0, 0), 8.0), (idx.y(0, 0), -1.0)]);
        // Zero-demand periods leave only the charger term.
        let row = occupancy_row(&m, "occupancy_0_0_2");
        assert_eq!(row.terms, vec![(idx.y(0, 0), -1.0)]);
    }

    #[test]
    fn window_rows_for_longer_recharge() {
        let mut inst = crate::instgen::build_worstcase_instance(4, 4, 0).unwrap();
        inst.chargers[0].recharge_periods = 4;
        inst.nodes[0].profile = vec![1, 1, 1, 1];
        let (m, idx) = build_mp(&inst, 0.5, &ScalingSpec::IDENTITY).unwrap();
        let row = occupancy_row(&m, "occupancy_0_0_1");
        assert_eq!(
            row.terms,
            vec![(idx.x(0, 0, 0, 0), 1.0), (idx.x(1, 0, 0, 0), 1.0), (idx.y(0, 0), -1.0)]
        );
        let row = occupancy_row(&m, "occupancy_0_0_3");
        assert_eq!(row.terms.len(), 5);
    }

    #[test]
    fn counts() {
        let inst = crate::instgen::build_worstcase_instance(4, 8, 1).unwrap();
        let (m, idx) = build_mp(&inst, 0.5, &ScalingSpec::IDENTITY).unwrap();
        let (nt, ni, nj, kk, nl) = (4, 1, inst.num_stations(), 1, 1);
        assert_eq!(m.num_vars(), nt * ni * nj * kk + nj * kk + nj);
        assert_eq!(idx.num_vars(), m.num_vars());
        assert_eq!(
            m.num_constraints(),
            nj * kk + nj + ni * nt + ni * nj * kk * nt + nj * kk * nt + nl * kk
        );
    }

    #[test]
    fn idle_rows_extract_as_zero() {
        let inst = crate::instgen::build_worstcase_instance(2, 2, 0).unwrap();
        let (_, idx) = build_mp(&inst, 0.5, &ScalingSpec::IDENTITY).unwrap();
        let mut values = vec![0.0; idx.num_vars()];
        values[idx.z(0).0] = 1.0;
        values[idx.y(0, 0).0] = 2.0;
        values[idx.x(0, 0, 0, 0).0] = 1.0;
        // Period 1 has no demand; the solver may put the unit anywhere.
        values[idx.x(1, 0, 1, 0).0] = 1.0;
        let result = SolveResult {
            status: SolveStatus::Optimal,
            values,
            objective: None,
            bound: None,
            gap_pct: None,
            wall_s: 0.0,
            message: None,
        };
        let (dep, asg) = extract_mp(&result, &idx).unwrap();
        assert_eq!(dep.total_chargers(), 2);
        assert_eq!(asg.get(0, 0, 0, 0), 1.0);
        assert_eq!(asg.row_sum(1, 0), 0.0);
    }
}
