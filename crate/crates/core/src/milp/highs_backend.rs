use std::ops::Bound;
use std::time::Instant;

use highs::{HighsModelStatus, HighsOptionValue, HighsSolutionStatus, RowProblem, Sense};

use super::{
    gap_percent, ConstraintSense, MilpError, MilpModel, SolveOptions, SolveResult, SolveStatus, SolverBackend,
};

/// Reference backend built on the HiGHS MIP solver.
#[derive(Debug, Default, Clone, Copy)]
pub struct HighsBackend;

fn range(lb: f64, ub: f64) -> (Bound<f64>, Bound<f64>) {
    let lo = if lb.is_finite() { Bound::Included(lb) } else { Bound::Unbounded };
    let hi = if ub.is_finite() { Bound::Included(ub) } else { Bound::Unbounded };
    (lo, hi)
}

fn set_option<V: HighsOptionValue>(hm: &mut highs::Model, name: &str, value: V) -> Result<(), MilpError> {
    hm.try_set_option(name, value)
        .map_err(|e| MilpError::Config(format!("option {name}: {e:?}")))
}

impl SolverBackend for HighsBackend {
    fn id(&self) -> &'static str {
        "highs"
    }

    fn solve(&self, model: &MilpModel, options: &SolveOptions) -> Result<SolveResult, MilpError> {
        let start = Instant::now();
        let mut pb = RowProblem::default();
        let cols: Vec<_> = model
            .vars()
            .iter()
            .zip(model.objective())
            .map(|(v, &cost)| {
                let (lb, ub) = v.kind.bounds();
                pb.add_column_with_integrality(cost, range(lb, ub), v.kind.is_integral())
            })
            .collect();
        for c in model.constraints() {
            let bounds = match c.sense {
                ConstraintSense::Le => range(f64::NEG_INFINITY, c.rhs),
                ConstraintSense::Ge => range(c.rhs, f64::INFINITY),
                ConstraintSense::Eq => range(c.rhs, c.rhs),
            };
            pb.add_row(bounds, c.terms.iter().map(|&(v, a)| (cols[v.0], a)));
        }

        let mut hm = pb
            .try_optimise(Sense::Minimise)
            .map_err(|s| MilpError::Backend(format!("model rejected: {s:?}")))?;
        hm.make_quiet();
        set_option(&mut hm, "time_limit", options.time_limit_s)?;
        set_option(&mut hm, "threads", options.threads.max(1) as i32)?;
        set_option(&mut hm, "random_seed", (options.seed % i32::MAX as u64) as i32)?;
        set_option(&mut hm, "mip_rel_gap", options.mip_rel_gap)?;
        set_option(&mut hm, "mip_abs_gap", options.mip_abs_gap)?;

        let solved = hm
            .try_solve()
            .map_err(|s| MilpError::Backend(format!("run failed: {s:?}")))?;
        let wall = start.elapsed();
        let status = solved.status();
        let has_primal = solved.primal_solution_status() == HighsSolutionStatus::Feasible;

        let mapped = match status {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => {
                return Ok(SolveResult::without_solution(
                    SolveStatus::Infeasible,
                    wall,
                    Some(format!("{status:?}")),
                ))
            }
            HighsModelStatus::Unbounded => {
                return Ok(SolveResult::without_solution(SolveStatus::Unbounded, wall, None))
            }
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit
            | HighsModelStatus::ReachedInterrupt
            | HighsModelStatus::ReachedMemoryLimit
            | HighsModelStatus::ObjectiveBound
            | HighsModelStatus::ObjectiveTarget
                if has_primal =>
            {
                SolveStatus::Feasible
            }
            other => {
                return Ok(SolveResult::without_solution(
                    SolveStatus::Error,
                    wall,
                    Some(format!("no usable solution: {other:?}")),
                ))
            }
        };

        let values = if model.num_vars() == 0 {
            Vec::new()
        } else {
            solved.get_solution().columns().to_vec()
        };
        let objective = model.objective_value(&values);
        let bound = if model.has_integers() {
            solved
                .double_info_value(c"mip_dual_bound")
                .ok()
                .filter(|b| b.is_finite())
                .unwrap_or(objective)
        } else {
            objective
        };
        let bound = if mapped == SolveStatus::Optimal { bound.min(objective) } else { bound };
        Ok(SolveResult {
            status: mapped,
            objective: Some(objective),
            bound: Some(bound),
            gap_pct: Some(gap_percent(objective, bound)),
            values,
            wall_s: wall.as_secs_f64(),
            message: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::VarKind;

    fn opts() -> SolveOptions {
        SolveOptions::default().with_threads(1).with_time_limit(10.0)
    }

    #[test]
    fn integer_lower_bound() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", VarKind::Integer { lb: 0.0, ub: 100.0 }, 1.0).unwrap();
        m.add_constraint("c", vec![(x, 1.0)], ConstraintSense::Ge, 3.0).unwrap();
        let r = HighsBackend.solve(&m, &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.values[0] - 3.0).abs() < 1e-9);
        assert!(r.gap_pct.unwrap() <= 1e-4);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", VarKind::Integer { lb: 0.0, ub: 100.0 }, 1.0).unwrap();
        m.add_constraint("hi", vec![(x, 1.0)], ConstraintSense::Le, 1.0).unwrap();
        m.add_constraint("lo", vec![(x, 1.0)], ConstraintSense::Ge, 2.0).unwrap();
        let r = HighsBackend.solve(&m, &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert!(r.values.is_empty());
    }

    #[test]
    fn pure_lp_reports_zero_gap() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", VarKind::Continuous { lb: 0.0, ub: 10.0 }, -1.0).unwrap();
        let y = m.add_var("y", VarKind::Continuous { lb: 0.0, ub: 10.0 }, -2.0).unwrap();
        m.add_constraint("c", vec![(x, 1.0), (y, 1.0)], ConstraintSense::Le, 4.5).unwrap();
        let r = HighsBackend.solve(&m, &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective.unwrap() + 9.0).abs() < 1e-9);
        assert_eq!(r.gap_pct, Some(0.0));
    }
}
