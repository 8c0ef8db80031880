//! Time-expanded evaluation of deployments and assignments.
//!
//! A recharge started in period `t` on a type-`k` charger keeps it busy for
//! `R_k` periods, cut off at the end of the horizon. The [`OccupancyLedger`]
//! tracks that load; [`check_mp_feasible`] compares it against the installed
//! chargers, and [`reallocate`] replays a single-period assignment against
//! the actual per-period demand, moving or dropping whatever does not fit.
//!
//! Demand is handled in continuous EV units since assignment fractions are
//! real. Vacancy comparisons use [`VACANCY_TOLERANCE`].

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Assignment, Deployment, Instance, MpAssignment, SpAssignment};
use crate::milp::ScalingSpec;

pub const VACANCY_TOLERANCE: f64 = 1e-9;
pub const FEASIBILITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn check_deployment_dims(inst: &Instance, dep: &Deployment) -> Result<(), EvalError> {
    if dep.num_stations() != inst.num_stations() || dep.num_types() != inst.num_types() {
        return Err(EvalError::Dimension(format!(
            "deployment is {}x{}, instance has {} stations and {} charger types",
            dep.num_stations(),
            dep.num_types(),
            inst.num_stations(),
            inst.num_types()
        )));
    }
    Ok(())
}

fn check_mp_dims(inst: &Instance, asg: &MpAssignment) -> Result<(), EvalError> {
    let want = (inst.periods, inst.num_nodes(), inst.num_stations(), inst.num_types());
    if asg.dims() != want {
        return Err(EvalError::Dimension(format!("assignment is {:?}, instance needs {want:?}", asg.dims())));
    }
    Ok(())
}

fn check_sp_dims(inst: &Instance, asg: &SpAssignment) -> Result<(), EvalError> {
    let want = (inst.num_nodes(), inst.num_stations(), inst.num_types());
    if asg.dims() != want {
        return Err(EvalError::Dimension(format!("assignment is {:?}, instance needs {want:?}", asg.dims())));
    }
    Ok(())
}

/// Charger load per station, type and period.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyLedger {
    periods: usize,
    types: usize,
    recharge: Vec<u32>,
    installed: Vec<u32>,
    occ: Vec<f64>,
}

impl OccupancyLedger {
    /// A ledger with nothing started yet.
    pub fn empty(inst: &Instance, dep: &Deployment) -> Result<Self, EvalError> {
        check_deployment_dims(inst, dep)?;
        let (nj, kk) = (inst.num_stations(), inst.num_types());
        Ok(Self {
            periods: inst.periods,
            types: kk,
            recharge: inst.chargers.iter().map(|c| c.recharge_periods).collect(),
            installed: (0..nj).flat_map(|j| (0..kk).map(move |k| dep.count(j, k))).collect(),
            occ: vec![0.0; nj * kk * inst.periods],
        })
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn num_stations(&self) -> usize {
        self.installed.len() / self.types.max(1)
    }

    pub fn num_types(&self) -> usize {
        self.types
    }

    pub fn installed(&self, j: usize, k: usize) -> u32 {
        self.installed[j * self.types + k]
    }

    #[inline]
    fn slot(&self, j: usize, k: usize, t: usize) -> usize {
        (j * self.types + k) * self.periods + t
    }

    pub fn occ(&self, j: usize, k: usize, t: usize) -> f64 {
        self.occ[self.slot(j, k, t)]
    }

    pub fn vacancy(&self, j: usize, k: usize, t: usize) -> f64 {
        self.installed(j, k) as f64 - self.occ(j, k, t)
    }

    /// Periods `t .. end` held by a start at `t` on type `k`.
    pub fn window(&self, k: usize, t: usize) -> std::ops::Range<usize> {
        t..(t + self.recharge[k] as usize).min(self.periods)
    }

    /// Smallest vacancy over the window a start at `t` would hold.
    pub fn window_vacancy(&self, j: usize, k: usize, t: usize) -> f64 {
        self.window(k, t)
            .map(|s| self.vacancy(j, k, s))
            .fold(f64::INFINITY, f64::min)
    }

    /// Records `units` EVs starting a recharge at `(j, k, t)`.
    pub fn add_start(&mut self, j: usize, k: usize, t: usize, units: f64) {
        for s in self.window(k, t) {
            let o = self.slot(j, k, s);
            self.occ[o] += units;
        }
    }

    /// Largest `occ - y` over all cells; nonpositive when nothing is overbooked.
    pub fn max_overload(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..self.num_stations() {
            for k in 0..self.types {
                for t in 0..self.periods {
                    worst = worst.max(-self.vacancy(j, k, t));
                }
            }
        }
        worst
    }

    /// Chargers of type `k` installed across all stations.
    pub fn installed_of_type(&self, k: usize) -> u32 {
        (0..self.num_stations()).map(|j| self.installed(j, k)).sum()
    }

    /// EV units occupying type-`k` chargers in period `t`, all stations.
    pub fn in_use(&self, k: usize, t: usize) -> f64 {
        (0..self.num_stations()).map(|j| self.occ(j, k, t)).sum()
    }

    /// One row per period and charger type, ready for plotting.
    pub fn rows(&self) -> Vec<OccupancyRow> {
        let mut out = Vec::with_capacity(self.periods * self.types);
        for t in 0..self.periods {
            for k in 0..self.types {
                out.push(OccupancyRow {
                    period: t,
                    k,
                    installed: self.installed_of_type(k),
                    in_use: self.in_use(k, t),
                });
            }
        }
        out
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), EvalError> {
        write_occupancy_csv(&self.rows(), w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRow {
    pub period: usize,
    pub k: usize,
    pub installed: u32,
    pub in_use: f64,
}

pub fn write_occupancy_csv<W: io::Write>(rows: &[OccupancyRow], w: W) -> Result<(), EvalError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_occupancy_csv<R: io::Read>(r: R) -> Result<Vec<OccupancyRow>, EvalError> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

/// `occ_jk(t) = sum_i sum_{s in window ending at t} d_i^s x_ijk^s`.
pub fn occupancy(inst: &Instance, dep: &Deployment, asg: &MpAssignment) -> Result<OccupancyLedger, EvalError> {
    check_mp_dims(inst, asg)?;
    let mut ledger = OccupancyLedger::empty(inst, dep)?;
    for t in 0..inst.periods {
        for i in 0..inst.num_nodes() {
            let d = inst.demand(i, t) as f64;
            if d == 0.0 {
                continue;
            }
            for j in 0..inst.num_stations() {
                for k in 0..inst.num_types() {
                    let x = asg.get(t, i, j, k);
                    if x != 0.0 {
                        ledger.add_start(j, k, t, d * x);
                    }
                }
            }
        }
    }
    Ok(ledger)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: &'static str,
    pub at: String,
    /// Amount by which the constraint is violated.
    pub residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, constraint: &str) -> usize {
        self.violations.iter().filter(|v| v.constraint == constraint).count()
    }

    fn push(&mut self, constraint: &'static str, at: String, residual: f64) {
        self.violations.push(Violation { constraint, at, residual });
    }
}

/// Checks caps, quotas, assignment completeness, linking and occupancy of a
/// multi-period solution. Rows of zero demand are not required to sum to
/// one. Never fails: dimension problems are reported as violations.
pub fn check_mp_feasible(inst: &Instance, dep: &Deployment, asg: &MpAssignment) -> FeasibilityReport {
    let mut report = FeasibilityReport::default();
    if let Err(e) = check_deployment_dims(inst, dep).and_then(|_| check_mp_dims(inst, asg)) {
        report.push("dimensions", e.to_string(), f64::INFINITY);
        return report;
    }
    for s in &inst.stations {
        let z = u32::from(dep.open[s.id]);
        for k in 0..inst.num_types() {
            let excess = dep.count(s.id, k) as f64 - (s.cap_per_type[k] * z) as f64;
            if excess > 0.0 {
                report.push("type_cap", format!("j={} k={k}", s.id), excess);
            }
        }
        let excess = dep.station_chargers(s.id) as f64 - (s.cap_total * z) as f64;
        if excess > 0.0 {
            report.push("total_cap", format!("j={}", s.id), excess);
        }
    }
    for zone in &inst.zones {
        let members: Vec<usize> = inst.station_members(zone.id).collect();
        let all: f64 = members.iter().map(|&j| dep.station_chargers(j) as f64).sum();
        for k in 0..inst.num_types() {
            let of_k: f64 = members.iter().map(|&j| dep.count(j, k) as f64).sum();
            let short = zone.min_share[k] * all - of_k;
            if short > FEASIBILITY_TOLERANCE {
                report.push("zone_quota", format!("zone={} k={k}", zone.id), short);
            }
        }
    }
    let (nj, kk) = (inst.num_stations(), inst.num_types());
    for t in 0..inst.periods {
        for i in 0..inst.num_nodes() {
            if inst.demand(i, t) > 0 {
                let off = (asg.row_sum(t, i) - 1.0).abs();
                if off > FEASIBILITY_TOLERANCE {
                    report.push("assignment", format!("i={i} t={t}"), off);
                }
            }
            for j in 0..nj {
                for k in 0..kk {
                    let x = asg.get(t, i, j, k);
                    if x < -FEASIBILITY_TOLERANCE {
                        report.push("nonnegativity", format!("i={i} j={j} k={k} t={t}"), -x);
                    }
                    let over = x - dep.count(j, k) as f64;
                    if over > FEASIBILITY_TOLERANCE {
                        report.push("link", format!("i={i} j={j} k={k} t={t}"), over);
                    }
                }
            }
        }
    }
    let ledger = occupancy(inst, dep, asg).expect("dimensions checked above");
    for j in 0..nj {
        for k in 0..kk {
            for t in 0..inst.periods {
                let over = -ledger.vacancy(j, k, t);
                if over > FEASIBILITY_TOLERANCE {
                    report.push("occupancy", format!("j={j} k={k} t={t}"), over);
                }
            }
        }
    }
    report
}

/// How the assigned charger's room is judged before serving a start.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VacancyRule {
    /// Room must exist in every period of the recharge window, so a
    /// placement never overbooks a later period.
    #[default]
    FullWindow,
    /// Only the start period is checked. In the one-pass scan every earlier
    /// start that still holds a charger later in the window also holds it
    /// now, so this agrees with `FullWindow`; it is kept for comparison.
    SinglePeriod,
}

/// Per-(node, period) ledger of what happened to the demand during
/// reallocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReallocationOutcome {
    periods: usize,
    nodes: usize,
    demand: Vec<f64>,
    served: Vec<f64>,
    reallocated: Vec<f64>,
    lost: Vec<f64>,
    /// Fractions of `d_i^t` placed at each charger; rows of nodes that lost
    /// demand sum to less than one.
    pub assignment: MpAssignment,
    pub ledger: OccupancyLedger,
    pub reall_pct: f64,
    pub lost_pct: f64,
    pub max_lost_pct: f64,
}

impl ReallocationOutcome {
    fn at(&self, i: usize, t: usize) -> usize {
        t * self.nodes + i
    }

    pub fn demand(&self, i: usize, t: usize) -> f64 {
        self.demand[self.at(i, t)]
    }

    /// Served at the charger the original assignment intended.
    pub fn served(&self, i: usize, t: usize) -> f64 {
        self.served[self.at(i, t)]
    }

    pub fn reallocated(&self, i: usize, t: usize) -> f64 {
        self.reallocated[self.at(i, t)]
    }

    pub fn lost(&self, i: usize, t: usize) -> f64 {
        self.lost[self.at(i, t)]
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn total_lost(&self) -> f64 {
        self.lost.iter().sum()
    }

    pub fn total_reallocated(&self) -> f64 {
        self.reallocated.iter().sum()
    }

    /// Lost share of period `t` demand, percent; `None` if the period has
    /// no demand.
    pub fn lost_pct_in_period(&self, t: usize) -> Option<f64> {
        let d: f64 = (0..self.nodes).map(|i| self.demand(i, t)).sum();
        (d > 0.0).then(|| 100.0 * (0..self.nodes).map(|i| self.lost(i, t)).sum::<f64>() / d)
    }

    /// Largest `|served + reallocated + lost - demand|` over all cells.
    pub fn conservation_error(&self) -> f64 {
        (0..self.demand.len())
            .map(|c| (self.served[c] + self.reallocated[c] + self.lost[c] - self.demand[c]).abs())
            .fold(0.0, f64::max)
    }
}

/// Type order at one station: largest vacancy first, then shorter recharge,
/// then lower index.
fn type_order(ledger: &OccupancyLedger, inst: &Instance, j: usize, t: usize, skip: Option<usize>, rule: VacancyRule) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = (0..inst.num_types())
        .filter(|&k| Some(k) != skip)
        .map(|k| (k, room(ledger, j, k, t, rule)))
        .collect();
    v.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(inst.chargers[a.0].recharge_periods.cmp(&inst.chargers[b.0].recharge_periods))
            .then(a.0.cmp(&b.0))
    });
    v
}

fn room(ledger: &OccupancyLedger, j: usize, k: usize, t: usize, rule: VacancyRule) -> f64 {
    let v = match rule {
        VacancyRule::FullWindow => ledger.window_vacancy(j, k, t),
        VacancyRule::SinglePeriod => ledger.vacancy(j, k, t),
    };
    if v > VACANCY_TOLERANCE {
        v
    } else {
        0.0
    }
}

/// Replays a single-period solution period by period.
///
/// Periods are scanned in order and nodes by id. Each node first gets as
/// much of its intended load as fits at every charger its assignment names.
/// The rest of each part is offered to the other types at the same station
/// and then to the other stations by increasing distance from it (ties to
/// the lower id). Whatever still does not fit is lost.
pub fn reallocate(
    inst: &Instance,
    dep: &Deployment,
    sp_asg: &SpAssignment,
    rule: VacancyRule,
) -> Result<ReallocationOutcome, EvalError> {
    check_sp_dims(inst, sp_asg)?;
    let mut ledger = OccupancyLedger::empty(inst, dep)?;
    let (nt, ni, nj, kk) = (inst.periods, inst.num_nodes(), inst.num_stations(), inst.num_types());
    let mut placed = MpAssignment::zeros(nt, ni, nj, kk);
    let cells = nt * ni;
    let mut demand = vec![0.0; cells];
    let mut served = vec![0.0; cells];
    let mut reallocated = vec![0.0; cells];
    let mut lost = vec![0.0; cells];

    // Station visiting order for spills, per origin station.
    let neighbours: Vec<Vec<usize>> = (0..nj)
        .map(|j| {
            let mut v: Vec<usize> = (0..nj).filter(|&o| o != j).collect();
            v.sort_by(|&a, &b| inst.station_distance(j, a).total_cmp(&inst.station_distance(j, b)).then(a.cmp(&b)));
            v
        })
        .collect();

    for t in 0..nt {
        for i in 0..ni {
            let c = t * ni + i;
            let d = inst.demand(i, t) as f64;
            demand[c] = d;
            if d == 0.0 {
                continue;
            }
            let mut excess: Vec<(usize, usize, f64)> = Vec::new();
            for j in 0..nj {
                for k in 0..kk {
                    let intended = d * sp_asg.get(i, j, k);
                    if intended <= 0.0 {
                        continue;
                    }
                    let s = intended.min(room(&ledger, j, k, t, rule));
                    if s > 0.0 {
                        ledger.add_start(j, k, t, s);
                        placed.set(t, i, j, k, placed.get(t, i, j, k) + s / d);
                        served[c] += s;
                    }
                    if intended - s > VACANCY_TOLERANCE {
                        excess.push((j, k, intended - s));
                    } else {
                        // Below tolerance: count as served to keep the ledger tidy.
                        served[c] += intended - s;
                    }
                }
            }
            for (j, k, mut rest) in excess {
                let mut place = |ledger: &mut OccupancyLedger, placed: &mut MpAssignment, jj: usize, kk2: usize, vac: f64, rest: &mut f64| {
                    let s = rest.min(vac);
                    if s > 0.0 {
                        ledger.add_start(jj, kk2, t, s);
                        placed.set(t, i, jj, kk2, placed.get(t, i, jj, kk2) + s / d);
                        reallocated[c] += s;
                        *rest -= s;
                    }
                };
                // Same station, other types: the order is fixed before placing,
                // using the vacancies seen at that moment.
                for (k2, vac) in type_order(&ledger, inst, j, t, Some(k), rule) {
                    if rest <= VACANCY_TOLERANCE {
                        break;
                    }
                    place(&mut ledger, &mut placed, j, k2, vac, &mut rest);
                }
                for &j2 in &neighbours[j] {
                    if rest <= VACANCY_TOLERANCE {
                        break;
                    }
                    for (k2, vac) in type_order(&ledger, inst, j2, t, None, rule) {
                        if rest <= VACANCY_TOLERANCE {
                            break;
                        }
                        place(&mut ledger, &mut placed, j2, k2, vac, &mut rest);
                    }
                }
                lost[c] += rest.max(0.0);
            }
        }
    }

    let total: f64 = demand.iter().sum();
    let pct = |v: f64| if total > 0.0 { (100.0 * v / total).clamp(0.0, 100.0) } else { 0.0 };
    let mut outcome = ReallocationOutcome {
        periods: nt,
        nodes: ni,
        reall_pct: pct(reallocated.iter().sum()),
        lost_pct: pct(lost.iter().sum()),
        max_lost_pct: 0.0,
        demand,
        served,
        reallocated,
        lost,
        assignment: placed,
        ledger,
    };
    outcome.max_lost_pct = (0..nt)
        .filter_map(|t| outcome.lost_pct_in_period(t))
        .fold(0.0, f64::max)
        .clamp(0.0, 100.0);
    Ok(outcome)
}

/// Unscaled objective terms of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveComponents {
    /// Demand-weighted mean node-to-station distance, meters.
    pub avg_distance_m: f64,
    /// Opening plus charger installation cost.
    pub total_cost: f64,
}

impl ObjectiveComponents {
    pub fn scaled(&self, lambda: f64, scaling: &ScalingSpec) -> f64 {
        lambda * self.avg_distance_m / scaling.distance_divisor + (1.0 - lambda) * self.total_cost / scaling.cost_divisor
    }
}

pub fn objective_components(
    inst: &Instance,
    dep: &Deployment,
    asg: &Assignment,
) -> Result<ObjectiveComponents, EvalError> {
    check_deployment_dims(inst, dep)?;
    let (ni, nj, kk) = (inst.num_nodes(), inst.num_stations(), inst.num_types());
    let mut weighted = 0.0;
    match asg {
        Assignment::Single(x) => {
            check_sp_dims(inst, x)?;
            for i in 0..ni {
                let d = inst.nodes[i].total() as f64;
                for j in 0..nj {
                    let share: f64 = (0..kk).map(|k| x.get(i, j, k)).sum();
                    weighted += d * inst.distances.get(i, j) * share;
                }
            }
        }
        Assignment::Multi(x) => {
            check_mp_dims(inst, x)?;
            for t in 0..inst.periods {
                for i in 0..ni {
                    let d = inst.demand(i, t) as f64;
                    if d == 0.0 {
                        continue;
                    }
                    for j in 0..nj {
                        let share: f64 = (0..kk).map(|k| x.get(t, i, j, k)).sum();
                        weighted += d * inst.distances.get(i, j) * share;
                    }
                }
            }
        }
    }
    let total = inst.total_demand() as f64;
    let total_cost = inst
        .stations
        .iter()
        .map(|s| {
            let open = if dep.open[s.id] { s.open_cost } else { 0.0 };
            open + (0..kk).map(|k| s.install_cost[k] * dep.count(s.id, k) as f64).sum::<f64>()
        })
        .sum();
    Ok(ObjectiveComponents {
        avg_distance_m: if total > 0.0 { weighted / total } else { 0.0 },
        total_cost,
    })
}

/// The headline statistics of one evaluated solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(rename = "Stations")]
    pub stations: usize,
    #[serde(rename = "Quick")]
    pub quick: u32,
    #[serde(rename = "Fast")]
    pub fast: u32,
    #[serde(rename = "Reall%")]
    pub reall_pct: f64,
    #[serde(rename = "Lost%")]
    pub lost_pct: f64,
    #[serde(rename = "MaxLost%")]
    pub max_lost_pct: f64,
}

impl EvaluationReport {
    pub fn new(inst: &Instance, dep: &Deployment, outcome: &ReallocationOutcome) -> Self {
        let (quick, fast) = dep.quick_fast(inst);
        Self {
            stations: dep.stations_open(),
            quick,
            fast,
            reall_pct: outcome.reall_pct,
            lost_pct: outcome.lost_pct,
            max_lost_pct: outcome.max_lost_pct,
        }
    }

    /// Report of a solution that serves every period as planned.
    pub fn fully_served(inst: &Instance, dep: &Deployment) -> Self {
        let (quick, fast) = dep.quick_fast(inst);
        Self {
            stations: dep.stations_open(),
            quick,
            fast,
            reall_pct: 0.0,
            lost_pct: 0.0,
            max_lost_pct: 0.0,
        }
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), EvalError> {
        let mut out = csv::Writer::from_writer(w);
        out.serialize(self)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(r: R) -> Result<Self, EvalError> {
        let mut rdr = csv::Reader::from_reader(r);
        rdr.deserialize()
            .next()
            .unwrap_or_else(|| Err(csv::Error::from(io::Error::new(io::ErrorKind::UnexpectedEof, "no report row"))))
            .map_err(EvalError::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::*;
    use crate::instgen::build_worstcase_instance;

    fn worstcase_sp(periods: usize, total: u32, peak: usize, chargers: u32) -> (Instance, Deployment, SpAssignment) {
        let inst = build_worstcase_instance(periods, total, peak).unwrap();
        let mut dep = Deployment::closed(2, 1);
        dep.open[0] = true;
        dep.set_count(0, 0, chargers);
        let mut x = SpAssignment::zeros(1, 2, 1);
        x.set(0, 0, 0, 1.0);
        (inst, dep, x)
    }

    #[test]
    fn worstcase_loses_all_but_one_period_of_capacity() {
        for (t, peak) in [(4, 1), (8, 0), (24, 7)] {
            let (inst, dep, x) = worstcase_sp(t, t as u32, peak, 1);
            let out = reallocate(&inst, &dep, &x, VacancyRule::FullWindow).unwrap();
            let expect = 100.0 * (t as f64 - 1.0) / t as f64;
            assert!((out.lost_pct - expect).abs() < 1e-9, "T={t}: {}", out.lost_pct);
            assert!((out.max_lost_pct - expect).abs() < 1e-9);
            assert_eq!(out.reall_pct, 0.0);
            assert_eq!(out.served(0, peak), 1.0);
        }
    }

    #[test]
    fn worstcase_with_two_chargers() {
        // T = 4, 8 units at t = 1, SP installs 8 / 4 = 2 chargers.
        let (inst, dep, x) = worstcase_sp(4, 8, 1, 2);
        let out = reallocate(&inst, &dep, &x, VacancyRule::FullWindow).unwrap();
        assert_eq!(out.lost(0, 1), 6.0);
        assert!((out.lost_pct - 75.0).abs() < 1e-12);
    }

    #[test]
    fn single_period_horizon_loses_nothing() {
        let (inst, dep, x) = worstcase_sp(1, 3, 0, 3);
        let out = reallocate(&inst, &dep, &x, VacancyRule::FullWindow).unwrap();
        assert_eq!(out.lost_pct, 0.0);
    }

    #[test]
    fn uniform_demand_with_exact_capacity() {
        let (mut inst, dep, x) = worstcase_sp(4, 4, 0, 1);
        inst.nodes[0].profile = vec![1, 1, 1, 1];
        let out = reallocate(&inst, &dep, &x, VacancyRule::FullWindow).unwrap();
        assert_eq!((out.reall_pct, out.lost_pct, out.max_lost_pct), (0.0, 0.0, 0.0));
    }

    #[test]
    fn spill_to_nearest_open_station() {
        // Two open stations, one charger each, 2 units at once: one served,
        // one reallocated to the other station.
        let (inst, mut dep, x) = worstcase_sp(2, 2, 0, 1);
        dep.open[1] = true;
        dep.set_count(1, 0, 1);
        let out = reallocate(&inst, &dep, &x, VacancyRule::FullWindow).unwrap();
        assert_eq!(out.served(0, 0), 1.0);
        assert_eq!(out.reallocated(0, 0), 1.0);
        assert_eq!(out.lost_pct, 0.0);
        assert_eq!(out.reall_pct, 50.0);
        assert_eq!(out.assignment.get(0, 0, 1, 0), 0.5);
    }

    fn two_type_station() -> Instance {
        let mut inst = build_worstcase_instance(4, 4, 0).unwrap();
        inst.chargers = vec![
            ChargerType {
                id: 0,
                name: None,
                recharge_periods: 4,
                install_cost: 3_000.0,
            },
            ChargerType {
                id: 1,
                name: None,
                recharge_periods: 1,
                install_cost: 25_000.0,
            },
        ];
        for s in &mut inst.stations {
            s.install_cost = vec![3_000.0, 25_000.0];
            s.cap_per_type = vec![4, 4];
        }
        inst.zones[0].min_share = vec![0.0, 0.0];
        inst
    }

    #[test]
    fn full_window_blocks_overlapping_starts() {
        let mut inst = two_type_station();
        inst.nodes[0].profile = vec![1, 1, 0, 0];
        let mut dep = Deployment::closed(2, 2);
        dep.open[0] = true;
        dep.set_count(0, 0, 1);
        let mut x = SpAssignment::zeros(1, 2, 2);
        x.set(0, 0, 0, 1.0);
        let out = reallocate(&inst, &dep, &x, VacancyRule::FullWindow).unwrap();
        // The quick charger taken at t = 0 is still busy at t = 1.
        assert_eq!(out.lost(0, 1), 1.0);
        assert!(out.ledger.max_overload() <= 0.0);
        // Earlier starts cover the current period whenever they cover a later
        // one, so the start-period check agrees with the window check.
        let loose = reallocate(&inst, &dep, &x, VacancyRule::SinglePeriod).unwrap();
        assert_eq!(loose, out);
    }

    #[test]
    fn spill_prefers_same_station_other_type() {
        let inst = two_type_station();
        let mut dep = Deployment::closed(2, 2);
        dep.open[0] = true;
        dep.open[1] = true;
        dep.set_count(0, 0, 1);
        dep.set_count(0, 1, 1);
        dep.set_count(1, 0, 2);
        let mut x = SpAssignment::zeros(1, 2, 2);
        x.set(0, 0, 0, 1.0);
        // 4 units at t = 0: one on the quick charger, one on the fast one at
        // the same station, two at the other station.
        let out = reallocate(&inst, &dep, &x, VacancyRule::FullWindow).unwrap();
        assert_eq!(out.assignment.get(0, 0, 0, 0), 0.25);
        assert_eq!(out.assignment.get(0, 0, 0, 1), 0.25);
        assert_eq!(out.assignment.get(0, 0, 1, 0), 0.5);
        assert_eq!(out.lost_pct, 0.0);
        assert_eq!(out.reall_pct, 75.0);
    }

    #[test]
    fn equal_vacancy_prefers_faster_charger() {
        let mut inst = two_type_station();
        inst.nodes[0].profile = vec![1, 0, 0, 0];
        // Station 0 is open but empty, so the unit spills to station 1 where
        // both types have one free charger.
        let mut dep = Deployment::closed(2, 2);
        dep.open[0] = true;
        dep.open[1] = true;
        dep.set_count(1, 0, 1);
        dep.set_count(1, 1, 1);
        let mut x = SpAssignment::zeros(1, 2, 2);
        x.set(0, 0, 0, 1.0);
        let out = reallocate(&inst, &dep, &x, VacancyRule::FullWindow).unwrap();
        assert_eq!(out.assignment.get(0, 0, 1, 1), 1.0);
        assert_eq!(out.reall_pct, 100.0);
    }

    #[test]
    fn occupancy_truncated_window() {
        // 2 units at t = 3 (1-based) with R = 4 and T = 5 occupy periods 3..5.
        let mut inst = two_type_station();
        inst.periods = 5;
        inst.chargers[0].recharge_periods = 4;
        inst.nodes[0].profile = vec![0, 0, 2, 0, 0];
        let mut dep = Deployment::closed(2, 2);
        dep.open[0] = true;
        dep.set_count(0, 0, 2);
        let mut x = MpAssignment::zeros(5, 1, 2, 2);
        x.set(2, 0, 0, 0, 1.0);
        let led = occupancy(&inst, &dep, &x).unwrap();
        let occ: Vec<f64> = (0..5).map(|t| led.occ(0, 0, t)).collect();
        assert_eq!(occ, vec![0.0, 0.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn overlapping_starts_flagged() {
        let mut inst = two_type_station();
        inst.chargers[0].recharge_periods = 2;
        inst.nodes[0].profile = vec![1, 1, 0, 0];
        let mut dep = Deployment::closed(2, 2);
        dep.open[0] = true;
        dep.set_count(0, 0, 1);
        let mut x = MpAssignment::zeros(4, 1, 2, 2);
        x.set(0, 0, 0, 0, 1.0);
        x.set(1, 0, 0, 0, 1.0);
        let r = check_mp_feasible(&inst, &dep, &x);
        assert_eq!(r.count("occupancy"), 1);
        assert_eq!(r.violations[0].at, "j=0 k=0 t=1");
        assert_eq!(r.violations.len(), 1);
    }

    #[test]
    fn quota_violation_flagged() {
        let mut inst = two_type_station();
        inst.zones[0].min_share = vec![0.5, 0.0];
        inst.nodes[0].profile = vec![0, 0, 0, 0];
        let mut dep = Deployment::closed(2, 2);
        dep.open[0] = true;
        dep.set_count(0, 0, 1);
        dep.set_count(0, 1, 2);
        let r = check_mp_feasible(&inst, &dep, &MpAssignment::zeros(4, 1, 2, 2));
        assert_eq!(r.count("zone_quota"), 1);
    }

    #[test]
    fn components() {
        let inst = crate::instgen::build_worstcase_instance(1, 1, 0).unwrap();
        let mut inst = inst;
        inst.distances = DistanceMatrix::from_rows(vec![vec![500.0, 900.0]], 2).unwrap();
        let mut x = SpAssignment::zeros(1, 2, 1);
        x.set(0, 0, 0, 1.0);
        let mut dep = Deployment::closed(2, 1);
        dep.open[0] = true;
        dep.set_count(0, 0, 1);
        let c = objective_components(&inst, &dep, &Assignment::Single(x.clone())).unwrap();
        assert_eq!(c.avg_distance_m, 500.0);
        let m = objective_components(&inst, &dep, &Assignment::Multi(x.to_multi_period(1))).unwrap();
        assert_eq!(m, c);
    }

    #[test]
    fn cost_with_default_prices() {
        let mut inst = two_type_station();
        inst.stations[0].open_cost = 100_000.0;
        let mut dep = Deployment::closed(2, 2);
        dep.open[0] = true;
        dep.set_count(0, 0, 2);
        dep.set_count(0, 1, 1);
        let x = SpAssignment::zeros(1, 2, 2);
        let c = objective_components(&inst, &dep, &Assignment::Single(x)).unwrap();
        assert_eq!(c.total_cost, 131_000.0);
    }

    #[test]
    fn report_csv_round_trip() {
        let r = EvaluationReport {
            stations: 3,
            quick: 10,
            fast: 4,
            reall_pct: 12.5,
            lost_pct: 20.0,
            max_lost_pct: 55.25,
        };
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("Stations,Quick,Fast,Reall%,Lost%,MaxLost%\n"));
        assert_eq!(EvaluationReport::read_csv(&buf[..]).unwrap(), r);
    }

    #[test]
    fn occupancy_csv_round_trip() {
        let (inst, dep, x) = worstcase_sp(4, 4, 1, 1);
        let out = reallocate(&inst, &dep, &x, VacancyRule::FullWindow).unwrap();
        let mut buf = Vec::new();
        out.ledger.write_csv(&mut buf).unwrap();
        let rows = read_occupancy_csv(&buf[..]).unwrap();
        assert_eq!(rows, out.ledger.rows());
        assert_eq!(rows[1].in_use, 1.0);
        assert_eq!(rows[1].installed, 1);
    }

    #[test]
    fn dimension_mismatch() {
        let (inst, dep, _) = worstcase_sp(4, 4, 1, 1);
        let bad = SpAssignment::zeros(2, 2, 1);
        assert!(matches!(reallocate(&inst, &dep, &bad, VacancyRule::FullWindow), Err(EvalError::Dimension(_))));
        assert!(!check_mp_feasible(&inst, &dep, &MpAssignment::zeros(3, 1, 2, 1)).is_empty());
    }
}
