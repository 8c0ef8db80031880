//! Instance data model: demand nodes, candidate stations, zones and charger
//! technologies, plus the decision objects (deployments and assignments)
//! produced by the location models.
//!
//! Units: distances are meters, costs are plain currency units. Every id is
//! the zero-based position of the item in its owning list.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used when comparing stored distances with positions.
pub const DISTANCE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("malformed instance json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{kind} ids must be 0..n in order, found id {found} at position {position}")]
    IdOrder {
        kind: &'static str,
        position: usize,
        found: usize,
    },
    #[error("unknown charger type key `{0}`")]
    UnknownChargerKey(String),
    #[error("distance matrix must have {rows} rows of {cols} entries")]
    DistanceShape { rows: usize, cols: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn radius(self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Straight-line distance in meters.
pub fn euclidean_distance(p: Point, q: Point) -> f64 {
    (p.x - q.x).hypot(p.y - q.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneKind {
    Commercial,
    Residential,
    Industrial,
}

impl ZoneKind {
    pub const ALL: [ZoneKind; 3] = [ZoneKind::Commercial, ZoneKind::Residential, ZoneKind::Industrial];

    pub fn name(self) -> &'static str {
        match self {
            ZoneKind::Commercial => "commercial",
            ZoneKind::Residential => "residential",
            ZoneKind::Industrial => "industrial",
        }
    }
}

impl fmt::Display for ZoneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A charging technology.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargerType {
    pub id: usize,
    pub name: Option<String>,
    /// Consecutive periods one recharge holds a charger.
    pub recharge_periods: u32,
    /// Default cost of installing one charger; stations may override it.
    pub install_cost: f64,
}

impl ChargerType {
    /// Vehicles fully recharged by one charger over `periods` periods, or
    /// `None` when the horizon is not a whole number of recharge cycles.
    pub fn throughput(&self, periods: usize) -> Option<u32> {
        let r = self.recharge_periods as usize;
        if r == 0 || !periods.is_multiple_of(r) {
            return None;
        }
        Some((periods / r) as u32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub id: usize,
    pub kind: ZoneKind,
    /// Minimum share of each charger type among the chargers deployed in
    /// the zone, indexed by charger id.
    pub min_share: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandNode {
    pub id: usize,
    pub position: Point,
    pub zone: usize,
    /// Vehicles asking for a recharge at the start of each period.
    pub profile: Vec<u32>,
    /// Total carried by an input file, if any. Only used by validation.
    pub declared_total: Option<u32>,
}

impl DemandNode {
    /// Aggregate demand over the horizon.
    pub fn total(&self) -> u32 {
        self.profile.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub id: usize,
    pub position: Point,
    pub zone: usize,
    pub open_cost: f64,
    /// Cost of one charger of each type at this station.
    pub install_cost: Vec<f64>,
    pub cap_per_type: Vec<u32>,
    pub cap_total: u32,
}

/// Node-to-station travel distances, row-major over nodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, cols: usize) -> Result<Self, InstanceError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(InstanceError::DistanceShape { rows: n, cols });
        }
        Ok(Self {
            rows: n,
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_positions(nodes: &[Point], stations: &[Point]) -> Self {
        let data = nodes
            .iter()
            .flat_map(|&p| stations.iter().map(move |&q| euclidean_distance(p, q)))
            .collect();
        Self {
            rows: nodes.len(),
            cols: stations.len(),
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, node: usize, station: usize) -> f64 {
        self.data[node * self.cols + station]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn row(&self, node: usize) -> &[f64] {
        &self.data[node * self.cols..(node + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: Option<String>,
    pub horizon_label: String,
    pub periods: usize,
    pub chargers: Vec<ChargerType>,
    pub zones: Vec<Zone>,
    pub stations: Vec<Station>,
    pub nodes: Vec<DemandNode>,
    pub distances: DistanceMatrix,
}

impl Instance {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn num_types(&self) -> usize {
        self.chargers.len()
    }

    pub fn total_demand(&self) -> u64 {
        self.nodes.iter().map(|n| n.total() as u64).sum()
    }

    pub fn demand(&self, node: usize, period: usize) -> u32 {
        self.nodes[node].profile[period]
    }

    /// Demand summed over nodes for each period.
    pub fn demand_per_period(&self) -> Vec<u64> {
        (0..self.periods)
            .map(|t| self.nodes.iter().map(|n| n.profile[t] as u64).sum())
            .collect()
    }

    pub fn station_members(&self, zone: usize) -> impl Iterator<Item = usize> + '_ {
        self.stations.iter().filter(move |s| s.zone == zone).map(|s| s.id)
    }

    pub fn node_members(&self, zone: usize) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter(move |n| n.zone == zone).map(|n| n.id)
    }

    /// Throughput of every charger type, failing on the first type whose
    /// recharge time does not divide the horizon.
    pub fn throughputs(&self) -> Result<Vec<u32>, usize> {
        self.chargers
            .iter()
            .map(|c| c.throughput(self.periods).ok_or(c.id))
            .collect()
    }

    /// Largest horizon throughput any deployment can reach. Per station the
    /// total cap is filled greedily with the highest-throughput types.
    pub fn max_deployable_throughput(&self) -> Option<u64> {
        let p = self.throughputs().ok()?;
        let mut order: Vec<usize> = (0..self.num_types()).collect();
        order.sort_by(|&a, &b| p[b].cmp(&p[a]));
        let total = self
            .stations
            .iter()
            .map(|s| {
                let mut left = s.cap_total as u64;
                let mut cap = 0u64;
                for &k in &order {
                    let take = left.min(s.cap_per_type[k] as u64);
                    cap += take * p[k] as u64;
                    left -= take;
                }
                cap
            })
            .sum();
        Some(total)
    }

    /// Distance between two stations, used when spilling demand to the
    /// nearest alternative.
    pub fn station_distance(&self, a: usize, b: usize) -> f64 {
        euclidean_distance(self.stations[a].position, self.stations[b].position)
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.into_instance()
    }

    /// Canonical JSON form. Keys are sorted, so equal instances always
    /// serialize to the same bytes.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(InstanceFile::from_instance(self))
            .expect("instance file is always representable as json");
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        text
    }
}

/// Opening decisions and installed charger counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deployment {
    pub open: Vec<bool>,
    types: usize,
    counts: Vec<u32>,
}

impl Deployment {
    pub fn closed(stations: usize, types: usize) -> Self {
        Self {
            open: vec![false; stations],
            types,
            counts: vec![0; stations * types],
        }
    }

    pub fn num_stations(&self) -> usize {
        self.open.len()
    }

    pub fn num_types(&self) -> usize {
        self.types
    }

    #[inline]
    pub fn count(&self, station: usize, k: usize) -> u32 {
        self.counts[station * self.types + k]
    }

    pub fn set_count(&mut self, station: usize, k: usize, value: u32) {
        self.counts[station * self.types + k] = value;
    }

    pub fn stations_open(&self) -> usize {
        self.open.iter().filter(|&&o| o).count()
    }

    pub fn chargers_of_type(&self, k: usize) -> u32 {
        (0..self.num_stations()).map(|j| self.count(j, k)).sum()
    }

    pub fn station_chargers(&self, station: usize) -> u32 {
        (0..self.types).map(|k| self.count(station, k)).sum()
    }

    pub fn total_chargers(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// Quick/fast split: chargers whose recharge spans several periods
    /// versus single-period ones.
    pub fn quick_fast(&self, inst: &Instance) -> (u32, u32) {
        let mut quick = 0;
        let mut fast = 0;
        for c in &inst.chargers {
            let n = self.chargers_of_type(c.id);
            if c.recharge_periods > 1 {
                quick += n;
            } else {
                fast += n;
            }
        }
        (quick, fast)
    }

    /// Violations of the per-station caps and zone quotas, as messages.
    pub fn violations(&self, inst: &Instance) -> Vec<String> {
        let mut out = Vec::new();
        for s in &inst.stations {
            let z = u32::from(self.open[s.id]);
            for k in 0..self.types {
                if self.count(s.id, k) > s.cap_per_type[k] * z {
                    out.push(format!(
                        "type cap exceeded at station {} type {}: {} > {}",
                        s.id,
                        k,
                        self.count(s.id, k),
                        s.cap_per_type[k] * z
                    ));
                }
            }
            if self.station_chargers(s.id) > s.cap_total * z {
                out.push(format!(
                    "total cap exceeded at station {}: {} > {}",
                    s.id,
                    self.station_chargers(s.id),
                    s.cap_total * z
                ));
            }
        }
        for zone in &inst.zones {
            let members: Vec<usize> = inst.station_members(zone.id).collect();
            let all: u32 = members.iter().map(|&j| self.station_chargers(j)).sum();
            for k in 0..self.types {
                let of_k: u32 = members.iter().map(|&j| self.count(j, k)).sum();
                let need = zone.min_share[k] * all as f64;
                if (of_k as f64) < need - 1e-9 {
                    out.push(format!(
                        "zone quota violated in zone {} type {}: {} < {:.6}",
                        zone.id, k, of_k, need
                    ));
                }
            }
        }
        out
    }
}

/// Single-period assignment fractions `x[i][j][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpAssignment {
    nodes: usize,
    stations: usize,
    types: usize,
    values: Vec<f64>,
}

impl SpAssignment {
    pub fn zeros(nodes: usize, stations: usize, types: usize) -> Self {
        Self {
            nodes,
            stations,
            types,
            values: vec![0.0; nodes * stations * types],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nodes, self.stations, self.types)
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.stations + j) * self.types + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.offset(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.values[o] = v;
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        let w = self.stations * self.types;
        self.values[i * w..(i + 1) * w].iter().sum()
    }

    /// Broadcasts the fractions to every period, i.e. what happens when a
    /// time-agnostic assignment is applied to a time-varying demand.
    pub fn to_multi_period(&self, periods: usize) -> MpAssignment {
        let mut values = Vec::with_capacity(periods * self.values.len());
        for _ in 0..periods {
            values.extend_from_slice(&self.values);
        }
        MpAssignment {
            periods,
            nodes: self.nodes,
            stations: self.stations,
            types: self.types,
            values,
        }
    }
}

/// Multi-period assignment fractions `x[t][i][j][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpAssignment {
    periods: usize,
    nodes: usize,
    stations: usize,
    types: usize,
    values: Vec<f64>,
}

impl MpAssignment {
    pub fn zeros(periods: usize, nodes: usize, stations: usize, types: usize) -> Self {
        Self {
            periods,
            nodes,
            stations,
            types,
            values: vec![0.0; periods * nodes * stations * types],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.periods, self.nodes, self.stations, self.types)
    }

    #[inline]
    fn offset(&self, t: usize, i: usize, j: usize, k: usize) -> usize {
        ((t * self.nodes + i) * self.stations + j) * self.types + k
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.offset(t, i, j, k)]
    }

    pub fn set(&mut self, t: usize, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(t, i, j, k);
        self.values[o] = v;
    }

    pub fn row_sum(&self, t: usize, i: usize) -> f64 {
        let w = self.stations * self.types;
        let start = (t * self.nodes + i) * w;
        self.values[start..start + w].iter().sum()
    }

    pub fn clear_row(&mut self, t: usize, i: usize) {
        let w = self.stations * self.types;
        let start = (t * self.nodes + i) * w;
        self.values[start..start + w].fill(0.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Assignment {
    Single(SpAssignment),
    Multi(MpAssignment),
}

impl Assignment {
    pub fn mode(&self) -> ModelKind {
        match self {
            Assignment::Single(_) => ModelKind::Sp,
            Assignment::Multi(_) => ModelKind::Mp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sp,
    Mp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Sp => "sp",
            ModelKind::Mp => "mp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sp" => Ok(ModelKind::Sp),
            "mp" => Ok(ModelKind::Mp),
            other => Err(format!("unknown model `{other}` (expected sp or mp)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    fn error(&mut self, message: String) {
        self.issues.push(Issue {
            severity: Severity::Error,
            message,
        });
    }

    fn warning(&mut self, message: String) {
        self.issues.push(Issue {
            severity: Severity::Warning,
            message,
        });
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.issues.iter().any(|i| i.message.contains(needle))
    }
}

/// Checks every well-formedness rule of an instance. Problems are
/// collected, never raised.
pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut report = ValidationReport::default();
    let kk = inst.num_types();
    let (ni, nj) = (inst.num_nodes(), inst.num_stations());

    if inst.periods == 0 {
        report.error("horizon must have at least one period".into());
    }
    for (pos, c) in inst.chargers.iter().enumerate() {
        if c.id != pos {
            report.error(format!("charger id {} at position {}", c.id, pos));
        }
        if c.recharge_periods == 0 {
            report.error(format!("charger type {} has zero recharge periods", c.id));
        } else if inst.periods > 0 && c.throughput(inst.periods).is_none() {
            report.error(format!(
                "charger type {}: recharge periods {} do not divide horizon {}",
                c.id, c.recharge_periods, inst.periods
            ));
        }
        if c.install_cost.is_nan() || c.install_cost < 0.0 {
            report.error(format!("charger type {} has negative install cost", c.id));
        }
    }

    for (pos, z) in inst.zones.iter().enumerate() {
        if z.id != pos {
            report.error(format!("zone id {} at position {}", z.id, pos));
        }
        if z.min_share.len() != kk {
            report.error(format!("zone {} has {} shares for {} charger types", z.id, z.min_share.len(), kk));
            continue;
        }
        for (k, &rho) in z.min_share.iter().enumerate() {
            if !(0.0..=1.0).contains(&rho) {
                report.error(format!("zone {} share for type {} outside [0,1]: {}", z.id, k, rho));
            }
        }
        let sum: f64 = z.min_share.iter().sum();
        if sum > 1.0 + 1e-12 {
            report.error(format!("zone {} shares sum to {} > 1", z.id, sum));
        }
    }

    for (pos, s) in inst.stations.iter().enumerate() {
        if s.id != pos {
            report.error(format!("station id {} at position {}", s.id, pos));
        }
        if s.zone >= inst.zones.len() {
            report.error(format!("station {} references unknown zone {}", s.id, s.zone));
        }
        if s.open_cost.is_nan() || s.open_cost < 0.0 {
            report.error(format!("station {} has negative open cost", s.id));
        }
        if s.install_cost.len() != kk || s.cap_per_type.len() != kk {
            report.error(format!("station {} has per-type data for the wrong number of types", s.id));
            continue;
        }
        for k in 0..kk {
            if s.install_cost[k].is_nan() || s.install_cost[k] < 0.0 {
                report.error(format!("station {} type {} has negative install cost", s.id, k));
            }
            if s.cap_per_type[k] > s.cap_total {
                report.warning(format!(
                    "station {} type {} cap {} exceeds total cap {}",
                    s.id, k, s.cap_per_type[k], s.cap_total
                ));
            }
        }
    }

    for (pos, n) in inst.nodes.iter().enumerate() {
        if n.id != pos {
            report.error(format!("node id {} at position {}", n.id, pos));
        }
        if n.zone >= inst.zones.len() {
            report.error(format!("node {} references unknown zone {}", n.id, n.zone));
        }
        if n.profile.len() != inst.periods {
            report.error(format!(
                "node {} profile has {} periods, horizon has {}",
                n.id,
                n.profile.len(),
                inst.periods
            ));
        }
        if let Some(declared) = n.declared_total {
            if declared != n.total() {
                report.error(format!(
                    "profile/total mismatch at node {}: declared {}, profile sums to {}",
                    n.id,
                    declared,
                    n.total()
                ));
            }
        }
    }

    if inst.distances.rows() != ni || inst.distances.cols() != nj {
        report.error(format!(
            "distance matrix is {}x{}, expected {}x{}",
            inst.distances.rows(),
            inst.distances.cols(),
            ni,
            nj
        ));
    } else {
        for n in &inst.nodes {
            for s in &inst.stations {
                let c = inst.distances.get(n.id, s.id);
                if !c.is_finite() || c < 0.0 {
                    report.error(format!("distance node {} station {} is not a finite nonnegative value", n.id, s.id));
                    continue;
                }
                let e = euclidean_distance(n.position, s.position);
                if (c - e).abs() > DISTANCE_TOLERANCE {
                    report.error(format!(
                        "distance node {} station {} is {} but positions give {}",
                        n.id, s.id, c, e
                    ));
                }
            }
        }
    }

    if report.is_valid() {
        if let Some(cap) = inst.max_deployable_throughput() {
            let demand = inst.total_demand();
            if demand > cap {
                report.error(format!(
                    "SP capacity shortfall: total demand {} exceeds deployable throughput {}",
                    demand, cap
                ));
            }
        }
    }
    report
}

// ---------------------------------------------------------------------------
// File representation
// ---------------------------------------------------------------------------

fn default_horizon() -> String {
    "1 day".to_string()
}

#[derive(Debug, Serialize, Deserialize)]
struct ChargerFile {
    id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    recharge_periods: u32,
    install_cost: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ZoneFile {
    id: usize,
    kind: ZoneKind,
    #[serde(default)]
    min_share: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StationFile {
    id: usize,
    x: f64,
    y: f64,
    zone: usize,
    open_cost: f64,
    cap_per_type: BTreeMap<String, u32>,
    cap_total: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    install_cost: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeFile {
    id: usize,
    x: f64,
    y: f64,
    zone: usize,
    profile: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    total: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default = "default_horizon")]
    horizon: String,
    periods: usize,
    chargers: Vec<ChargerFile>,
    zones: Vec<ZoneFile>,
    stations: Vec<StationFile>,
    nodes: Vec<NodeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distances: Option<Vec<Vec<f64>>>,
}

fn check_order(kind: &'static str, ids: impl Iterator<Item = usize>) -> Result<(), InstanceError> {
    for (position, found) in ids.enumerate() {
        if position != found {
            return Err(InstanceError::IdOrder { kind, position, found });
        }
    }
    Ok(())
}

fn per_type<T: Copy>(map: &BTreeMap<String, T>, types: usize, fill: T) -> Result<Vec<T>, InstanceError> {
    let mut out = vec![fill; types];
    for (key, &v) in map {
        let k: usize = key.parse().map_err(|_| InstanceError::UnknownChargerKey(key.clone()))?;
        if k >= types {
            return Err(InstanceError::UnknownChargerKey(key.clone()));
        }
        out[k] = v;
    }
    Ok(out)
}

fn type_map<T: Copy>(values: &[T]) -> BTreeMap<String, T> {
    values.iter().enumerate().map(|(k, &v)| (k.to_string(), v)).collect()
}

impl InstanceFile {
    fn into_instance(self) -> Result<Instance, InstanceError> {
        check_order("charger", self.chargers.iter().map(|c| c.id))?;
        check_order("zone", self.zones.iter().map(|z| z.id))?;
        check_order("station", self.stations.iter().map(|s| s.id))?;
        check_order("node", self.nodes.iter().map(|n| n.id))?;
        let kk = self.chargers.len();
        let chargers: Vec<ChargerType> = self
            .chargers
            .into_iter()
            .map(|c| ChargerType {
                id: c.id,
                name: c.name,
                recharge_periods: c.recharge_periods,
                install_cost: c.install_cost,
            })
            .collect();
        let default_cost: Vec<f64> = chargers.iter().map(|c| c.install_cost).collect();
        let zones = self
            .zones
            .into_iter()
            .map(|z| {
                Ok(Zone {
                    id: z.id,
                    kind: z.kind,
                    min_share: per_type(&z.min_share, kk, 0.0)?,
                })
            })
            .collect::<Result<Vec<_>, InstanceError>>()?;
        let stations = self
            .stations
            .into_iter()
            .map(|s| {
                let mut install_cost = default_cost.clone();
                for (k, v) in per_type(&s.install_cost, kk, f64::NAN)?.into_iter().enumerate() {
                    if !v.is_nan() {
                        install_cost[k] = v;
                    }
                }
                Ok(Station {
                    id: s.id,
                    position: Point::new(s.x, s.y),
                    zone: s.zone,
                    open_cost: s.open_cost,
                    install_cost,
                    cap_per_type: per_type(&s.cap_per_type, kk, 0)?,
                    cap_total: s.cap_total,
                })
            })
            .collect::<Result<Vec<_>, InstanceError>>()?;
        let nodes: Vec<DemandNode> = self
            .nodes
            .into_iter()
            .map(|n| DemandNode {
                id: n.id,
                position: Point::new(n.x, n.y),
                zone: n.zone,
                profile: n.profile,
                declared_total: n.total,
            })
            .collect();
        let distances = match self.distances {
            Some(rows) => {
                if rows.len() != nodes.len() {
                    return Err(InstanceError::DistanceShape {
                        rows: nodes.len(),
                        cols: stations.len(),
                    });
                }
                DistanceMatrix::from_rows(rows, stations.len())?
            }
            None => {
                let np: Vec<Point> = nodes.iter().map(|n| n.position).collect();
                let sp: Vec<Point> = stations.iter().map(|s| s.position).collect();
                DistanceMatrix::from_positions(&np, &sp)
            }
        };
        Ok(Instance {
            name: self.name,
            horizon_label: self.horizon,
            periods: self.periods,
            chargers,
            zones,
            stations,
            nodes,
            distances,
        })
    }

    fn from_instance(inst: &Instance) -> Self {
        InstanceFile {
            name: inst.name.clone(),
            horizon: inst.horizon_label.clone(),
            periods: inst.periods,
            chargers: inst
                .chargers
                .iter()
                .map(|c| ChargerFile {
                    id: c.id,
                    name: c.name.clone(),
                    recharge_periods: c.recharge_periods,
                    install_cost: c.install_cost,
                })
                .collect(),
            zones: inst
                .zones
                .iter()
                .map(|z| ZoneFile {
                    id: z.id,
                    kind: z.kind,
                    min_share: type_map(&z.min_share),
                })
                .collect(),
            stations: inst
                .stations
                .iter()
                .map(|s| StationFile {
                    id: s.id,
                    x: s.position.x,
                    y: s.position.y,
                    zone: s.zone,
                    open_cost: s.open_cost,
                    cap_per_type: type_map(&s.cap_per_type),
                    cap_total: s.cap_total,
                    install_cost: s
                        .install_cost
                        .iter()
                        .enumerate()
                        .filter(|(k, &v)| inst.chargers.get(*k).map(|c| c.install_cost) != Some(v))
                        .map(|(k, &v)| (k.to_string(), v))
                        .collect(),
                })
                .collect(),
            nodes: inst
                .nodes
                .iter()
                .map(|n| NodeFile {
                    id: n.id,
                    x: n.position.x,
                    y: n.position.y,
                    zone: n.zone,
                    profile: n.profile.clone(),
                    total: n.declared_total,
                })
                .collect(),
            distances: Some((0..inst.distances.rows()).map(|i| inst.distances.row(i).to_vec()).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy() -> Instance {
        let nodes = vec![
            DemandNode {
                id: 0,
                position: Point::new(0.0, 0.0),
                zone: 0,
                profile: vec![1, 2],
                declared_total: None,
            },
            DemandNode {
                id: 1,
                position: Point::new(300.0, 400.0),
                zone: 0,
                profile: vec![0, 3],
                declared_total: None,
            },
        ];
        let stations = vec![Station {
            id: 0,
            position: Point::new(0.0, 0.0),
            zone: 0,
            open_cost: 100.0,
            install_cost: vec![10.0],
            cap_per_type: vec![4],
            cap_total: 4,
        }];
        let np: Vec<Point> = nodes.iter().map(|n| n.position).collect();
        let sp: Vec<Point> = stations.iter().map(|s| s.position).collect();
        Instance {
            name: Some("toy".into()),
            horizon_label: "1 day".into(),
            periods: 2,
            chargers: vec![ChargerType {
                id: 0,
                name: None,
                recharge_periods: 1,
                install_cost: 10.0,
            }],
            zones: vec![Zone {
                id: 0,
                kind: ZoneKind::Commercial,
                min_share: vec![0.0],
            }],
            distances: DistanceMatrix::from_positions(&np, &sp),
            stations,
            nodes,
        }
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(euclidean_distance(Point::new(0.0, 0.0), Point::new(3.0, 4.0)), 5.0);
        assert_eq!(euclidean_distance(Point::new(7.0, -2.0), Point::new(7.0, -2.0)), 0.0);
        assert_eq!(euclidean_distance(Point::new(1000.0, 0.0), Point::new(-2000.0, 0.0)), 3000.0);
    }

    #[test]
    fn valid_toy_has_empty_report() {
        let report = validate_instance(&toy());
        assert!(report.is_empty(), "{:?}", report);
    }

    #[test]
    fn declared_total_mismatch_is_reported() {
        let mut inst = toy();
        inst.nodes[1].declared_total = Some(7);
        let report = validate_instance(&inst);
        assert!(report.contains("profile/total mismatch at node 1"));
    }

    #[test]
    fn capacity_shortfall_is_reported() {
        // 100 vehicles against a single station able to host 60 recharges.
        let mut inst = toy();
        inst.periods = 1;
        inst.nodes[0].profile = vec![50];
        inst.nodes[1].profile = vec![50];
        inst.stations[0].cap_per_type = vec![60];
        inst.stations[0].cap_total = 60;
        assert_eq!(inst.max_deployable_throughput(), Some(60));
        let report = validate_instance(&inst);
        assert!(report.contains("SP capacity shortfall"), "{:?}", report);
    }

    #[test]
    fn validation_is_idempotent() {
        let mut inst = toy();
        inst.zones[0].min_share = vec![1.5];
        let a = validate_instance(&inst);
        let b = validate_instance(&inst);
        assert_eq!(a, b);
        assert!(!a.is_valid());
    }

    #[test]
    fn type_cap_above_total_is_a_warning() {
        let mut inst = toy();
        inst.stations[0].cap_per_type = vec![9];
        let report = validate_instance(&inst);
        assert!(report.is_valid());
        assert!(report.contains("exceeds total cap"));
    }

    #[test]
    fn indivisible_recharge_time_is_an_error() {
        let mut inst = toy();
        inst.chargers[0].recharge_periods = 3;
        let report = validate_instance(&inst);
        assert!(report.contains("do not divide horizon"));
    }

    #[test]
    fn distances_must_match_positions() {
        let mut inst = toy();
        let rows = vec![vec![0.0], vec![499.0]];
        inst.distances = DistanceMatrix::from_rows(rows, 1).unwrap();
        assert!(validate_instance(&inst).contains("positions give 500"));
    }

    #[test]
    fn json_round_trip_is_byte_stable() {
        let inst = toy();
        let text = inst.to_json();
        let back = Instance::from_json(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn distances_default_to_positions() {
        let text = r#"{
            "periods": 1,
            "chargers": [{"id": 0, "recharge_periods": 1, "install_cost": 1.0}],
            "zones": [{"id": 0, "kind": "industrial", "min_share": {"0": 0.25}}],
            "stations": [{"id": 0, "x": 3.0, "y": 4.0, "zone": 0, "open_cost": 5.0,
                          "cap_per_type": {"0": 2}, "cap_total": 2}],
            "nodes": [{"id": 0, "x": 0.0, "y": 0.0, "zone": 0, "profile": [1]}]
        }"#;
        let inst = Instance::from_json(text).unwrap();
        assert_eq!(inst.distances.get(0, 0), 5.0);
        assert_eq!(inst.zones[0].min_share, vec![0.25]);
        assert!(validate_instance(&inst).is_empty());
    }

    #[test]
    fn out_of_order_ids_are_rejected() {
        let text = r#"{"periods": 1, "chargers": [{"id": 1, "recharge_periods": 1, "install_cost": 1.0}],
            "zones": [], "stations": [], "nodes": []}"#;
        assert!(matches!(Instance::from_json(text), Err(InstanceError::IdOrder { .. })));
    }

    #[test]
    fn deployment_quota_check() {
        let inst = {
            let mut i = toy();
            i.chargers.push(ChargerType {
                id: 1,
                name: None,
                recharge_periods: 1,
                install_cost: 20.0,
            });
            i.stations[0].install_cost.push(20.0);
            i.stations[0].cap_per_type.push(4);
            i.zones[0].min_share = vec![0.5, 0.0];
            i
        };
        let mut dep = Deployment::closed(1, 2);
        dep.open[0] = true;
        dep.set_count(0, 0, 1);
        dep.set_count(0, 1, 2);
        let v = dep.violations(&inst);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("zone quota"));
    }
}
