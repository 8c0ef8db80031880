//! Seeded generation of synthetic urban instances.
//!
//! Two city layouts are supported on a disc of radius `rays.outer`:
//! concentric rings (`COR`: commercial core, residential ring, industrial
//! outer ring) and three equal angular sectors (`SEC`). Demand nodes are
//! split evenly across the zones, stations are spread over the whole disc,
//! and every node receives an hourly demand profile shaped by its zone.
//!
//! # Reproducibility
//!
//! All randomness comes from one `ChaCha8Rng` seeded with
//! `seed_from_u64(seed)`. Draw order is fixed:
//!
//! 1. nodes, zone by zone (commercial, residential, industrial), each node
//!    taking a radial draw then an angular draw (redrawn as a pair in the
//!    measure-zero case where rounding lands the point in another zone);
//! 2. stations, radial then angular;
//! 3. demand profiles, node by node in id order, period by period.
//!
//! Radii use the inverse CDF of the uniform-area law, `r = sqrt(r0² +
//! u (r1² - r0²))`. Poisson variates come from `rand_distr::Poisson`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    ChargerType, DemandNode, DistanceMatrix, Instance, Point, Station, Zone, ZoneKind, DISTANCE_TOLERANCE,
};

pub const OPEN_COST: f64 = 100_000.0;
pub const QUICK_COST: f64 = 3_000.0;
pub const FAST_COST: f64 = 25_000.0;
pub const QUICK_RECHARGE: u32 = 4;
pub const FAST_RECHARGE: u32 = 1;
pub const DEFAULT_DAILY_TARGET: u32 = 10;
pub const DEFAULT_PERIODS: usize = 24;
/// Redraws allowed when every Poisson draw of a profile is zero.
pub const MAX_PROFILE_REDRAWS: usize = 100;

const PROFILES_T24: &str = include_str!("../data/profiles_t24.json");
const PROFILES_T8: &str = include_str!("../data/profiles_t8.json");

/// Minimum (quick, fast) share per zone.
pub fn default_min_share(kind: ZoneKind) -> [f64; 2] {
    match kind {
        ZoneKind::Commercial => [0.20, 0.40],
        ZoneKind::Residential => [0.50, 0.20],
        ZoneKind::Industrial => [0.25, 0.25],
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator parameters: {0}")]
    Params(String),
    #[error("point ({x}, {y}) lies outside the urban region")]
    OutOfRegion { x: f64, y: f64 },
    #[error("every draw of the level profile was zero after {0} attempts")]
    DegenerateProfile(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UrbanModel {
    #[serde(rename = "COR", alias = "cor")]
    Concentric,
    #[serde(rename = "SEC", alias = "sec")]
    Sector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rays {
    pub inner: f64,
    pub middle: f64,
    pub outer: f64,
}

impl Default for Rays {
    fn default() -> Self {
        Self {
            inner: 1000.0,
            middle: 2000.0,
            outer: 3000.0,
        }
    }
}

/// Standard hourly demand levels: 0 null, 1 low, 2 medium, 3 high. Each
/// level is the Poisson mean of the raw draw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LevelProfile {
    pub levels: Vec<u8>,
}

impl LevelProfile {
    pub fn new(levels: Vec<u8>) -> Result<Self, GenError> {
        if let Some(bad) = levels.iter().find(|&&l| l > 3) {
            return Err(GenError::Params(format!("demand level {bad} outside 0..=3")));
        }
        Ok(Self { levels })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneProfiles {
    pub commercial: LevelProfile,
    pub residential: LevelProfile,
    pub industrial: LevelProfile,
}

impl ZoneProfiles {
    /// Shipped defaults: the 24-hour day and an 8-period illustrative day.
    pub fn defaults(periods: usize) -> Option<Self> {
        let text = match periods {
            24 => PROFILES_T24,
            8 => PROFILES_T8,
            _ => return None,
        };
        Some(serde_json::from_str(text).expect("bundled profiles parse"))
    }

    pub fn get(&self, kind: ZoneKind) -> &LevelProfile {
        match kind {
            ZoneKind::Commercial => &self.commercial,
            ZoneKind::Residential => &self.residential,
            ZoneKind::Industrial => &self.industrial,
        }
    }
}

fn default_periods() -> usize {
    DEFAULT_PERIODS
}

fn default_target() -> u32 {
    DEFAULT_DAILY_TARGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub urban_model: UrbanModel,
    pub nodes: usize,
    pub stations: usize,
    /// Uniform charger cap, per type and in total, at every station.
    pub cap: u32,
    #[serde(default = "default_periods")]
    pub periods: usize,
    #[serde(default)]
    pub rays: Rays,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles: Option<ZoneProfiles>,
    #[serde(default = "default_target")]
    pub daily_target: u32,
    pub seed: u64,
}

impl GenParams {
    pub fn new(urban_model: UrbanModel, nodes: usize, stations: usize, cap: u32, seed: u64) -> Self {
        Self {
            urban_model,
            nodes,
            stations,
            cap,
            periods: DEFAULT_PERIODS,
            rays: Rays::default(),
            profiles: None,
            daily_target: DEFAULT_DAILY_TARGET,
            seed,
        }
    }

    pub fn with_periods(mut self, periods: usize) -> Self {
        self.periods = periods;
        self
    }

    /// `I_J_u`, the conventional instance name.
    pub fn name(&self) -> String {
        format!("{}_{}_{}", self.nodes, self.stations, self.cap)
    }

    pub fn file_name(&self) -> String {
        format!("{}.s{}.json", self.name(), self.seed)
    }

    pub fn resolved_profiles(&self) -> Result<ZoneProfiles, GenError> {
        let profiles = match &self.profiles {
            Some(p) => p.clone(),
            None => ZoneProfiles::defaults(self.periods).ok_or_else(|| {
                GenError::Params(format!("no default level profiles for {} periods", self.periods))
            })?,
        };
        for kind in ZoneKind::ALL {
            let p = profiles.get(kind);
            if p.len() != self.periods {
                return Err(GenError::Params(format!(
                    "{kind} profile has {} levels, horizon has {} periods",
                    p.len(),
                    self.periods
                )));
            }
            LevelProfile::new(p.levels.clone())?;
        }
        Ok(profiles)
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let fail = |m: &str| Err(GenError::Params(m.to_string()));
        if self.nodes < 3 {
            return fail("at least one demand node per zone is required");
        }
        if self.stations == 0 {
            return fail("at least one station is required");
        }
        if self.periods == 0 {
            return fail("the horizon needs at least one period");
        }
        if !self.periods.is_multiple_of(QUICK_RECHARGE as usize) {
            return fail("periods must be a multiple of the quick recharge time");
        }
        if self.daily_target == 0 {
            return fail("daily target must be positive");
        }
        let r = self.rays;
        if !(r.inner > 0.0 && r.inner < r.middle && r.middle < r.outer && r.outer.is_finite()) {
            return fail("rays must be positive and strictly increasing");
        }
        self.resolved_profiles().map(|_| ())
    }
}

fn normalized_angle(p: Point) -> f64 {
    let a = p.y.atan2(p.x);
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

const SECTOR: f64 = 2.0 * PI / 3.0;

/// Zone of a point of the disc. Ring boundaries belong to the inner zone;
/// sectors are `[0°, 120°)`, `[120°, 240°)`, `[240°, 360°)` measured
/// counterclockwise from the positive x axis.
pub fn zone_of_point(model: UrbanModel, rays: &Rays, p: Point) -> Result<ZoneKind, GenError> {
    let r = p.radius();
    if r.is_nan() || r > rays.outer + DISTANCE_TOLERANCE {
        return Err(GenError::OutOfRegion { x: p.x, y: p.y });
    }
    Ok(match model {
        UrbanModel::Concentric => {
            if r <= rays.inner {
                ZoneKind::Commercial
            } else if r <= rays.middle {
                ZoneKind::Residential
            } else {
                ZoneKind::Industrial
            }
        }
        UrbanModel::Sector => {
            let a = normalized_angle(p);
            if a < SECTOR {
                ZoneKind::Commercial
            } else if a < 2.0 * SECTOR {
                ZoneKind::Residential
            } else {
                ZoneKind::Industrial
            }
        }
    })
}

/// Nodes per zone: an even split, extra nodes going to the earlier zones.
pub fn zone_node_counts(nodes: usize) -> [usize; 3] {
    let base = nodes / 3;
    let rem = nodes % 3;
    [0, 1, 2].map(|z| base + usize::from(z < rem))
}

/// Uniform in (0, 1].
fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

fn polar(r: f64, theta: f64) -> Point {
    Point::new(r * theta.cos(), r * theta.sin())
}

fn annulus_radius(r0: f64, r1: f64, u: f64) -> f64 {
    (r0 * r0 + u * (r1 * r1 - r0 * r0)).sqrt()
}

/// Uniform point of a zone's region.
pub fn sample_in_zone<R: Rng>(model: UrbanModel, rays: &Rays, kind: ZoneKind, rng: &mut R) -> Point {
    loop {
        let p = match model {
            UrbanModel::Concentric => {
                let (r0, r1) = match kind {
                    ZoneKind::Commercial => (0.0, rays.inner),
                    ZoneKind::Residential => (rays.inner, rays.middle),
                    ZoneKind::Industrial => (rays.middle, rays.outer),
                };
                let r = annulus_radius(r0, r1, open_unit(rng));
                polar(r, 2.0 * PI * rng.random::<f64>())
            }
            UrbanModel::Sector => {
                let lo = match kind {
                    ZoneKind::Commercial => 0.0,
                    ZoneKind::Residential => SECTOR,
                    ZoneKind::Industrial => 2.0 * SECTOR,
                };
                let r = rays.outer * open_unit(rng).sqrt();
                polar(r, lo + SECTOR * rng.random::<f64>())
            }
        };
        if zone_of_point(model, rays, p).ok() == Some(kind) {
            return p;
        }
    }
}

/// Uniform point of the whole disc.
pub fn sample_in_disc<R: Rng>(rays: &Rays, rng: &mut R) -> Point {
    let r = rays.outer * rng.random::<f64>().sqrt();
    polar(r, 2.0 * PI * rng.random::<f64>())
}

/// Scales raw draws so they sum to roughly `target`, rounding each entry to
/// the nearest integer with ties going up. `draws` must not sum to zero.
pub fn normalize_draws(draws: &[u64], target: u32) -> Vec<u32> {
    let sum: u64 = draws.iter().sum();
    assert!(sum > 0, "draws must not all be zero");
    let t = target as u64;
    // round_half_up(d·t / sum) = floor((2·d·t + sum) / (2·sum))
    draws.iter().map(|&d| ((2 * d * t + sum) / (2 * sum)) as u32).collect()
}

/// One node's profile: independent Poisson draws at the zone levels,
/// normalized to the daily target.
pub fn sample_profile<R: Rng>(levels: &LevelProfile, daily_target: u32, rng: &mut R) -> Result<Vec<u32>, GenError> {
    if daily_target == 0 {
        return Err(GenError::Params("daily target must be positive".into()));
    }
    let dists: Vec<Option<Poisson<f64>>> = levels
        .levels
        .iter()
        .map(|&l| (l > 0).then(|| Poisson::new(l as f64).expect("positive mean")))
        .collect();
    for _ in 0..MAX_PROFILE_REDRAWS {
        let draws: Vec<u64> = dists
            .iter()
            .map(|d| d.as_ref().map_or(0, |d| d.sample(rng) as u64))
            .collect();
        if draws.iter().any(|&d| d > 0) {
            return Ok(normalize_draws(&draws, daily_target));
        }
    }
    Err(GenError::DegenerateProfile(MAX_PROFILE_REDRAWS))
}

fn default_chargers() -> Vec<ChargerType> {
    vec![
        ChargerType {
            id: 0,
            name: Some("quick".into()),
            recharge_periods: QUICK_RECHARGE,
            install_cost: QUICK_COST,
        },
        ChargerType {
            id: 1,
            name: Some("fast".into()),
            recharge_periods: FAST_RECHARGE,
            install_cost: FAST_COST,
        },
    ]
}

fn zone_index(kind: ZoneKind) -> usize {
    match kind {
        ZoneKind::Commercial => 0,
        ZoneKind::Residential => 1,
        ZoneKind::Industrial => 2,
    }
}

/// Generates a complete instance. Equal parameters give equal instances.
pub fn generate_instance(params: &GenParams) -> Result<Instance, GenError> {
    params.validate()?;
    let profiles = params.resolved_profiles()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let counts = zone_node_counts(params.nodes);
    let mut placed: Vec<(ZoneKind, Point)> = Vec::with_capacity(params.nodes);
    for kind in ZoneKind::ALL {
        for _ in 0..counts[zone_index(kind)] {
            placed.push((kind, sample_in_zone(params.urban_model, &params.rays, kind, &mut rng)));
        }
    }

    let mut stations = Vec::with_capacity(params.stations);
    for j in 0..params.stations {
        let p = sample_in_disc(&params.rays, &mut rng);
        let kind = zone_of_point(params.urban_model, &params.rays, p)?;
        stations.push(Station {
            id: j,
            position: p,
            zone: zone_index(kind),
            open_cost: OPEN_COST,
            install_cost: vec![QUICK_COST, FAST_COST],
            cap_per_type: vec![params.cap, params.cap],
            cap_total: params.cap,
        });
    }

    let mut nodes = Vec::with_capacity(params.nodes);
    for (i, (kind, p)) in placed.into_iter().enumerate() {
        let profile = sample_profile(profiles.get(kind), params.daily_target, &mut rng)?;
        nodes.push(DemandNode {
            id: i,
            position: p,
            zone: zone_index(kind),
            profile,
            declared_total: None,
        });
    }

    let zones = ZoneKind::ALL
        .iter()
        .map(|&kind| Zone {
            id: zone_index(kind),
            kind,
            min_share: default_min_share(kind).to_vec(),
        })
        .collect();
    let np: Vec<Point> = nodes.iter().map(|n| n.position).collect();
    let sp: Vec<Point> = stations.iter().map(|s| s.position).collect();
    Ok(Instance {
        name: Some(params.name()),
        horizon_label: if params.periods == 24 { "1 day".into() } else { format!("{} periods", params.periods) },
        periods: params.periods,
        chargers: default_chargers(),
        zones,
        distances: DistanceMatrix::from_positions(&np, &sp),
        stations,
        nodes,
    })
}

/// The single-peak family on which time-agnostic sizing loses `1 - 1/T` of
/// the demand: one fast-charger type with `R = 1`, one node whose whole
/// demand arrives in period `peak` (0-based), and two stations collocated
/// with it so that travel costs nothing.
pub fn build_worstcase_instance(periods: usize, demand_total: u32, peak: usize) -> Result<Instance, GenError> {
    if periods == 0 {
        return Err(GenError::Params("the horizon needs at least one period".into()));
    }
    if demand_total == 0 || !(demand_total as usize).is_multiple_of(periods) {
        return Err(GenError::Params(format!(
            "total demand {demand_total} must be a positive multiple of {periods}"
        )));
    }
    if peak >= periods {
        return Err(GenError::Params(format!("peak period {peak} outside horizon")));
    }
    let mut profile = vec![0; periods];
    profile[peak] = demand_total;
    let stations: Vec<Station> = (0..2)
        .map(|j| Station {
            id: j,
            position: Point::ORIGIN,
            zone: 0,
            open_cost: OPEN_COST,
            install_cost: vec![FAST_COST],
            cap_per_type: vec![demand_total],
            cap_total: demand_total,
        })
        .collect();
    Ok(Instance {
        name: Some(format!("worstcase_T{periods}_D{demand_total}")),
        horizon_label: format!("{periods} periods"),
        periods,
        chargers: vec![ChargerType {
            id: 0,
            name: Some("fast".into()),
            recharge_periods: 1,
            install_cost: FAST_COST,
        }],
        zones: vec![Zone {
            id: 0,
            kind: ZoneKind::Commercial,
            min_share: vec![0.0],
        }],
        distances: DistanceMatrix::from_positions(&[Point::ORIGIN], &[Point::ORIGIN, Point::ORIGIN]),
        stations,
        nodes: vec![DemandNode {
            id: 0,
            position: Point::ORIGIN,
            zone: 0,
            profile,
            declared_total: None,
        }],
    })
}
