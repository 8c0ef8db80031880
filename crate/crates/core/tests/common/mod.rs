//! Seeded builders for small instances used by the integration tests.
#![allow(dead_code)]

use evcfl::domain::{ChargerType, DemandNode, DistanceMatrix, Instance, Point, Station, Zone, ZoneKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct TinyShape {
    pub max_nodes: usize,
    pub max_stations: usize,
    /// Budget on the summed station capacities.
    pub max_total_cap: u32,
    pub periods: usize,
    /// Every charger type recharges in one period.
    pub unit_recharge: bool,
}

impl TinyShape {
    pub const SP: TinyShape = TinyShape {
        max_nodes: 5,
        max_stations: 3,
        max_total_cap: 6,
        periods: 4,
        unit_recharge: false,
    };

    pub const MP: TinyShape = TinyShape {
        max_nodes: 5,
        max_stations: 3,
        max_total_cap: 6,
        periods: 4,
        unit_recharge: true,
    };
}

fn charger(id: usize, recharge: u32, cost: f64) -> ChargerType {
    ChargerType {
        id,
        name: None,
        recharge_periods: recharge,
        install_cost: cost,
    }
}

/// A random instance within `shape`, usually feasible but not always.
pub fn tiny_instance(shape: TinyShape, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let periods = shape.periods;
    let n_types = rng.random_range(1..=2usize);
    let mut chargers = Vec::new();
    for k in 0..n_types {
        let recharge = if shape.unit_recharge || k == 1 {
            1
        } else {
            // divisors of the horizon keep the throughput integral
            let options: Vec<u32> = (1..=periods as u32).filter(|r| (periods as u32).is_multiple_of(*r)).collect();
            options[rng.random_range(0..options.len())]
        };
        let cost = if k == 0 { 3_000.0 } else { 25_000.0 } * rng.random_range(0.8..1.2);
        chargers.push(charger(k, recharge, cost));
    }

    let n_zones = rng.random_range(1..=2usize);
    let kinds = [ZoneKind::Commercial, ZoneKind::Residential];
    let zones: Vec<Zone> = (0..n_zones)
        .map(|z| Zone {
            id: z,
            kind: kinds[z],
            min_share: (0..n_types)
                .map(|_| [0.0, 0.0, 0.2, 0.25][rng.random_range(0..4)])
                .collect(),
        })
        .collect();

    let n_stations = rng.random_range(1..=shape.max_stations);
    let mut cap_left = shape.max_total_cap;
    let mut stations = Vec::new();
    for j in 0..n_stations {
        let reserve = (n_stations - j - 1) as u32;
        let cap_total = rng.random_range(1..=(cap_left - reserve).max(1));
        cap_left -= cap_total;
        stations.push(Station {
            id: j,
            position: Point::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)),
            zone: j % n_zones,
            open_cost: rng.random_range(50_000.0..150_000.0),
            install_cost: chargers.iter().map(|c| c.install_cost).collect(),
            cap_per_type: (0..n_types).map(|_| rng.random_range(1..=cap_total)).collect(),
            cap_total,
        });
    }

    let n_nodes = rng.random_range(1..=shape.max_nodes);
    let nodes: Vec<DemandNode> = (0..n_nodes)
        .map(|i| {
            let mut profile = vec![0u32; periods];
            // node 0 always asks for something so the instance is never empty
            for _ in 0..rng.random_range(if i == 0 { 1..=3 } else { 0..=3 }) {
                profile[rng.random_range(0..periods)] += 1;
            }
            DemandNode {
                id: i,
                position: Point::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)),
                zone: i % n_zones,
                profile,
                declared_total: None,
            }
        })
        .collect();

    let node_pos: Vec<Point> = nodes.iter().map(|n| n.position).collect();
    let station_pos: Vec<Point> = stations.iter().map(|s| s.position).collect();
    Instance {
        name: Some(format!("tiny-{seed}")),
        horizon_label: format!("{periods} periods"),
        periods,
        chargers,
        zones,
        distances: DistanceMatrix::from_positions(&node_pos, &station_pos),
        stations,
        nodes,
    }
}

/// Rewrites `inst` so that every node asks for `per_period(i)` vehicles in
/// every period and every charger recharges in one period.
pub fn make_uniform(inst: &mut Instance, per_period: impl Fn(usize) -> u32) {
    for c in &mut inst.chargers {
        c.recharge_periods = 1;
    }
    let periods = inst.periods;
    for n in &mut inst.nodes {
        n.profile = vec![per_period(n.id); periods];
        n.declared_total = None;
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-9)
}
