#![allow(dead_code)] // not every test target uses every helper

//! Shared instance builders for the integration suites: seeded random
//! micro-instances and price-steered constructions whose system price is
//! known by design.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sced::network::{
    BusId, DemandGrid, Generator, GeneratorId, Line, LineId, NetworkCase, Storage, StorageId,
};
use std::collections::BTreeMap;

pub fn storage(id: &str, bus: &str) -> Storage {
    Storage {
        id: StorageId::new(id),
        bus: BusId::new(bus),
        charge_max: 1.5,
        discharge_max: 1.5,
        energy_min: 0.0,
        energy_max: 2.0,
        energy_initial: 1.0,
        eta_c: 0.9,
        eta_d: 0.9,
        self_discharge: 0.0,
        charge_fee_rate: 1.5,
        discharge_cost_quadratic: 0.0,
        discharge_cost_linear: 2.5,
    }
}

fn wide_generator(id: &str, bus: &str, cost_linear: f64) -> Generator {
    Generator {
        id: GeneratorId::new(id),
        bus: BusId::new(bus),
        p_min: 0.0,
        p_max: 1000.0,
        ramp_down_rate: -10_000.0,
        ramp_up_rate: 10_000.0,
        cost_quadratic: 0.0,
        cost_linear,
        cost_constant: 0.0,
    }
}

/// One bus, one wide linear-cost generator: the system price equals
/// `price` in every slot.
pub fn uniform_price_case(
    price: f64,
    horizon_t: usize,
    delta_t: f64,
    storages: Vec<Storage>,
) -> NetworkCase {
    let mut demand = BTreeMap::new();
    demand.insert(BusId::new("b1"), vec![10.0; horizon_t]);
    let case = NetworkCase {
        buses: vec![BusId::new("b1")],
        reference_bus: BusId::new("b1"),
        lines: vec![],
        generators: vec![wide_generator("g1", "b1", price)],
        storages,
        demand: DemandGrid::new(demand),
        horizon_t,
        delta_t,
    };
    case.validate().expect("steered case is valid");
    case
}

/// One bus, a cheap 60 MW unit priced `window_price` and a 2.0 $/MWh
/// backstop. Demand sits below 60 inside `window` (price = `window_price`)
/// and at 130 outside (price = 2.0).
pub fn windowed_price_case(
    window_price: f64,
    window: std::ops::RangeInclusive<usize>,
    horizon_t: usize,
    delta_t: f64,
    storages: Vec<Storage>,
) -> NetworkCase {
    let profile: Vec<f64> = (1..=horizon_t)
        .map(|t| if window.contains(&t) { 15.0 } else { 130.0 })
        .collect();
    let mut demand = BTreeMap::new();
    demand.insert(BusId::new("b1"), profile);
    let mut cheap = wide_generator("gwin", "b1", window_price);
    cheap.p_max = 60.0;
    let case = NetworkCase {
        buses: vec![BusId::new("b1")],
        reference_bus: BusId::new("b1"),
        lines: vec![],
        generators: vec![cheap, wide_generator("gback", "b1", 2.0)],
        storages,
        demand: DemandGrid::new(demand),
        horizon_t,
        delta_t,
    };
    case.validate().expect("steered case is valid");
    case
}

/// Random micro-instance: ≤ 3 buses, ≤ 2 storages, T ≤ 4, random convex
/// costs with the participation premise (f' < g') built in.
pub fn random_micro_case(rng: &mut ChaCha8Rng) -> NetworkCase {
    let n_buses = rng.gen_range(1..=3usize);
    let horizon_t = rng.gen_range(1..=4usize);
    let delta_t = [0.25, 0.5, 1.0][rng.gen_range(0..3)];
    let buses: Vec<BusId> = (1..=n_buses).map(|i| BusId::new(format!("b{i}"))).collect();

    let mut lines = Vec::new();
    if n_buses >= 2 {
        let tight = rng.gen_bool(0.3);
        let cap = if tight {
            rng.gen_range(25.0..60.0)
        } else {
            200.0
        };
        for i in 2..=n_buses {
            lines.push(Line {
                id: LineId::new(format!("l{i}")),
                from_bus: BusId::new(format!("b{}", i - 1)),
                to_bus: BusId::new(format!("b{i}")),
                reactance: rng.gen_range(0.05..2.0),
                flow_min: -cap,
                flow_max: cap,
            });
        }
        if n_buses == 3 && rng.gen_bool(0.5) {
            lines.push(Line {
                id: LineId::new("lring"),
                from_bus: BusId::new("b1"),
                to_bus: BusId::new("b3"),
                reactance: rng.gen_range(0.05..2.0),
                flow_min: -cap,
                flow_max: cap,
            });
        }
    }

    let n_gens = rng.gen_range(1..=2usize);
    let generators: Vec<Generator> = (1..=n_gens)
        .map(|i| {
            let generous_ramp = rng.gen_bool(0.8);
            let ramp = if generous_ramp {
                1000.0
            } else {
                rng.gen_range(5.0..40.0)
            };
            Generator {
                id: GeneratorId::new(format!("g{i}")),
                bus: buses[rng.gen_range(0..n_buses)].clone(),
                p_min: 0.0,
                p_max: rng.gen_range(40.0..120.0),
                ramp_down_rate: -ramp,
                ramp_up_rate: ramp,
                cost_quadratic: if rng.gen_bool(0.5) {
                    rng.gen_range(0.005..0.05)
                } else {
                    0.0
                },
                cost_linear: rng.gen_range(-4.0..8.0),
                cost_constant: 0.0,
            }
        })
        .collect();

    let n_storages = rng.gen_range(0..=2usize).min(n_buses);
    let mut storage_buses: Vec<usize> = (0..n_buses).collect();
    let storages: Vec<Storage> = (0..n_storages)
        .map(|i| {
            let pick = rng.gen_range(0..storage_buses.len());
            let bus = buses[storage_buses.swap_remove(pick)].clone();
            let f_prime = rng.gen_range(-2.0..3.0);
            let energy_max = rng.gen_range(1.0..10.0);
            let energy_min = rng.gen_range(0.0..0.3) * energy_max;
            Storage {
                id: StorageId::new(format!("s{}", i + 1)),
                bus,
                charge_max: rng.gen_range(0.5..5.0),
                discharge_max: rng.gen_range(0.5..5.0),
                energy_min,
                energy_max,
                energy_initial: rng.gen_range(energy_min..energy_max),
                eta_c: rng.gen_range(0.7..0.97),
                eta_d: rng.gen_range(0.7..0.97),
                self_discharge: if rng.gen_bool(0.3) {
                    rng.gen_range(0.0..0.05)
                } else {
                    0.0
                },
                charge_fee_rate: f_prime,
                // Participation premise: g'(p) ≥ g'(0) > f'.
                discharge_cost_quadratic: if rng.gen_bool(0.4) {
                    rng.gen_range(0.0..0.05)
                } else {
                    0.0
                },
                discharge_cost_linear: f_prime + rng.gen_range(0.1..3.0),
            }
        })
        .collect();

    let total_charge: f64 = storages.iter().map(|s| s.charge_max).sum();
    let mut demand_map = BTreeMap::new();
    for bus in &buses {
        if rng.gen_bool(0.8) || n_buses == 1 {
            demand_map.insert(
                bus.clone(),
                (0..horizon_t).map(|_| rng.gen_range(0.0..15.0)).collect(),
            );
        }
    }
    let mut case = NetworkCase {
        buses,
        reference_bus: BusId::new(format!("b{}", rng.gen_range(1..=n_buses))),
        lines,
        generators,
        storages,
        demand: DemandGrid::new(demand_map),
        horizon_t,
        delta_t,
    };
    // Make sure capacity covers peak demand plus full charging.
    let peak: f64 = (1..=horizon_t)
        .map(|t| case.demand.total(t))
        .fold(0.0, f64::max);
    let capacity: f64 = case.generators.iter().map(|g| g.p_max).sum();
    let shortfall = peak + total_charge + 5.0 - capacity;
    if shortfall > 0.0 {
        case.generators[0].p_max += shortfall;
    }
    case.validate().expect("random micro case is valid");
    case
}
