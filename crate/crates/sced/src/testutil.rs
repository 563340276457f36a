//! Shared instance builders for unit tests: price-steered micro cases where
//! the marginal unit pins the system price to a known value.

use crate::network::{
    BusId, DemandGrid, Generator, GeneratorId, Line, LineId, NetworkCase, Storage, StorageId,
};
use std::collections::BTreeMap;

pub(crate) fn default_storage() -> Storage {
    Storage {
        id: StorageId::new("s1"),
        bus: BusId::new("b1"),
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

/// One bus, one wide-interval linear-cost generator and constant demand:
/// the generator stays strictly interior, so the system price equals
/// `price_target` in every slot.
pub(crate) fn uniform_price_case(
    price_target: f64,
    horizon_t: usize,
    delta_t: f64,
    storage: Option<Storage>,
) -> NetworkCase {
    let mut demand = BTreeMap::new();
    demand.insert(BusId::new("b1"), vec![10.0; horizon_t]);
    let case = NetworkCase {
        buses: vec![BusId::new("b1")],
        reference_bus: BusId::new("b1"),
        lines: vec![],
        generators: vec![Generator {
            id: GeneratorId::new("g1"),
            bus: BusId::new("b1"),
            p_min: 0.0,
            p_max: 1000.0,
            ramp_down_rate: -10_000.0,
            ramp_up_rate: 10_000.0,
            cost_quadratic: 0.0,
            cost_linear: price_target,
            cost_constant: 0.0,
        }],
        storages: storage.into_iter().collect(),
        demand: DemandGrid::new(demand),
        horizon_t,
        delta_t,
    };
    case.validate().expect("builder produces valid cases");
    case
}

/// Two buses joined by a 5 MW line, cheap unit ($10) at bus 1, expensive
/// unit ($30) at bus 2, 20 MW of demand at bus 2: the line binds and the
/// buses price at their local marginal units.
pub(crate) fn congested_two_bus_case() -> NetworkCase {
    let mut demand = BTreeMap::new();
    demand.insert(BusId::new("b2"), vec![20.0]);
    let case = NetworkCase {
        buses: vec![BusId::new("b1"), BusId::new("b2")],
        reference_bus: BusId::new("b2"),
        lines: vec![Line {
            id: LineId::new("l12"),
            from_bus: BusId::new("b1"),
            to_bus: BusId::new("b2"),
            reactance: 0.1,
            flow_min: -5.0,
            flow_max: 5.0,
        }],
        generators: vec![
            Generator {
                id: GeneratorId::new("cheap"),
                bus: BusId::new("b1"),
                p_min: 0.0,
                p_max: 100.0,
                ramp_down_rate: -1000.0,
                ramp_up_rate: 1000.0,
                cost_quadratic: 0.0,
                cost_linear: 10.0,
                cost_constant: 0.0,
            },
            Generator {
                id: GeneratorId::new("dear"),
                bus: BusId::new("b2"),
                p_min: 0.0,
                p_max: 100.0,
                ramp_down_rate: -1000.0,
                ramp_up_rate: 1000.0,
                cost_quadratic: 0.0,
                cost_linear: 30.0,
                cost_constant: 0.0,
            },
        ],
        storages: vec![],
        demand: DemandGrid::new(demand),
        horizon_t: 1,
        delta_t: 1.0,
    };
    case.validate().expect("builder produces valid cases");
    case
}

/// One bus, one quadratic-cost generator (h(p) = 0.5p² + 2p), 10 MW of
/// demand per slot, Δt = 0.5, optionally a storage with a 10% self-discharge
/// rate.
pub(crate) fn one_bus_case(with_storage: bool, horizon_t: usize) -> NetworkCase {
    let mut demand = BTreeMap::new();
    demand.insert(BusId::new("b1"), vec![10.0; horizon_t]);
    let case = NetworkCase {
        buses: vec![BusId::new("b1")],
        reference_bus: BusId::new("b1"),
        lines: vec![],
        generators: vec![Generator {
            id: GeneratorId::new("g1"),
            bus: BusId::new("b1"),
            p_min: 0.0,
            p_max: 100.0,
            ramp_down_rate: -1000.0,
            ramp_up_rate: 1000.0,
            cost_quadratic: 0.5,
            cost_linear: 2.0,
            cost_constant: 0.0,
        }],
        storages: if with_storage {
            vec![Storage {
                id: StorageId::new("s1"),
                bus: BusId::new("b1"),
                charge_max: 5.0,
                discharge_max: 5.0,
                energy_min: 0.0,
                energy_max: 10.0,
                energy_initial: 5.0,
                eta_c: 0.9,
                eta_d: 0.9,
                self_discharge: 0.1,
                charge_fee_rate: 1.5,
                discharge_cost_quadratic: 0.0,
                discharge_cost_linear: 2.5,
            }]
        } else {
            vec![]
        },
        demand: DemandGrid::new(demand),
        horizon_t,
        delta_t: 0.5,
    };
    case.validate().expect("builder produces valid cases");
    case
}
