//! Grid and horizon data model: buses, lines, generators, storages, demand
//! profiles, shift factors, and storage energy dynamics.
//!
//! All quantities are in MW, MWh and hours. Time slots are 1-based
//! (`t = 1..=horizon_T`). Wind is modeled as negative demand folded into the
//! demand profile. All types are immutable values after construction and all
//! operations are pure functions.

mod gsf;
mod parse;

pub use gsf::{compute_gsf, GsfError, GsfMatrix};
pub use parse::{load_case, parse_case, serialize_case};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

macro_rules! id_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

id_newtype!(
    /// Identifier of a network bus.
    BusId
);
id_newtype!(
    /// Identifier of a transmission line.
    LineId
);
id_newtype!(
    /// Identifier of a generator.
    GeneratorId
);
id_newtype!(
    /// Identifier of a storage unit.
    StorageId
);

/// Error raised while validating a case or evaluating network operations.
#[derive(Debug, Error)]
pub enum CaseError {
    /// Malformed case document; position as reported by the JSON parser.
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    /// Structurally valid document violating a model invariant. `path` names
    /// the offending field, e.g. `storages[0].eta_c`.
    #[error("semantic error at `{path}`: {message}")]
    Semantic { path: String, message: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("demand CSV `{path}`: {message}")]
    Csv { path: String, message: String },
    /// A slot index outside `1..=horizon_T` (or beyond the supplied schedule).
    #[error("time slot {t} out of range 1..={max}")]
    SlotOutOfRange { t: usize, max: usize },
}

impl CaseError {
    pub(crate) fn semantic(path: impl Into<String>, message: impl Into<String>) -> Self {
        CaseError::Semantic {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// A transmission line with bidirectional flow limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: LineId,
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Series reactance in per-unit, > 0.
    pub reactance: f64,
    /// Lower flow limit in MW (≤ 0; flow measured from `from_bus` to `to_bus`).
    pub flow_min: f64,
    /// Upper flow limit in MW (≥ 0).
    pub flow_max: f64,
}

/// A dispatchable generator with a convex quadratic cost.
///
/// The hourly cost at output `p` MW is
/// `cost_quadratic·p² + cost_linear·p + cost_constant` in $/h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: GeneratorId,
    pub bus: BusId,
    pub p_min: f64,
    pub p_max: f64,
    /// Maximum rate of decrease, MW/h, signed (≤ 0).
    pub ramp_down_rate: f64,
    /// Maximum rate of increase, MW/h (≥ 0).
    pub ramp_up_rate: f64,
    /// $/MW²h, ≥ 0 (convexity).
    pub cost_quadratic: f64,
    /// $/MWh.
    pub cost_linear: f64,
    /// $/h.
    pub cost_constant: f64,
}

impl Generator {
    /// Marginal cost at output `p`, $/MWh.
    pub fn marginal_cost(&self, p: f64) -> f64 {
        2.0 * self.cost_quadratic * p + self.cost_linear
    }
}

/// A grid-connected storage unit.
///
/// Charging is paid for at the linear fee rate `charge_fee_rate` ($/MWh,
/// revenue to the system) and discharging is compensated at the convex
/// quadratic rate `discharge_cost_quadratic·p² + discharge_cost_linear·p`
/// ($/h, cost to the system).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Storage {
    pub id: StorageId,
    pub bus: BusId,
    /// Maximum charging power, MW.
    pub charge_max: f64,
    /// Maximum discharging power, MW.
    pub discharge_max: f64,
    /// Lower energy bound, MWh.
    pub energy_min: f64,
    /// Upper energy bound, MWh.
    pub energy_max: f64,
    /// Initial stored energy, MWh.
    pub energy_initial: f64,
    /// Charging efficiency in (0, 1].
    pub eta_c: f64,
    /// Discharging efficiency in (0, 1].
    pub eta_d: f64,
    /// Per-slot self-discharge rate in [0, 1).
    pub self_discharge: f64,
    /// Marginal charging fee f', $/MWh.
    pub charge_fee_rate: f64,
    /// Quadratic discharging cost coefficient, $/MW²h, ≥ 0.
    pub discharge_cost_quadratic: f64,
    /// Linear discharging cost coefficient, $/MWh.
    pub discharge_cost_linear: f64,
}

impl Storage {
    /// Marginal discharging compensation g' at discharge level `p`, $/MWh.
    pub fn discharge_marginal(&self, p: f64) -> f64 {
        2.0 * self.discharge_cost_quadratic * p + self.discharge_cost_linear
    }

    /// Round-trip efficiency product ηᶜηᵈ.
    pub fn eta_product(&self) -> f64 {
        self.eta_c * self.eta_d
    }
}

/// Per-bus demand profiles over the horizon. Buses absent from the map have
/// zero demand. Negative entries represent local surplus (wind).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DemandGrid {
    by_bus: BTreeMap<BusId, Vec<f64>>,
}

impl DemandGrid {
    pub fn new(by_bus: BTreeMap<BusId, Vec<f64>>) -> Self {
        Self { by_bus }
    }

    /// Demand at `bus` in slot `t` (1-based), MW.
    pub fn at(&self, bus: &BusId, t: usize) -> f64 {
        self.by_bus
            .get(bus)
            .and_then(|v| v.get(t - 1))
            .copied()
            .unwrap_or(0.0)
    }

    /// Total system demand in slot `t`, MW.
    pub fn total(&self, t: usize) -> f64 {
        self.by_bus.values().filter_map(|v| v.get(t - 1)).sum()
    }

    pub fn buses(&self) -> impl Iterator<Item = &BusId> {
        self.by_bus.keys()
    }

    pub fn profile(&self, bus: &BusId) -> Option<&[f64]> {
        self.by_bus.get(bus).map(|v| v.as_slice())
    }

    /// Scale every entry of slot `t` by `factor`.
    pub fn scale_slot(&mut self, t: usize, factor: f64) {
        for profile in self.by_bus.values_mut() {
            if let Some(v) = profile.get_mut(t - 1) {
                *v *= factor;
            }
        }
    }
}

/// Immutable grid plus horizon description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub buses: Vec<BusId>,
    pub reference_bus: BusId,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub storages: Vec<Storage>,
    pub demand: DemandGrid,
    /// Number of time slots T ≥ 1.
    #[serde(rename = "horizon_T")]
    pub horizon_t: usize,
    /// Slot length in hours, > 0.
    pub delta_t: f64,
}

impl NetworkCase {
    /// Index of `bus` in `self.buses`.
    pub fn bus_index(&self, bus: &BusId) -> Option<usize> {
        self.buses.iter().position(|b| b == bus)
    }

    pub fn storage(&self, id: &StorageId) -> Option<&Storage> {
        self.storages.iter().find(|s| &s.id == id)
    }

    pub fn generator(&self, id: &GeneratorId) -> Option<&Generator> {
        self.generators.iter().find(|g| &g.id == id)
    }

    /// Check every type invariant, reporting the first violation with its
    /// field path.
    ///
    /// Negated comparisons are used throughout so NaN values fail
    /// validation rather than slipping past a direct `<`.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), CaseError> {
        if self.horizon_t < 1 {
            return Err(CaseError::semantic("horizon_T", "must be ≥ 1"));
        }
        if !(self.delta_t > 0.0) {
            return Err(CaseError::semantic("delta_t", "must be > 0"));
        }
        if self.buses.is_empty() {
            return Err(CaseError::semantic("buses", "at least one bus required"));
        }
        let bus_set: BTreeSet<&BusId> = self.buses.iter().collect();
        if bus_set.len() != self.buses.len() {
            return Err(CaseError::semantic("buses", "duplicate bus id"));
        }
        if !bus_set.contains(&self.reference_bus) {
            return Err(CaseError::semantic(
                "reference_bus",
                format!("unknown bus `{}`", self.reference_bus),
            ));
        }

        let mut line_ids = BTreeSet::new();
        for (i, line) in self.lines.iter().enumerate() {
            let path = |f: &str| format!("lines[{i}].{f}");
            if !line_ids.insert(&line.id) {
                return Err(CaseError::semantic(path("id"), "duplicate line id"));
            }
            for (field, bus) in [("from_bus", &line.from_bus), ("to_bus", &line.to_bus)] {
                if !bus_set.contains(bus) {
                    return Err(CaseError::semantic(
                        path(field),
                        format!("unknown bus `{bus}`"),
                    ));
                }
            }
            if line.from_bus == line.to_bus {
                return Err(CaseError::semantic(path("to_bus"), "self-loop line"));
            }
            if !(line.reactance > 0.0) {
                return Err(CaseError::semantic(path("reactance"), "must be > 0"));
            }
            if !(line.flow_min <= 0.0 && 0.0 <= line.flow_max) {
                return Err(CaseError::semantic(
                    path("flow_min"),
                    "bidirectional limits require flow_min ≤ 0 ≤ flow_max",
                ));
            }
        }

        let mut gen_ids = BTreeSet::new();
        for (i, g) in self.generators.iter().enumerate() {
            let path = |f: &str| format!("generators[{i}].{f}");
            if !gen_ids.insert(&g.id) {
                return Err(CaseError::semantic(path("id"), "duplicate generator id"));
            }
            if !bus_set.contains(&g.bus) {
                return Err(CaseError::semantic(
                    path("bus"),
                    format!("unknown bus `{}`", g.bus),
                ));
            }
            if !(g.p_min <= g.p_max) {
                return Err(CaseError::semantic(path("p_min"), "requires p_min ≤ p_max"));
            }
            if !(g.ramp_down_rate <= 0.0) {
                return Err(CaseError::semantic(
                    path("ramp_down_rate"),
                    "must be ≤ 0 (signed rate of decrease)",
                ));
            }
            if !(g.ramp_up_rate >= 0.0) {
                return Err(CaseError::semantic(path("ramp_up_rate"), "must be ≥ 0"));
            }
            if !(g.cost_quadratic >= 0.0) {
                return Err(CaseError::semantic(
                    path("cost_quadratic"),
                    "must be ≥ 0 (convex cost)",
                ));
            }
        }

        let mut storage_ids = BTreeSet::new();
        let mut storage_buses = BTreeSet::new();
        for (i, s) in self.storages.iter().enumerate() {
            let path = |f: &str| format!("storages[{i}].{f}");
            if !storage_ids.insert(&s.id) {
                return Err(CaseError::semantic(path("id"), "duplicate storage id"));
            }
            if !bus_set.contains(&s.bus) {
                return Err(CaseError::semantic(
                    path("bus"),
                    format!("unknown bus `{}`", s.bus),
                ));
            }
            if !storage_buses.insert(&s.bus) {
                return Err(CaseError::semantic(
                    path("bus"),
                    "at most one storage per bus; aggregate records",
                ));
            }
            if !(s.eta_c > 0.0 && s.eta_c <= 1.0) {
                return Err(CaseError::semantic(path("eta_c"), "must lie in (0, 1]"));
            }
            if !(s.eta_d > 0.0 && s.eta_d <= 1.0) {
                return Err(CaseError::semantic(path("eta_d"), "must lie in (0, 1]"));
            }
            if !(s.eta_c * s.eta_d < 1.0) {
                return Err(CaseError::semantic(
                    path("eta_c"),
                    "round-trip product eta_c·eta_d must be < 1",
                ));
            }
            if !(s.self_discharge >= 0.0 && s.self_discharge < 1.0) {
                return Err(CaseError::semantic(
                    path("self_discharge"),
                    "must lie in [0, 1)",
                ));
            }
            if !(s.energy_min <= s.energy_initial && s.energy_initial <= s.energy_max) {
                return Err(CaseError::semantic(
                    path("energy_initial"),
                    "requires energy_min ≤ energy_initial ≤ energy_max",
                ));
            }
            if !(s.charge_max >= 0.0) {
                return Err(CaseError::semantic(path("charge_max"), "must be ≥ 0"));
            }
            if !(s.discharge_max >= 0.0) {
                return Err(CaseError::semantic(path("discharge_max"), "must be ≥ 0"));
            }
            if !(s.discharge_cost_quadratic >= 0.0) {
                return Err(CaseError::semantic(
                    path("discharge_cost_quadratic"),
                    "must be ≥ 0 (convex cost)",
                ));
            }
        }

        for (bus, profile) in &self.demand.by_bus {
            if !bus_set.contains(bus) {
                return Err(CaseError::semantic(
                    format!("demand.{bus}"),
                    "unknown bus".to_string(),
                ));
            }
            if profile.len() != self.horizon_t {
                return Err(CaseError::semantic(
                    format!("demand.{bus}"),
                    format!(
                        "profile length {} does not match horizon_T = {}",
                        profile.len(),
                        self.horizon_t
                    ),
                ));
            }
        }

        if !self.is_connected() {
            return Err(CaseError::semantic(
                "lines",
                "network is not connected over the line set",
            ));
        }
        Ok(())
    }

    /// Breadth-first connectivity over `lines`.
    fn is_connected(&self) -> bool {
        if self.buses.len() <= 1 {
            return true;
        }
        let index: BTreeMap<&BusId, usize> =
            self.buses.iter().enumerate().map(|(i, b)| (b, i)).collect();
        let mut adj = vec![Vec::new(); self.buses.len()];
        for line in &self.lines {
            let (Some(&a), Some(&b)) = (index.get(&line.from_bus), index.get(&line.to_bus)) else {
                return false;
            };
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.buses.len()];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.iter().all(|&s| s)
    }
}

/// Stored energy of `storage` at the end of slot `t` (1-based), given the
/// charge/discharge schedule over slots `1..=t` in MW.
///
/// Evaluates the closed form
/// `s(t) = (1-ε)^t s⁰ + Σ_{τ=1..t} (1-ε)^{t-τ} (ηᶜ p^c(τ) - p^d(τ)/ηᵈ) Δt`.
pub fn storage_energy(
    storage: &Storage,
    charge: &[f64],
    discharge: &[f64],
    t: usize,
    delta_t: f64,
) -> Result<f64, CaseError> {
    let max = charge.len().min(discharge.len());
    if t < 1 || t > max {
        return Err(CaseError::SlotOutOfRange { t, max });
    }
    let keep = 1.0 - storage.self_discharge;
    let mut s = keep.powi(t as i32) * storage.energy_initial;
    for tau in 1..=t {
        let net = storage.eta_c * charge[tau - 1] - discharge[tau - 1] / storage.eta_d;
        s += keep.powi((t - tau) as i32) * net * delta_t;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn test_storage() -> Storage {
        Storage {
            id: StorageId::new("s1"),
            bus: BusId::new("b1"),
            charge_max: 10.0,
            discharge_max: 10.0,
            energy_min: 0.0,
            energy_max: 100.0,
            energy_initial: 5.0,
            eta_c: 1.0,
            eta_d: 1.0,
            self_discharge: 0.0,
            charge_fee_rate: 1.5,
            discharge_cost_quadratic: 0.0,
            discharge_cost_linear: 2.5,
        }
    }

    #[test]
    fn storage_energy_lossless_bookkeeping() {
        // ε=0, η=1, s⁰=5, Δt=1, charge 2 then discharge 3 → 5+2-3 = 4 MWh.
        let s = test_storage();
        let e = storage_energy(&s, &[2.0, 0.0], &[0.0, 3.0], 2, 1.0).unwrap();
        assert!((e - 4.0).abs() < 1e-12);
    }

    #[test]
    fn storage_energy_with_efficiencies() {
        // Hand recursion: 2 + 0.9·10·0.5 − (9/0.9)·0.5 = 1.5 MWh.
        let mut s = test_storage();
        s.eta_c = 0.9;
        s.eta_d = 0.9;
        s.energy_initial = 2.0;
        let e = storage_energy(&s, &[10.0, 0.0], &[0.0, 9.0], 2, 0.5).unwrap();
        assert!((e - 1.5).abs() < 1e-12);
    }

    #[test]
    fn storage_energy_self_discharge_decay() {
        // ε=0.1, s⁰=10, idle two slots → 0.9²·10 = 8.1 MWh.
        let mut s = test_storage();
        s.self_discharge = 0.1;
        s.energy_initial = 10.0;
        let e = storage_energy(&s, &[0.0, 0.0], &[0.0, 0.0], 2, 1.0).unwrap();
        assert!((e - 8.1).abs() < 1e-12);
    }

    #[test]
    fn storage_energy_slot_out_of_range() {
        let s = test_storage();
        assert!(matches!(
            storage_energy(&s, &[0.0], &[0.0], 2, 1.0),
            Err(CaseError::SlotOutOfRange { t: 2, max: 1 })
        ));
        assert!(matches!(
            storage_energy(&s, &[0.0], &[0.0], 0, 1.0),
            Err(CaseError::SlotOutOfRange { .. })
        ));
    }

    #[test]
    fn storage_energy_matches_one_step_recursion() {
        // Closed form equals the recursion s(t) = (1-ε)s(t-1) + (ηᶜpᶜ - pᵈ/ηᵈ)Δt.
        let mut s = test_storage();
        s.eta_c = 0.85;
        s.eta_d = 0.92;
        s.self_discharge = 0.03;
        s.energy_initial = 7.0;
        let charge = [1.0, 0.5, 0.0, 2.5, 0.3];
        let discharge = [0.0, 1.5, 2.0, 0.0, 0.7];
        let dt = 0.5;
        let mut rec = s.energy_initial;
        for t in 1..=5 {
            rec = (1.0 - s.self_discharge) * rec
                + (s.eta_c * charge[t - 1] - discharge[t - 1] / s.eta_d) * dt;
            let closed = storage_energy(&s, &charge, &discharge, t, dt).unwrap();
            assert!((rec - closed).abs() < 1e-12, "slot {t}");
        }
    }
}
