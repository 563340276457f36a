//! A-priori exactness checking from forecasted prices.
//!
//! Before solving anything, forecast LMPs are checked against the price
//! bound; where they fail, a bang-bang simulation estimates the maximal
//! energy capacity the storage would need: charge at full rate when the
//! price sits below the charging fee, discharge as hard as the energy floor
//! allows when it sits above the discharging compensation, idle in between
//! (self-discharge still applies). A storage whose cap strictly exceeds the
//! simulated peak keeps the relaxation exact despite the price violations.
//!
//! Conservative evaluation points: the discharge marginal is taken at zero
//! output (its minimum), which makes the price bound as large — and the
//! check as strict — as possible.

use crate::exactness::cond1_bound;
use crate::network::{BusId, NetworkCase, StorageId};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

const STRICTNESS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("forecast does not cover bus `{bus}` at slot {t}")]
    IncompleteForecast { bus: BusId, t: usize },
    #[error("forecast CSV `{path}`: {message}")]
    Csv { path: String, message: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Forecasted prices per (bus, slot), $/MWh.
#[derive(Debug, Clone, Serialize)]
pub struct LmpForecast {
    pub values: BTreeMap<(BusId, usize), f64>,
    /// Free-text provenance label.
    pub source: String,
}

impl LmpForecast {
    pub fn new(values: BTreeMap<(BusId, usize), f64>, source: impl Into<String>) -> Self {
        Self {
            values,
            source: source.into(),
        }
    }

    /// Same value for every bus of `case` at every slot.
    pub fn uniform(case: &NetworkCase, value: f64, source: impl Into<String>) -> Self {
        let mut values = BTreeMap::new();
        for bus in &case.buses {
            for t in 1..=case.horizon_t {
                values.insert((bus.clone(), t), value);
            }
        }
        Self::new(values, source)
    }

    /// Read a `bus,t1,...,tT` CSV of forecast prices.
    pub fn from_csv_path(path: impl AsRef<Path>, horizon_t: usize) -> Result<Self, PlannerError> {
        let path = path.as_ref();
        let csv_err = |message: String| PlannerError::Csv {
            path: path.display().to_string(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_err(e.to_string()))?;
        let headers = reader.headers().map_err(|e| csv_err(e.to_string()))?;
        if headers.len() != horizon_t + 1 || headers.get(0) != Some("bus") {
            return Err(csv_err(format!(
                "expected header `bus,t1,...,t{horizon_t}`, found {} columns",
                headers.len()
            )));
        }
        let mut values = BTreeMap::new();
        for (row_idx, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_err(e.to_string()))?;
            let bus = BusId::new(
                record
                    .get(0)
                    .ok_or_else(|| csv_err(format!("row {}: missing bus id", row_idx + 2)))?,
            );
            for t in 1..=horizon_t {
                let cell = record
                    .get(t)
                    .ok_or_else(|| csv_err(format!("row {}: missing value t{t}", row_idx + 2)))?;
                let value: f64 = cell.parse().map_err(|_| {
                    csv_err(format!("row {}: `{cell}` is not a number", row_idx + 2))
                })?;
                values.insert((bus.clone(), t), value);
            }
        }
        Ok(Self::new(values, path.display().to_string()))
    }

    pub fn at(&self, bus: &BusId, t: usize) -> Option<f64> {
        self.values.get(&(bus.clone(), t)).copied()
    }

    /// Every storage bus must be covered for the whole horizon.
    pub fn check_coverage(&self, case: &NetworkCase) -> Result<(), PlannerError> {
        for s in &case.storages {
            for t in 1..=case.horizon_t {
                if self.at(&s.bus, t).is_none() {
                    return Err(PlannerError::IncompleteForecast {
                        bus: s.bus.clone(),
                        t,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Simulated maximal energy need of one storage.
#[derive(Debug, Clone, Serialize)]
pub struct CapacityEstimate {
    pub storage: StorageId,
    /// Peak of the simulated energy trajectory, MWh.
    pub needed_capacity: f64,
    /// Slot at which the peak is attained (0 = initial state).
    pub peak_time: usize,
    /// s(0)..s(T) of the simulation.
    pub trajectory: Vec<f64>,
    /// The storage cap strictly exceeds the estimated need.
    pub sufficient: bool,
}

/// A-priori verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PlanVerdict {
    /// `step` is 1 when the price bound cleared everywhere, 3 when capacity
    /// headroom covered the violations.
    PredictedExact {
        step: u8,
    },
    Unknown,
}

/// Full a-priori report.
#[derive(Debug, Clone, Serialize)]
pub struct PlanReport {
    pub verdict: PlanVerdict,
    /// (storage, slot) pairs where the forecast fails the price bound.
    pub step1_violations: Vec<(StorageId, usize)>,
    /// Per-storage capacity estimates (simulated for every storage).
    pub estimates: Vec<CapacityEstimate>,
    /// Conservative participation check f' < g'(0) over all storages.
    pub participation_ok: bool,
}

/// Simulate the bang-bang policy per storage and return capacity estimates.
///
/// Charging accumulates without a cap clamp: the cap requirement is the
/// unknown being estimated, so the peak of the unclamped trajectory is the
/// answer. Discharging is clamped so the energy floor is never crossed.
pub fn estimate_capacity(
    case: &NetworkCase,
    forecast: &LmpForecast,
) -> Result<Vec<CapacityEstimate>, PlannerError> {
    forecast.check_coverage(case)?;
    let dt = case.delta_t;
    let mut out = Vec::with_capacity(case.storages.len());
    for s in &case.storages {
        let keep = 1.0 - s.self_discharge;
        let g_prime0 = s.discharge_marginal(0.0);
        let mut level = s.energy_initial;
        let mut trajectory = vec![level];
        let mut peak = level;
        let mut peak_time = 0usize;
        for t in 1..=case.horizon_t {
            let lmp = forecast.at(&s.bus, t).expect("coverage checked above");
            let carried = keep * level;
            level = if lmp < s.charge_fee_rate {
                carried + s.eta_c * s.charge_max * dt
            } else if lmp > g_prime0 {
                let discharge = (s.eta_d * (carried - s.energy_min) / dt)
                    .min(s.discharge_max)
                    .max(0.0);
                carried - discharge * dt / s.eta_d
            } else {
                carried
            };
            debug_assert!(
                level >= s.energy_min - 1e-9 || level >= carried - 1e-9,
                "active discharge crossed the energy floor"
            );
            trajectory.push(level);
            if level > peak {
                peak = level;
                peak_time = t;
            }
        }
        let sufficient = s.energy_max - peak > STRICTNESS * (1.0 + s.energy_max);
        out.push(CapacityEstimate {
            storage: s.id.clone(),
            needed_capacity: peak,
            peak_time,
            trajectory,
            sufficient,
        });
    }
    Ok(out)
}

/// Run the a-priori procedure: check the price bound on the forecast, list
/// the violations, and judge whether the storage caps cover the simulated
/// energy need at the violating buses.
pub fn a_priori_check(
    case: &NetworkCase,
    forecast: &LmpForecast,
) -> Result<PlanReport, PlannerError> {
    forecast.check_coverage(case)?;

    let mut violations = Vec::new();
    for s in &case.storages {
        // The bound is largest (strictest) at the smallest discharge
        // marginal, which for convex costs is at zero output.
        let bound = cond1_bound(
            s.charge_fee_rate,
            s.discharge_marginal(0.0),
            s.eta_c,
            s.eta_d,
        )
        .expect("case validation guarantees ηᶜηᵈ < 1");
        for t in 1..=case.horizon_t {
            let lmp = forecast.at(&s.bus, t).expect("coverage checked above");
            if lmp - bound <= STRICTNESS * (1.0 + bound.abs()) {
                violations.push((s.id.clone(), t));
            }
        }
    }

    let participation_ok = case
        .storages
        .iter()
        .all(|s| s.charge_fee_rate < s.discharge_marginal(0.0));

    if violations.is_empty() {
        return Ok(PlanReport {
            verdict: PlanVerdict::PredictedExact { step: 1 },
            step1_violations: violations,
            estimates: estimate_capacity(case, forecast)?,
            participation_ok,
        });
    }

    let estimates = estimate_capacity(case, forecast)?;
    let violating: std::collections::BTreeSet<&StorageId> =
        violations.iter().map(|(sid, _)| sid).collect();
    let covered = violating.iter().all(|sid| {
        estimates
            .iter()
            .find(|e| &&e.storage == sid)
            .is_some_and(|e| e.sufficient)
    });
    let verdict = if covered && participation_ok {
        PlanVerdict::PredictedExact { step: 3 }
    } else {
        PlanVerdict::Unknown
    };
    Ok(PlanReport {
        verdict,
        step1_violations: violations,
        estimates,
        participation_ok,
    })
}
