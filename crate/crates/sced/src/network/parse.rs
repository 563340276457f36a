//! Case document parsing and serialization.
//!
//! A case is a single JSON object with keys `buses`, `reference_bus`,
//! `lines`, `generators`, `storages`, `demand`, `horizon_T` and `delta_t`
//! (plus an optional free-text `description`). Demand is either an inline
//! map `bus → [MW; T]` or a path to a CSV file with header `bus,t1,...,tT`.
//! Units are fixed: MW, MWh, hours; there are no per-file unit overrides.

use super::{BusId, CaseError, DemandGrid, Generator, Line, NetworkCase, Storage};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    #[serde(default)]
    #[allow(dead_code)]
    description: Option<String>,
    buses: Vec<BusId>,
    reference_bus: BusId,
    #[serde(default)]
    lines: Vec<Line>,
    #[serde(default)]
    generators: Vec<Generator>,
    #[serde(default)]
    storages: Vec<Storage>,
    #[serde(default)]
    demand: RawDemand,
    #[serde(rename = "horizon_T")]
    horizon_t: usize,
    delta_t: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawDemand {
    Inline(BTreeMap<BusId, Vec<f64>>),
    CsvPath(String),
}

impl Default for RawDemand {
    fn default() -> Self {
        RawDemand::Inline(BTreeMap::new())
    }
}

/// Parse a case document from text. A CSV demand path, if present, is
/// resolved relative to the current working directory; prefer [`load_case`]
/// for file-based cases.
pub fn parse_case(text: &str) -> Result<NetworkCase, CaseError> {
    parse_with_base(text, Path::new("."))
}

/// Read and parse a case file. CSV demand paths are resolved relative to the
/// case file's directory.
pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_with_base(&text, base)
}

fn parse_with_base(text: &str, base: &Path) -> Result<NetworkCase, CaseError> {
    let raw: RawCase = serde_json::from_str(text).map_err(|e| CaseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let demand = match raw.demand {
        RawDemand::Inline(map) => DemandGrid::new(map),
        RawDemand::CsvPath(rel) => read_demand_csv(&base.join(&rel), raw.horizon_t)?,
    };
    let case = NetworkCase {
        buses: raw.buses,
        reference_bus: raw.reference_bus,
        lines: raw.lines,
        generators: raw.generators,
        storages: raw.storages,
        demand,
        horizon_t: raw.horizon_t,
        delta_t: raw.delta_t,
    };
    case.validate()?;
    Ok(case)
}

/// Serialize a case back to its document form, with demand always inline.
/// `parse_case(serialize_case(c)) == c` for any valid case.
pub fn serialize_case(case: &NetworkCase) -> String {
    serde_json::to_string_pretty(case).expect("case serialization cannot fail")
}

fn read_demand_csv(path: &Path, horizon_t: usize) -> Result<DemandGrid, CaseError> {
    let csv_err = |message: String| CaseError::Csv {
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
    for (i, h) in headers.iter().skip(1).enumerate() {
        if h != format!("t{}", i + 1) {
            return Err(csv_err(format!(
                "column {} named `{h}`, expected `t{}`",
                i + 1,
                i + 1
            )));
        }
    }

    let mut by_bus = BTreeMap::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let bus = BusId::new(
            record
                .get(0)
                .ok_or_else(|| csv_err(format!("row {}: missing bus id", row_idx + 2)))?,
        );
        let mut profile = Vec::with_capacity(horizon_t);
        for t in 1..=horizon_t {
            let cell = record
                .get(t)
                .ok_or_else(|| csv_err(format!("row {}: missing value t{t}", row_idx + 2)))?;
            let value: f64 = cell
                .parse()
                .map_err(|_| csv_err(format!("row {}: `{cell}` is not a number", row_idx + 2)))?;
            profile.push(value);
        }
        if by_bus.insert(bus.clone(), profile).is_some() {
            return Err(csv_err(format!("duplicate row for bus `{bus}`")));
        }
    }
    Ok(DemandGrid::new(by_bus))
}
