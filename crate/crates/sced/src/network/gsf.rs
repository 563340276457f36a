//! Generation shift factors (DC power-transfer distribution factors).
//!
//! The shift factor of line j to bus i is the DC sensitivity of the flow on
//! j to one MW injected at i and withdrawn at the reference bus. Factors are
//! computed from line reactances by factoring the reduced nodal susceptance
//! matrix once and back-solving one right-hand side per line.

use super::{BusId, LineId, NetworkCase};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GsfError {
    #[error("network is not connected; shift factors are undefined")]
    Disconnected,
    #[error("reduced susceptance matrix is singular")]
    SingularSusceptance,
    #[error("unknown reference bus `{0}`")]
    UnknownReferenceBus(BusId),
}

/// Dense matrix of shift factors, one row per line and one column per bus.
/// The reference-bus column is identically zero.
#[derive(Debug, Clone)]
pub struct GsfMatrix {
    /// lines × buses sensitivities, ordered as in the originating case.
    matrix: DMatrix<f64>,
    line_index: BTreeMap<LineId, usize>,
    bus_index: BTreeMap<BusId, usize>,
    reference_bus: BusId,
}

impl GsfMatrix {
    /// Sensitivity of `line` flow to injection at `bus` (withdrawn at the
    /// reference bus). Zero for unknown ids.
    pub fn entry(&self, line: &LineId, bus: &BusId) -> f64 {
        match (self.line_index.get(line), self.bus_index.get(bus)) {
            (Some(&j), Some(&i)) => self.matrix[(j, i)],
            _ => 0.0,
        }
    }

    /// Sensitivity row by dense indices (line row, bus column, case order).
    pub fn entry_by_index(&self, line: usize, bus: usize) -> f64 {
        self.matrix[(line, bus)]
    }

    pub fn reference_bus(&self) -> &BusId {
        &self.reference_bus
    }

    pub fn num_lines(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_buses(&self) -> usize {
        self.matrix.ncols()
    }

    /// Line flows from a balanced per-bus injection vector (case bus order).
    pub fn flows(&self, injections: &DVector<f64>) -> DVector<f64> {
        &self.matrix * injections
    }
}

/// Compute DC shift factors for every (line, bus) pair of `case`.
pub fn compute_gsf(case: &NetworkCase) -> Result<GsfMatrix, GsfError> {
    let n = case.buses.len();
    let bus_index: BTreeMap<BusId, usize> = case
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.clone(), i))
        .collect();
    let line_index: BTreeMap<LineId, usize> = case
        .lines
        .iter()
        .enumerate()
        .map(|(j, l)| (l.id.clone(), j))
        .collect();
    let ref_idx = *bus_index
        .get(&case.reference_bus)
        .ok_or_else(|| GsfError::UnknownReferenceBus(case.reference_bus.clone()))?;

    let mut matrix = DMatrix::zeros(case.lines.len(), n);
    if n <= 1 || case.lines.is_empty() {
        if !connected(case, &bus_index) {
            return Err(GsfError::Disconnected);
        }
        return Ok(GsfMatrix {
            matrix,
            line_index,
            bus_index,
            reference_bus: case.reference_bus.clone(),
        });
    }
    if !connected(case, &bus_index) {
        return Err(GsfError::Disconnected);
    }

    // Reduced index: buses excluding the reference, preserving order.
    let reduced: Vec<usize> = (0..n).filter(|&i| i != ref_idx).collect();
    let reduced_pos: BTreeMap<usize, usize> = reduced
        .iter()
        .enumerate()
        .map(|(pos, &i)| (i, pos))
        .collect();

    let mut b_red = DMatrix::zeros(n - 1, n - 1);
    for line in &case.lines {
        let a = bus_index[&line.from_bus];
        let b = bus_index[&line.to_bus];
        let y = 1.0 / line.reactance;
        for &(r, c, v) in &[(a, a, y), (b, b, y), (a, b, -y), (b, a, -y)] {
            if let (Some(&rp), Some(&cp)) = (reduced_pos.get(&r), reduced_pos.get(&c)) {
                b_red[(rp, cp)] += v;
            }
        }
    }

    let lu = b_red.clone().lu();
    for (j, line) in case.lines.iter().enumerate() {
        // Row j of the factor matrix solves Bᵀy = (e_from − e_to)/x over the
        // reduced buses; B is symmetric so the same factorization serves.
        let mut rhs = DVector::zeros(n - 1);
        if let Some(&p) = reduced_pos.get(&bus_index[&line.from_bus]) {
            rhs[p] += 1.0 / line.reactance;
        }
        if let Some(&p) = reduced_pos.get(&bus_index[&line.to_bus]) {
            rhs[p] -= 1.0 / line.reactance;
        }
        let row = lu.solve(&rhs).ok_or(GsfError::SingularSusceptance)?;
        for (pos, &bus) in reduced.iter().enumerate() {
            matrix[(j, bus)] = row[pos];
        }
        // Reference column stays zero.
    }

    Ok(GsfMatrix {
        matrix,
        line_index,
        bus_index,
        reference_bus: case.reference_bus.clone(),
    })
}

fn connected(case: &NetworkCase, bus_index: &BTreeMap<BusId, usize>) -> bool {
    let n = case.buses.len();
    if n <= 1 {
        return true;
    }
    let mut adj = vec![Vec::new(); n];
    for line in &case.lines {
        let a = bus_index[&line.from_bus];
        let b = bus_index[&line.to_bus];
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}
