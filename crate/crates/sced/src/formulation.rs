//! Assembly of the relaxed dispatch problem (and mode-restricted variants)
//! as a standard-form convex QP.
//!
//! The decision variables are storage charging power, storage discharging
//! power and generator output per (unit, slot). The objective is
//! `xᵀQx + cᵀx + k`; per-hour cost coefficients are multiplied by the slot
//! length at build time so the optimum is invariant to re-slicing a constant
//! schedule. Every constraint row carries a [`MultiplierTag`] identifying
//! its multiplier, which is how dual values are addressed downstream.
//!
//! The complementarity restriction (no simultaneous charge and discharge)
//! is deliberately absent: that is the relaxation. Mode-restricted variants
//! reintroduce it either by structural variable elimination
//! ([`build_restricted`]) or by explicit zero equalities
//! ([`build_mode_restricted`]).

use crate::network::{GsfMatrix, NetworkCase, StorageId};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error("infeasible bounds at `{path}`: {message}")]
    InfeasibleBounds { path: String, message: String },
    #[error("mode map missing entry for storage `{storage}` slot {t}")]
    IncompleteModeMap { storage: StorageId, t: usize },
    #[error("mode map entry ({storage}, {t}) does not match the case")]
    UnknownModeKey { storage: StorageId, t: usize },
    #[error("shift-factor matrix shape does not match the case")]
    MismatchedGsf,
    #[error("vector has {got} entries, problem has {expected} variables")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Kind of a decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum VarKind {
    Charge,
    Discharge,
    Generation,
}

/// One decision variable: kind, owning unit id and 1-based slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarEntry {
    pub kind: VarKind,
    pub unit: String,
    pub t: usize,
}

/// Total bijection between flat variable indices and (kind, unit, slot).
#[derive(Debug, Clone, Default)]
pub struct VariableIndex {
    entries: Vec<VarEntry>,
    lookup: HashMap<(VarKind, String, usize), usize>,
}

impl VariableIndex {
    fn push(&mut self, kind: VarKind, unit: &str, t: usize) -> usize {
        let idx = self.entries.len();
        self.entries.push(VarEntry {
            kind,
            unit: unit.to_owned(),
            t,
        });
        self.lookup.insert((kind, unit.to_owned(), t), idx);
        idx
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, index: usize) -> &VarEntry {
        &self.entries[index]
    }

    pub fn entries(&self) -> &[VarEntry] {
        &self.entries
    }

    /// Flat index of a variable, if it exists in this problem (a variable
    /// eliminated by mode fixing has no index).
    pub fn index_of(&self, kind: VarKind, unit: &str, t: usize) -> Option<usize> {
        self.lookup.get(&(kind, unit.to_owned(), t)).copied()
    }
}

/// Identity of a constraint row's multiplier.
///
/// The charge/discharge bound (α), energy bound (β), balance (λ) and line
/// flow (μ) families mirror the formulation's annotated multipliers; the
/// generator-bound, ramp and mode-fixing rows have no named multiplier in
/// the formulation and are carried for diagnostics only.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum MultiplierTag {
    /// α₁: charge power ≥ 0.
    ChargeLower { storage: StorageId, t: usize },
    /// α₂: charge power ≤ cap.
    ChargeUpper { storage: StorageId, t: usize },
    /// α₃: discharge power ≥ 0.
    DischargeLower { storage: StorageId, t: usize },
    /// α₄: discharge power ≤ cap.
    DischargeUpper { storage: StorageId, t: usize },
    /// β₁: stored energy ≥ floor.
    EnergyLower { storage: StorageId, t: usize },
    /// β₂: stored energy ≤ cap.
    EnergyUpper { storage: StorageId, t: usize },
    /// λ: system power balance (equality).
    Balance { t: usize },
    /// μ₁: line flow ≥ lower limit.
    FlowLower {
        line: crate::network::LineId,
        t: usize,
    },
    /// μ₂: line flow ≤ upper limit.
    FlowUpper {
        line: crate::network::LineId,
        t: usize,
    },
    GenLower {
        generator: crate::network::GeneratorId,
        t: usize,
    },
    GenUpper {
        generator: crate::network::GeneratorId,
        t: usize,
    },
    /// Ramp-rate floor between slots t and t+1.
    RampLower {
        generator: crate::network::GeneratorId,
        t: usize,
    },
    RampUpper {
        generator: crate::network::GeneratorId,
        t: usize,
    },
    /// Mode fixed to charging: discharge pinned to zero (equality).
    ModeCharge { storage: StorageId, t: usize },
    /// Mode fixed to discharging: charge pinned to zero (equality).
    ModeDischarge { storage: StorageId, t: usize },
}

impl MultiplierTag {
    /// Short multiplier family name.
    pub fn family(&self) -> &'static str {
        use MultiplierTag::*;
        match self {
            ChargeLower { .. } => "alpha1",
            ChargeUpper { .. } => "alpha2",
            DischargeLower { .. } => "alpha3",
            DischargeUpper { .. } => "alpha4",
            EnergyLower { .. } => "beta1",
            EnergyUpper { .. } => "beta2",
            Balance { .. } => "lambda",
            FlowLower { .. } => "mu1",
            FlowUpper { .. } => "mu2",
            GenLower { .. } => "gen_lo",
            GenUpper { .. } => "gen_up",
            RampLower { .. } => "ramp_lo",
            RampUpper { .. } => "ramp_up",
            ModeCharge { .. } => "fix_c",
            ModeDischarge { .. } => "fix_d",
        }
    }

    /// True for the named multiplier families α, β, λ, μ.
    pub fn is_named(&self) -> bool {
        !matches!(
            self,
            MultiplierTag::GenLower { .. }
                | MultiplierTag::GenUpper { .. }
                | MultiplierTag::RampLower { .. }
                | MultiplierTag::RampUpper { .. }
                | MultiplierTag::ModeCharge { .. }
                | MultiplierTag::ModeDischarge { .. }
        )
    }
}

impl fmt::Display for MultiplierTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use MultiplierTag::*;
        match self {
            ChargeLower { storage, t }
            | ChargeUpper { storage, t }
            | DischargeLower { storage, t }
            | DischargeUpper { storage, t }
            | EnergyLower { storage, t }
            | EnergyUpper { storage, t }
            | ModeCharge { storage, t }
            | ModeDischarge { storage, t } => {
                write!(f, "{}[{storage},t{t}]", self.family())
            }
            Balance { t } => write!(f, "lambda[t{t}]"),
            FlowLower { line, t } | FlowUpper { line, t } => {
                write!(f, "{}[{line},t{t}]", self.family())
            }
            GenLower { generator, t }
            | GenUpper { generator, t }
            | RampLower { generator, t }
            | RampUpper { generator, t } => {
                write!(f, "{}[{generator},t{t}]", self.family())
            }
        }
    }
}

/// Sparse constraint row with strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn dot(&self, x: &DVector<f64>) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| v * x[i])
            .sum()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// Row builder that merges duplicate indices and drops exact zeros.
#[derive(Default)]
struct RowBuilder {
    coeffs: BTreeMap<usize, f64>,
}

impl RowBuilder {
    fn add(&mut self, index: Option<usize>, value: f64) {
        if let Some(i) = index {
            if value != 0.0 {
                *self.coeffs.entry(i).or_insert(0.0) += value;
            }
        }
    }

    fn finish(self) -> SparseRow {
        let mut indices = Vec::with_capacity(self.coeffs.len());
        let mut values = Vec::with_capacity(self.coeffs.len());
        for (i, v) in self.coeffs {
            if v != 0.0 {
                indices.push(i);
                values.push(v);
            }
        }
        SparseRow { indices, values }
    }
}

/// A tagged constraint `row·x ≤ rhs` (inequality list) or `row·x = rhs`
/// (equality list).
#[derive(Debug, Clone)]
pub struct Constraint {
    pub row: SparseRow,
    pub rhs: f64,
    pub tag: MultiplierTag,
}

/// Charge/discharge mode of a storage in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    Charge,
    Discharge,
}

/// Assignment of modes to (storage, slot) pairs; may be partial.
pub type ModeMap = BTreeMap<(StorageId, usize), Mode>;

/// Convex QP in standard form: minimize `xᵀQx + cᵀx + k` subject to the
/// tagged equality and inequality rows.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub num_vars: usize,
    /// Symmetric positive-semidefinite Q.
    pub objective_quadratic: DMatrix<f64>,
    pub objective_linear: DVector<f64>,
    pub objective_constant: f64,
    pub eq_constraints: Vec<Constraint>,
    /// Each row means `row·x ≤ rhs`.
    pub ineq_constraints: Vec<Constraint>,
    pub var_index: VariableIndex,
    /// Slot length the cost coefficients were scaled by; extracted duals are
    /// divided by this so multipliers come out in per-hour units. 1.0 for
    /// hand-built problems.
    pub delta_t: f64,
}

impl QpProblem {
    /// Objective `xᵀQx + cᵀx + k` at the point `x`.
    pub fn objective_value(&self, x: &[f64]) -> Result<f64, FormulationError> {
        if x.len() != self.num_vars {
            return Err(FormulationError::DimensionMismatch {
                expected: self.num_vars,
                got: x.len(),
            });
        }
        let xv = DVector::from_column_slice(x);
        Ok((xv.transpose() * &self.objective_quadratic * &xv)[(0, 0)]
            + self.objective_linear.dot(&xv)
            + self.objective_constant)
    }

    /// Check structural invariants: symmetric PSD objective (smallest
    /// eigenvalue ≥ −1e-10) and in-range constraint indices. Intended for
    /// desk-scale problems and tests.
    pub fn validate(&self) -> Result<(), String> {
        let q = &self.objective_quadratic;
        if q.nrows() != self.num_vars || q.ncols() != self.num_vars {
            return Err("objective_quadratic shape mismatch".into());
        }
        for i in 0..q.nrows() {
            for j in (i + 1)..q.ncols() {
                if (q[(i, j)] - q[(j, i)]).abs() > 1e-12 {
                    return Err(format!("objective_quadratic not symmetric at ({i},{j})"));
                }
            }
        }
        if q.nrows() > 0 {
            let min_eig = q
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b));
            if min_eig < -1e-10 {
                return Err(format!(
                    "objective_quadratic not PSD: min eigenvalue {min_eig}"
                ));
            }
        }
        for c in self.eq_constraints.iter().chain(&self.ineq_constraints) {
            if c.row.indices.iter().any(|&i| i >= self.num_vars) {
                return Err(format!("row {} references an out-of-range variable", c.tag));
            }
        }
        Ok(())
    }

    /// Plain-text dump in an LP-like syntax for debugging.
    pub fn to_lp_string(&self) -> String {
        use std::fmt::Write;
        let name = |i: usize| {
            let e = self.var_index.entry(i);
            let k = match e.kind {
                VarKind::Charge => "pc",
                VarKind::Discharge => "pd",
                VarKind::Generation => "pg",
            };
            format!("{k}[{},{}]", e.unit, e.t)
        };
        let mut out = String::from("minimize:");
        for i in 0..self.num_vars {
            let q = self.objective_quadratic[(i, i)];
            if q != 0.0 {
                write!(out, " {q:+} {}^2", name(i)).unwrap();
            }
            let c = self.objective_linear[i];
            if c != 0.0 {
                write!(out, " {c:+} {}", name(i)).unwrap();
            }
        }
        if self.objective_constant != 0.0 {
            write!(out, " {:+}", self.objective_constant).unwrap();
        }
        out.push_str("\nsubject to:\n");
        for (cons, op) in self
            .eq_constraints
            .iter()
            .map(|c| (c, "="))
            .chain(self.ineq_constraints.iter().map(|c| (c, "<=")))
        {
            write!(out, "  {}:", cons.tag).unwrap();
            for (&i, &v) in cons.row.indices.iter().zip(&cons.row.values) {
                write!(out, " {v:+} {}", name(i)).unwrap();
            }
            writeln!(out, " {op} {}", cons.rhs).unwrap();
        }
        out
    }

    /// Count of rows carrying named multiplier tags (α, β, λ, μ families).
    pub fn named_tag_count(&self) -> usize {
        self.eq_constraints
            .iter()
            .chain(&self.ineq_constraints)
            .filter(|c| c.tag.is_named())
            .count()
    }
}

/// Build the convex relaxation: bounds, energy limits, ramps, balance and
/// line limits, with no complementarity coupling between charge and
/// discharge.
pub fn build_rp(case: &NetworkCase, gsf: &GsfMatrix) -> Result<QpProblem, FormulationError> {
    build_restricted(case, gsf, &ModeMap::new())
}

/// Build the relaxation with the mode fixed on a subset of (storage, slot)
/// pairs by structural elimination: the opposite variable is removed from
/// the problem rather than pinned by an equality row.
pub fn build_restricted(
    case: &NetworkCase,
    gsf: &GsfMatrix,
    fixed: &ModeMap,
) -> Result<QpProblem, FormulationError> {
    check_build_inputs(case, gsf)?;
    for (storage, t) in fixed.keys() {
        let known = case.storage(storage).is_some() && *t >= 1 && *t <= case.horizon_t;
        if !known {
            return Err(FormulationError::UnknownModeKey {
                storage: storage.clone(),
                t: *t,
            });
        }
    }

    let t_max = case.horizon_t;
    let dt = case.delta_t;
    let mut index = VariableIndex::default();
    for s in &case.storages {
        for t in 1..=t_max {
            if fixed.get(&(s.id.clone(), t)) != Some(&Mode::Discharge) {
                index.push(VarKind::Charge, s.id.as_str(), t);
            }
        }
    }
    for s in &case.storages {
        for t in 1..=t_max {
            if fixed.get(&(s.id.clone(), t)) != Some(&Mode::Charge) {
                index.push(VarKind::Discharge, s.id.as_str(), t);
            }
        }
    }
    for g in &case.generators {
        for t in 1..=t_max {
            index.push(VarKind::Generation, g.id.as_str(), t);
        }
    }
    let n = index.len();

    let mut q = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    let mut constant = 0.0;
    for s in &case.storages {
        for t in 1..=t_max {
            if let Some(i) = index.index_of(VarKind::Charge, s.id.as_str(), t) {
                c[i] = -dt * s.charge_fee_rate;
            }
            if let Some(i) = index.index_of(VarKind::Discharge, s.id.as_str(), t) {
                q[(i, i)] = dt * s.discharge_cost_quadratic;
                c[i] = dt * s.discharge_cost_linear;
            }
        }
    }
    for g in &case.generators {
        for t in 1..=t_max {
            let i = index
                .index_of(VarKind::Generation, g.id.as_str(), t)
                .expect("generation variables are never eliminated");
            q[(i, i)] = dt * g.cost_quadratic;
            c[i] = dt * g.cost_linear;
            constant += dt * g.cost_constant;
        }
    }

    let mut ineq = Vec::new();
    let mut eq = Vec::new();
    let single = |i: usize, v: f64| SparseRow {
        indices: vec![i],
        values: vec![v],
    };

    // Charge/discharge power bounds.
    for s in &case.storages {
        for t in 1..=t_max {
            if let Some(i) = index.index_of(VarKind::Charge, s.id.as_str(), t) {
                ineq.push(Constraint {
                    row: single(i, -1.0),
                    rhs: 0.0,
                    tag: MultiplierTag::ChargeLower {
                        storage: s.id.clone(),
                        t,
                    },
                });
                ineq.push(Constraint {
                    row: single(i, 1.0),
                    rhs: s.charge_max,
                    tag: MultiplierTag::ChargeUpper {
                        storage: s.id.clone(),
                        t,
                    },
                });
            }
            if let Some(i) = index.index_of(VarKind::Discharge, s.id.as_str(), t) {
                ineq.push(Constraint {
                    row: single(i, -1.0),
                    rhs: 0.0,
                    tag: MultiplierTag::DischargeLower {
                        storage: s.id.clone(),
                        t,
                    },
                });
                ineq.push(Constraint {
                    row: single(i, 1.0),
                    rhs: s.discharge_max,
                    tag: MultiplierTag::DischargeUpper {
                        storage: s.id.clone(),
                        t,
                    },
                });
            }
        }
    }

    // Stored-energy bounds with the energy state expanded into the charge
    // and discharge variables up to each slot (no state variables).
    for s in &case.storages {
        let keep = 1.0 - s.self_discharge;
        for t in 1..=t_max {
            let carried = keep.powi(t as i32) * s.energy_initial;
            let mut upper = RowBuilder::default();
            let mut lower = RowBuilder::default();
            for tau in 1..=t {
                let decay = keep.powi((t - tau) as i32) * dt;
                let ci = index.index_of(VarKind::Charge, s.id.as_str(), tau);
                let di = index.index_of(VarKind::Discharge, s.id.as_str(), tau);
                upper.add(ci, s.eta_c * decay);
                upper.add(di, -decay / s.eta_d);
                lower.add(ci, -s.eta_c * decay);
                lower.add(di, decay / s.eta_d);
            }
            ineq.push(Constraint {
                row: lower.finish(),
                rhs: carried - s.energy_min,
                tag: MultiplierTag::EnergyLower {
                    storage: s.id.clone(),
                    t,
                },
            });
            ineq.push(Constraint {
                row: upper.finish(),
                rhs: s.energy_max - carried,
                tag: MultiplierTag::EnergyUpper {
                    storage: s.id.clone(),
                    t,
                },
            });
        }
    }

    // Generator output bounds and ramp limits.
    for g in &case.generators {
        for t in 1..=t_max {
            let i = index
                .index_of(VarKind::Generation, g.id.as_str(), t)
                .unwrap();
            ineq.push(Constraint {
                row: single(i, -1.0),
                rhs: -g.p_min,
                tag: MultiplierTag::GenLower {
                    generator: g.id.clone(),
                    t,
                },
            });
            ineq.push(Constraint {
                row: single(i, 1.0),
                rhs: g.p_max,
                tag: MultiplierTag::GenUpper {
                    generator: g.id.clone(),
                    t,
                },
            });
        }
        for t in 1..t_max {
            let a = index
                .index_of(VarKind::Generation, g.id.as_str(), t)
                .unwrap();
            let b = index
                .index_of(VarKind::Generation, g.id.as_str(), t + 1)
                .unwrap();
            ineq.push(Constraint {
                row: SparseRow {
                    indices: vec![a.min(b), a.max(b)],
                    values: if a < b {
                        vec![-1.0, 1.0]
                    } else {
                        vec![1.0, -1.0]
                    },
                },
                rhs: g.ramp_up_rate * dt,
                tag: MultiplierTag::RampUpper {
                    generator: g.id.clone(),
                    t,
                },
            });
            ineq.push(Constraint {
                row: SparseRow {
                    indices: vec![a.min(b), a.max(b)],
                    values: if a < b {
                        vec![1.0, -1.0]
                    } else {
                        vec![-1.0, 1.0]
                    },
                },
                rhs: -g.ramp_down_rate * dt,
                tag: MultiplierTag::RampLower {
                    generator: g.id.clone(),
                    t,
                },
            });
        }
    }

    // System balance and line flow limits per slot.
    for t in 1..=t_max {
        let mut balance = RowBuilder::default();
        for s in &case.storages {
            balance.add(index.index_of(VarKind::Charge, s.id.as_str(), t), -1.0);
            balance.add(index.index_of(VarKind::Discharge, s.id.as_str(), t), 1.0);
        }
        for g in &case.generators {
            balance.add(index.index_of(VarKind::Generation, g.id.as_str(), t), 1.0);
        }
        eq.push(Constraint {
            row: balance.finish(),
            rhs: case.demand.total(t),
            tag: MultiplierTag::Balance { t },
        });

        for line in &case.lines {
            let mut flow = RowBuilder::default();
            for s in &case.storages {
                let factor = gsf.entry(&line.id, &s.bus);
                flow.add(index.index_of(VarKind::Charge, s.id.as_str(), t), -factor);
                flow.add(index.index_of(VarKind::Discharge, s.id.as_str(), t), factor);
            }
            for g in &case.generators {
                let factor = gsf.entry(&line.id, &g.bus);
                flow.add(
                    index.index_of(VarKind::Generation, g.id.as_str(), t),
                    factor,
                );
            }
            let fixed_withdrawal: f64 = case
                .buses
                .iter()
                .map(|bus| gsf.entry(&line.id, bus) * case.demand.at(bus, t))
                .sum();
            let row = flow.finish();
            ineq.push(Constraint {
                row: SparseRow {
                    indices: row.indices.clone(),
                    values: row.values.iter().map(|v| -v).collect(),
                },
                rhs: -line.flow_min - fixed_withdrawal,
                tag: MultiplierTag::FlowLower {
                    line: line.id.clone(),
                    t,
                },
            });
            ineq.push(Constraint {
                row,
                rhs: line.flow_max + fixed_withdrawal,
                tag: MultiplierTag::FlowUpper {
                    line: line.id.clone(),
                    t,
                },
            });
        }
    }

    Ok(QpProblem {
        num_vars: n,
        objective_quadratic: q,
        objective_linear: c,
        objective_constant: constant,
        eq_constraints: eq,
        ineq_constraints: ineq,
        var_index: index,
        delta_t: dt,
    })
}

/// Build the relaxation plus one zero equality per (storage, slot): the
/// discharge variable where the mode is `Charge`, the charge variable where
/// it is `Discharge`. The map must cover every pair; the feasible set is a
/// subset of the original non-convex feasible region.
pub fn build_mode_restricted(
    case: &NetworkCase,
    gsf: &GsfMatrix,
    modes: &ModeMap,
) -> Result<QpProblem, FormulationError> {
    for (storage, t) in modes.keys() {
        if case.storage(storage).is_none() || *t < 1 || *t > case.horizon_t {
            return Err(FormulationError::UnknownModeKey {
                storage: storage.clone(),
                t: *t,
            });
        }
    }
    for s in &case.storages {
        for t in 1..=case.horizon_t {
            if !modes.contains_key(&(s.id.clone(), t)) {
                return Err(FormulationError::IncompleteModeMap {
                    storage: s.id.clone(),
                    t,
                });
            }
        }
    }
    let mut problem = build_rp(case, gsf)?;
    for ((storage, t), mode) in modes {
        let (kind, tag) = match mode {
            Mode::Charge => (
                VarKind::Discharge,
                MultiplierTag::ModeCharge {
                    storage: storage.clone(),
                    t: *t,
                },
            ),
            Mode::Discharge => (
                VarKind::Charge,
                MultiplierTag::ModeDischarge {
                    storage: storage.clone(),
                    t: *t,
                },
            ),
        };
        let i = problem
            .var_index
            .index_of(kind, storage.as_str(), *t)
            .expect("full relaxation indexes every variable");
        problem.eq_constraints.push(Constraint {
            row: SparseRow {
                indices: vec![i],
                values: vec![1.0],
            },
            rhs: 0.0,
            tag,
        });
    }
    Ok(problem)
}

fn check_build_inputs(case: &NetworkCase, gsf: &GsfMatrix) -> Result<(), FormulationError> {
    if gsf.num_lines() != case.lines.len() || gsf.num_buses() != case.buses.len() {
        return Err(FormulationError::MismatchedGsf);
    }
    for (i, g) in case.generators.iter().enumerate() {
        if g.p_min > g.p_max {
            return Err(FormulationError::InfeasibleBounds {
                path: format!("generators[{i}].p_min"),
                message: format!("p_min {} exceeds p_max {}", g.p_min, g.p_max),
            });
        }
    }
    for (i, s) in case.storages.iter().enumerate() {
        if s.energy_min > s.energy_max {
            return Err(FormulationError::InfeasibleBounds {
                path: format!("storages[{i}].energy_min"),
                message: format!(
                    "energy_min {} exceeds energy_max {}",
                    s.energy_min, s.energy_max
                ),
            });
        }
        if s.charge_max < 0.0 || s.discharge_max < 0.0 {
            return Err(FormulationError::InfeasibleBounds {
                path: format!("storages[{i}].charge_max"),
                message: "power caps must be non-negative".into(),
            });
        }
    }
    for (i, l) in case.lines.iter().enumerate() {
        if l.flow_min > l.flow_max {
            return Err(FormulationError::InfeasibleBounds {
                path: format!("lines[{i}].flow_min"),
                message: format!("flow_min {} exceeds flow_max {}", l.flow_min, l.flow_max),
            });
        }
    }
    Ok(())
}
