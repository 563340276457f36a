//! Stationarity and complementarity residuals of a solved problem,
//! decomposed along the tagged multiplier structure.
//!
//! The charge rows check `−f' − α₁ + α₂ − ηᶜ·Γ(t)·Δt + LMP = 0` and the
//! discharge rows `g'(pᵈ) − α₃ + α₄ + Γ(t)·Δt/ηᵈ − LMP = 0`, with
//! `Γ(t) = Σ_{τ≥t} (1−ε)^{τ−t} (β₁(τ) − β₂(τ))` accumulating the forward
//! energy-bound multipliers. Generator rows check the generic stationarity
//! including bound and ramp multipliers. All prices are per-hour, matching
//! the extraction convention of [`solve_qp`](crate::solver::solve_qp).

use crate::exactness::lmp_value;
use crate::formulation::{MultiplierTag, QpProblem, VarKind};
use crate::network::{GsfMatrix, NetworkCase, StorageId};
use crate::solver::Solution;
use nalgebra::DVector;
use serde::Serialize;
use std::collections::BTreeMap;

/// Residual report from [`kkt_residual`]. All entries are absolute values;
/// a clean optimal solution keeps every field at or below 1e-6.
#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    /// Max residual over charge stationarity rows.
    pub max_stationarity_charge: f64,
    /// Max residual over discharge stationarity rows.
    pub max_stationarity_discharge: f64,
    /// Max residual over generator stationarity rows.
    pub max_stationarity_generation: f64,
    /// Max |dual·slack| / (1 + |rhs|) over inequality rows.
    pub max_complementary_slackness: f64,
    /// Forward-accumulated energy-bound multiplier sum per (storage, slot).
    pub gamma: BTreeMap<(StorageId, usize), f64>,
}

impl KktReport {
    /// Largest residual across all categories.
    pub fn max_overall(&self) -> f64 {
        self.max_stationarity_charge
            .max(self.max_stationarity_discharge)
            .max(self.max_stationarity_generation)
            .max(self.max_complementary_slackness)
    }
}

/// Evaluate stationarity and complementary-slackness residuals of
/// `solution` on `problem`. Purely diagnostic; meaningful for optimal
/// solutions.
pub fn kkt_residual(
    problem: &QpProblem,
    solution: &Solution,
    case: &NetworkCase,
    gsf: &GsfMatrix,
) -> KktReport {
    let t_max = case.horizon_t;
    let dt = case.delta_t;

    // Γ(t) per storage, from the (per-hour) energy-bound duals.
    let mut gamma = BTreeMap::new();
    for s in &case.storages {
        let keep = 1.0 - s.self_discharge;
        // Backward recursion: Γ(t) = (β₁(t) − β₂(t)) + (1−ε)·Γ(t+1).
        let mut acc = 0.0;
        let mut per_t = vec![0.0; t_max];
        for (idx, slot) in per_t.iter_mut().enumerate().rev() {
            let t = idx + 1;
            let b1 = solution.dual(&MultiplierTag::EnergyLower {
                storage: s.id.clone(),
                t,
            });
            let b2 = solution.dual(&MultiplierTag::EnergyUpper {
                storage: s.id.clone(),
                t,
            });
            acc = (b1 - b2) + keep * acc;
            *slot = acc;
        }
        for (idx, &value) in per_t.iter().enumerate() {
            gamma.insert((s.id.clone(), idx + 1), value);
        }
    }

    let mut max_charge = 0.0f64;
    let mut max_discharge = 0.0f64;
    for s in &case.storages {
        for t in 1..=t_max {
            let g = gamma[&(s.id.clone(), t)];
            let lmp = lmp_value(solution, gsf, &s.bus, t);
            if problem
                .var_index
                .index_of(VarKind::Charge, s.id.as_str(), t)
                .is_some()
            {
                let a1 = solution.dual(&MultiplierTag::ChargeLower {
                    storage: s.id.clone(),
                    t,
                });
                let a2 = solution.dual(&MultiplierTag::ChargeUpper {
                    storage: s.id.clone(),
                    t,
                });
                let fix = solution.dual(&MultiplierTag::ModeDischarge {
                    storage: s.id.clone(),
                    t,
                });
                let r = -s.charge_fee_rate - a1 + a2 - s.eta_c * g * dt + lmp - fix;
                max_charge = max_charge.max(r.abs());
            }
            if problem
                .var_index
                .index_of(VarKind::Discharge, s.id.as_str(), t)
                .is_some()
            {
                let a3 = solution.dual(&MultiplierTag::DischargeLower {
                    storage: s.id.clone(),
                    t,
                });
                let a4 = solution.dual(&MultiplierTag::DischargeUpper {
                    storage: s.id.clone(),
                    t,
                });
                let fix = solution.dual(&MultiplierTag::ModeCharge {
                    storage: s.id.clone(),
                    t,
                });
                let pd = solution.primal.discharge_at(&s.id, t);
                let r = s.discharge_marginal(pd) - a3 + a4 + g * dt / s.eta_d - lmp - fix;
                max_discharge = max_discharge.max(r.abs());
            }
        }
    }

    // Generator stationarity: marginal cost plus bound and ramp multipliers
    // against the local price.
    let mut max_gen = 0.0f64;
    for gen in &case.generators {
        for t in 1..=t_max {
            let pg = solution.primal.generation_at(&gen.id, t);
            let lo = solution.dual(&MultiplierTag::GenLower {
                generator: gen.id.clone(),
                t,
            });
            let up = solution.dual(&MultiplierTag::GenUpper {
                generator: gen.id.clone(),
                t,
            });
            let mut r = gen.marginal_cost(pg) - lo + up - lmp_value(solution, gsf, &gen.bus, t);
            if t < t_max {
                r += -solution.dual(&MultiplierTag::RampUpper {
                    generator: gen.id.clone(),
                    t,
                }) + solution.dual(&MultiplierTag::RampLower {
                    generator: gen.id.clone(),
                    t,
                });
            }
            if t > 1 {
                r += solution.dual(&MultiplierTag::RampUpper {
                    generator: gen.id.clone(),
                    t: t - 1,
                }) - solution.dual(&MultiplierTag::RampLower {
                    generator: gen.id.clone(),
                    t: t - 1,
                });
            }
            max_gen = max_gen.max(r.abs());
        }
    }

    let x = DVector::from_column_slice(&solution.raw_x);
    let mut max_cs = 0.0f64;
    for cons in &problem.ineq_constraints {
        let slack = cons.rhs - cons.row.dot(&x);
        let dual = solution.dual(&cons.tag);
        max_cs = max_cs.max((dual * slack).abs() / (1.0 + cons.rhs.abs()));
    }

    KktReport {
        max_stationarity_charge: max_charge,
        max_stationarity_discharge: max_discharge,
        max_stationarity_generation: max_gen,
        max_complementary_slackness: max_cs,
        gamma,
    }
}
