//! Convex QP solution with multiplier extraction.
//!
//! [`solve_qp`] runs a primal-dual interior-point method (predictor-corrector
//! with static regularization) and returns both the decoded schedule and a
//! dual value per tagged constraint row.
//!
//! Sign and scaling conventions, fixed so the storage stationarity
//! identities hold with prices in $/MWh:
//! - the Lagrangian is `objective + Σ z·(row·x − rhs)` over inequalities
//!   plus equality terms, with all inequality multipliers ≥ 0;
//! - the balance equality is built as `Σ(pᵍ + pᵈ − pᶜ) − ΣD = 0` and its
//!   multiplier is negated on extraction, so the balance dual is the system
//!   marginal price (the one-bus case with marginal cost 12 yields λ = 12);
//! - every extracted dual is divided by the slot length `Δt` that scaled the
//!   cost coefficients at build time, putting multipliers in per-hour units.

mod ipm;
mod kkt;

pub use kkt::{kkt_residual, KktReport};

use crate::formulation::{MultiplierTag, QpProblem, VarKind};
use crate::network::{GeneratorId, StorageId};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Interior-point solver settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSettings {
    pub feasibility_tol: f64,
    pub duality_gap_tol: f64,
    pub max_iterations: usize,
    pub static_regularization: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-8,
            duality_gap_tol: 1e-8,
            max_iterations: 200,
            static_regularization: 1e-10,
        }
    }
}

impl SolverSettings {
    /// Settings with both tolerances set to `tol`.
    pub fn with_tol(tol: f64) -> Self {
        Self {
            feasibility_tol: tol,
            duality_gap_tol: tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

/// Per-iteration solver progress, renderable as CSV for debugging.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub primal_objective: f64,
    /// Lower bound implied by the current iterate (primal minus gap).
    pub dual_objective: f64,
    pub complementarity_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

/// Write the iteration log as CSV lines (`iteration,objective,gap,...`).
pub fn write_iteration_log_csv<W: std::io::Write>(
    log: &[IterationRecord],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(
        out,
        "iteration,primal_objective,dual_objective,complementarity_gap,primal_infeasibility,dual_infeasibility,step_primal,step_dual"
    )?;
    for r in log {
        writeln!(
            out,
            "{},{:.expo$e},{:.expo$e},{:.expo$e},{:.expo$e},{:.expo$e},{:.4},{:.4}",
            r.iteration,
            r.primal_objective,
            r.dual_objective,
            r.complementarity_gap,
            r.primal_infeasibility,
            r.dual_infeasibility,
            r.step_primal,
            r.step_dual,
            expo = 9,
        )?;
    }
    Ok(())
}

/// Decoded primal schedule keyed by (unit id, 1-based slot). Entries absent
/// from a map (including structurally eliminated variables) are zero.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Schedule {
    pub charge: BTreeMap<(StorageId, usize), f64>,
    pub discharge: BTreeMap<(StorageId, usize), f64>,
    pub generation: BTreeMap<(GeneratorId, usize), f64>,
}

impl Schedule {
    pub fn charge_at(&self, id: &StorageId, t: usize) -> f64 {
        self.charge.get(&(id.clone(), t)).copied().unwrap_or(0.0)
    }

    pub fn discharge_at(&self, id: &StorageId, t: usize) -> f64 {
        self.discharge.get(&(id.clone(), t)).copied().unwrap_or(0.0)
    }

    pub fn generation_at(&self, id: &GeneratorId, t: usize) -> f64 {
        self.generation
            .get(&(id.clone(), t))
            .copied()
            .unwrap_or(0.0)
    }

    /// Charge profile of one storage over slots `1..=t_max`.
    pub fn charge_profile(&self, id: &StorageId, t_max: usize) -> Vec<f64> {
        (1..=t_max).map(|t| self.charge_at(id, t)).collect()
    }

    pub fn discharge_profile(&self, id: &StorageId, t_max: usize) -> Vec<f64> {
        (1..=t_max).map(|t| self.discharge_at(id, t)).collect()
    }
}

/// Primal-dual solution of a [`QpProblem`].
#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolverStatus,
    pub primal: Schedule,
    /// Raw optimizer in the problem's variable order.
    pub raw_x: Vec<f64>,
    /// Multipliers per tagged row, in per-hour units (see module docs).
    pub duals: BTreeMap<MultiplierTag, f64>,
    /// Objective value including the constant term, $ over the horizon.
    pub objective: f64,
    pub iterations: usize,
    /// The Δt the duals were normalized by.
    pub delta_t: f64,
    pub iteration_log: Vec<IterationRecord>,
    /// max |dual·slack| / (1 + |rhs|) over inequality rows.
    pub max_complementary_slackness: f64,
    /// Set when some row has both its dual and its slack within 1e-6 of
    /// zero, indicating a degenerate vertex with non-unique duals.
    pub degenerate_dual: bool,
}

impl Solution {
    /// Dual value for `tag`, zero when the row does not exist.
    pub fn dual(&self, tag: &MultiplierTag) -> f64 {
        self.duals.get(tag).copied().unwrap_or(0.0)
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolverStatus::Optimal
    }
}

/// Solve `problem` to primal-dual optimality.
pub fn solve_qp(problem: &QpProblem, settings: &SolverSettings) -> Solution {
    let input = ipm::IpmInput {
        q: &problem.objective_quadratic,
        c: &problem.objective_linear,
        eq_rows: problem.eq_constraints.iter().map(|c| &c.row).collect(),
        eq_rhs: DVector::from_iterator(
            problem.eq_constraints.len(),
            problem.eq_constraints.iter().map(|c| c.rhs),
        ),
        ineq_rows: problem.ineq_constraints.iter().map(|c| &c.row).collect(),
        ineq_rhs: DVector::from_iterator(
            problem.ineq_constraints.len(),
            problem.ineq_constraints.iter().map(|c| c.rhs),
        ),
    };
    let out = ipm::solve(&input, settings);

    let scale = 1.0 / problem.delta_t;
    let mut duals = BTreeMap::new();
    for (k, cons) in problem.eq_constraints.iter().enumerate() {
        // Equality multipliers are negated so the balance dual is a price.
        duals.insert(cons.tag.clone(), -out.y[k] * scale);
    }
    for (k, cons) in problem.ineq_constraints.iter().enumerate() {
        duals.insert(cons.tag.clone(), out.z[k] * scale);
    }

    let mut schedule = Schedule::default();
    for (i, entry) in problem.var_index.entries().iter().enumerate() {
        let v = out.x[i];
        match entry.kind {
            VarKind::Charge => {
                schedule
                    .charge
                    .insert((StorageId::new(entry.unit.clone()), entry.t), v);
            }
            VarKind::Discharge => {
                schedule
                    .discharge
                    .insert((StorageId::new(entry.unit.clone()), entry.t), v);
            }
            VarKind::Generation => {
                schedule
                    .generation
                    .insert((GeneratorId::new(entry.unit.clone()), entry.t), v);
            }
        }
    }

    let mut max_cs = 0.0f64;
    let mut degenerate = false;
    for (k, cons) in problem.ineq_constraints.iter().enumerate() {
        let slack = cons.rhs - cons.row.dot(&out.x);
        let dual = out.z[k] * scale;
        max_cs = max_cs.max((dual * slack).abs() / (1.0 + cons.rhs.abs()));
        if dual.abs() < 1e-6 && slack.abs() < 1e-6 {
            degenerate = true;
        }
    }

    let objective = problem
        .objective_value(out.x.as_slice())
        .expect("solver output has problem dimension");

    Solution {
        status: out.status,
        primal: schedule,
        raw_x: out.x.as_slice().to_vec(),
        duals,
        objective,
        iterations: out.iterations,
        delta_t: problem.delta_t,
        iteration_log: out.log,
        max_complementary_slackness: max_cs,
        degenerate_dual: degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulation::{Constraint, SparseRow, VariableIndex};
    use crate::network::LineId;
    use nalgebra::DMatrix;

    fn tag_a() -> MultiplierTag {
        MultiplierTag::GenUpper {
            generator: GeneratorId::new("x"),
            t: 1,
        }
    }

    fn tag_b() -> MultiplierTag {
        MultiplierTag::GenLower {
            generator: GeneratorId::new("x"),
            t: 1,
        }
    }

    fn scalar_qp(q: f64, c: f64, k: f64, ineq: Vec<(f64, f64, MultiplierTag)>) -> QpProblem {
        QpProblem {
            num_vars: 1,
            objective_quadratic: DMatrix::from_element(1, 1, q),
            objective_linear: DVector::from_element(1, c),
            objective_constant: k,
            eq_constraints: vec![],
            ineq_constraints: ineq
                .into_iter()
                .map(|(a, rhs, tag)| Constraint {
                    row: SparseRow {
                        indices: vec![0],
                        values: vec![a],
                    },
                    rhs,
                    tag,
                })
                .collect(),
            var_index: VariableIndex::default(),
            delta_t: 1.0,
        }
    }

    #[test]
    fn interior_optimum_has_zero_bound_duals() {
        // min (x-1)² on [0, 2]: x = 1, both bound duals zero.
        let p = scalar_qp(
            1.0,
            -2.0,
            1.0,
            vec![(-1.0, 0.0, tag_b()), (1.0, 2.0, tag_a())],
        );
        let sol = solve_qp(&p, &SolverSettings::default());
        assert_eq!(sol.status, SolverStatus::Optimal);
        assert!((sol.raw_x[0] - 1.0).abs() < 1e-6);
        assert!(sol.dual(&tag_a()).abs() < 1e-6);
        assert!(sol.dual(&tag_b()).abs() < 1e-6);
        assert!(sol.objective.abs() < 1e-9);
    }

    #[test]
    fn active_bound_dual_from_stationarity() {
        // min (x-3)² s.t. x ≤ 2: stationarity 2(x-3) + μ = 0 gives μ = 2.
        let p = scalar_qp(1.0, -6.0, 9.0, vec![(1.0, 2.0, tag_a())]);
        let sol = solve_qp(&p, &SolverSettings::default());
        assert_eq!(sol.status, SolverStatus::Optimal);
        assert!((sol.raw_x[0] - 2.0).abs() < 1e-7);
        assert!((sol.dual(&tag_a()) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn one_bus_dispatch_extracts_marginal_price() {
        // Single bus, h(p) = 0.5p² + 2p, demand 10: the balance multiplier
        // equals the marginal cost h'(10) = 12.
        use crate::formulation::build_rp;
        use crate::network::compute_gsf;
        let mut case = crate::testutil::one_bus_case(false, 1);
        case.delta_t = 1.0;
        let gsf = compute_gsf(&case).unwrap();
        let p = build_rp(&case, &gsf).unwrap();
        let sol = solve_qp(&p, &SolverSettings::default());
        assert_eq!(sol.status, SolverStatus::Optimal);
        assert!((sol.primal.generation_at(&GeneratorId::new("g1"), 1) - 10.0).abs() < 1e-6);
        let lambda = sol.dual(&MultiplierTag::Balance { t: 1 });
        assert!((lambda - 12.0).abs() < 1e-6, "lambda = {lambda}");
    }

    #[test]
    fn balance_dual_is_per_hour_for_short_slots() {
        // Same dispatch at Δt = 0.5: the extracted price is still $/MWh.
        use crate::formulation::build_rp;
        use crate::network::compute_gsf;
        let case = crate::testutil::one_bus_case(false, 1);
        assert_eq!(case.delta_t, 0.5);
        let gsf = compute_gsf(&case).unwrap();
        let p = build_rp(&case, &gsf).unwrap();
        let sol = solve_qp(&p, &SolverSettings::default());
        let lambda = sol.dual(&MultiplierTag::Balance { t: 1 });
        assert!((lambda - 12.0).abs() < 1e-6, "lambda = {lambda}");
    }

    #[test]
    fn infeasible_bounds_are_detected() {
        // x ≤ 0 and x ≥ 1 cannot hold together.
        let p = scalar_qp(
            1.0,
            0.0,
            0.0,
            vec![(1.0, 0.0, tag_a()), (-1.0, -1.0, tag_b())],
        );
        let sol = solve_qp(&p, &SolverSettings::default());
        assert_eq!(sol.status, SolverStatus::Infeasible);
    }

    #[test]
    fn iteration_limit_returns_best_iterate() {
        let p = scalar_qp(1.0, -6.0, 9.0, vec![(1.0, 2.0, tag_a())]);
        let sol = solve_qp(
            &p,
            &SolverSettings {
                max_iterations: 1,
                ..Default::default()
            },
        );
        assert_eq!(sol.status, SolverStatus::IterLimit);
        assert!(sol.raw_x[0].is_finite());
    }

    #[test]
    fn deterministic_bitwise_repeatability() {
        use crate::formulation::build_rp;
        use crate::network::compute_gsf;
        let case = crate::testutil::one_bus_case(true, 2);
        let gsf = compute_gsf(&case).unwrap();
        let p = build_rp(&case, &gsf).unwrap();
        let a = solve_qp(&p, &SolverSettings::default());
        let b = solve_qp(&p, &SolverSettings::default());
        assert_eq!(a.raw_x, b.raw_x);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn objective_scaling_scales_duals_and_keeps_argmin() {
        let p = scalar_qp(1.0, -6.0, 9.0, vec![(1.0, 2.0, tag_a())]);
        let mut p10 = p.clone();
        p10.objective_quadratic *= 10.0;
        p10.objective_linear *= 10.0;
        p10.objective_constant *= 10.0;
        let sol = solve_qp(&p, &SolverSettings::default());
        let sol10 = solve_qp(&p10, &SolverSettings::default());
        assert!((sol.raw_x[0] - sol10.raw_x[0]).abs() < 1e-6);
        assert!((10.0 * sol.dual(&tag_a()) - sol10.dual(&tag_a())).abs() < 1e-4);
    }

    #[test]
    fn complementary_slackness_holds_at_optimum() {
        use crate::formulation::build_rp;
        use crate::network::compute_gsf;
        let case = crate::testutil::one_bus_case(true, 3);
        let gsf = compute_gsf(&case).unwrap();
        let p = build_rp(&case, &gsf).unwrap();
        let sol = solve_qp(&p, &SolverSettings::default());
        assert_eq!(sol.status, SolverStatus::Optimal);
        assert!(
            sol.max_complementary_slackness < 1e-6,
            "max |dual·slack| = {}",
            sol.max_complementary_slackness
        );
    }

    #[test]
    fn equality_only_problem_solves_in_closed_form() {
        // min x² + y² s.t. x + y = 2 → x = y = 1.
        let p = QpProblem {
            num_vars: 2,
            objective_quadratic: DMatrix::identity(2, 2),
            objective_linear: DVector::zeros(2),
            objective_constant: 0.0,
            eq_constraints: vec![Constraint {
                row: SparseRow {
                    indices: vec![0, 1],
                    values: vec![1.0, 1.0],
                },
                rhs: 2.0,
                tag: MultiplierTag::Balance { t: 1 },
            }],
            ineq_constraints: vec![],
            var_index: VariableIndex::default(),
            delta_t: 1.0,
        };
        let sol = solve_qp(&p, &SolverSettings::default());
        assert_eq!(sol.status, SolverStatus::Optimal);
        assert!((sol.raw_x[0] - 1.0).abs() < 1e-7);
        assert!((sol.raw_x[1] - 1.0).abs() < 1e-7);
        // L = x² + y² + y(x + y − 2): 2x + y = 0 → raw y = −2, negated → 2.
        assert!((sol.dual(&MultiplierTag::Balance { t: 1 }) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn iteration_log_renders_as_csv() {
        let p = scalar_qp(1.0, -6.0, 9.0, vec![(1.0, 2.0, tag_a())]);
        let sol = solve_qp(&p, &SolverSettings::default());
        let mut buf = Vec::new();
        write_iteration_log_csv(&sol.iteration_log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,primal_objective,dual_objective"));
        assert!(text.lines().count() > 2);
    }

    #[test]
    fn strong_duality_gap_at_optimum() {
        use crate::formulation::build_rp;
        use crate::network::compute_gsf;
        let case = crate::testutil::one_bus_case(true, 3);
        let gsf = compute_gsf(&case).unwrap();
        let p = build_rp(&case, &gsf).unwrap();
        let settings = SolverSettings::default();
        let sol = solve_qp(&p, &settings);
        assert_eq!(sol.status, SolverStatus::Optimal);
        let last = sol.iteration_log.last().unwrap();
        assert!(
            last.primal_objective - last.dual_objective
                <= settings.duality_gap_tol * (1.0 + last.primal_objective.abs()),
            "gap {} at objective {}",
            last.complementarity_gap,
            last.primal_objective
        );
    }

    #[test]
    fn unused_line_tag_reads_zero() {
        let p = scalar_qp(1.0, 0.0, 0.0, vec![(1.0, 2.0, tag_a())]);
        let sol = solve_qp(&p, &SolverSettings::default());
        let missing = MultiplierTag::FlowUpper {
            line: LineId::new("nope"),
            t: 9,
        };
        assert_eq!(sol.dual(&missing), 0.0);
    }
}
