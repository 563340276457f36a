//! Dense primal-dual interior-point engine for convex QPs.
//!
//! Solves `min xᵀQx + cᵀx  s.t.  Ex = b, Ax ≤ u` with a Mehrotra-style
//! predictor-corrector, infeasible start, static regularization and one
//! round of iterative refinement per KKT solve. The normal-equations matrix
//! `H = 2Q + AᵀD A + δI` is factored densely once per iteration; equality
//! multipliers come from the Schur complement `E H⁻¹ Eᵀ`.
//!
//! Everything is evaluated in a fixed order with no randomized pivoting, so
//! identical inputs and settings produce bitwise-identical iterates.

use crate::formulation::SparseRow;
use crate::solver::{IterationRecord, SolverSettings, SolverStatus};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

pub(crate) struct IpmInput<'a> {
    pub q: &'a DMatrix<f64>,
    pub c: &'a DVector<f64>,
    pub eq_rows: Vec<&'a SparseRow>,
    pub eq_rhs: DVector<f64>,
    pub ineq_rows: Vec<&'a SparseRow>,
    pub ineq_rhs: DVector<f64>,
}

pub(crate) struct IpmOutput {
    pub status: SolverStatus,
    pub x: DVector<f64>,
    /// Equality multipliers for `L = f(x) + yᵀ(Ex − b) + zᵀ(Ax − u)`.
    pub y: DVector<f64>,
    /// Inequality multipliers, non-negative at convergence.
    pub z: DVector<f64>,
    pub iterations: usize,
    pub log: Vec<IterationRecord>,
}

fn mat_vec(rows: &[&SparseRow], x: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|r| r.dot(x)))
}

fn mat_t_vec(rows: &[&SparseRow], v: &DVector<f64>, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    for (k, row) in rows.iter().enumerate() {
        let vk = v[k];
        if vk != 0.0 {
            for (&i, &a) in row.indices.iter().zip(&row.values) {
                out[i] += a * vk;
            }
        }
    }
    out
}

/// Largest α ∈ (0, 1] with v + α·dv ≥ 0, scaled back by `fraction`.
fn max_step(v: &DVector<f64>, dv: &DVector<f64>, fraction: f64) -> f64 {
    let mut alpha = 1.0 / fraction;
    for (vi, di) in v.iter().zip(dv.iter()) {
        if *di < 0.0 {
            alpha = alpha.min(-vi / di);
        }
    }
    (fraction * alpha).min(1.0)
}

/// Factored iteration KKT system, together with the barrier scaling `D`
/// that H was built with (needed for residual refinement).
struct KktFactor {
    chol_h: Cholesky<f64, Dyn>,
    /// Eᵀ as a dense n×p matrix (zero columns when there are no equalities).
    e_t: DMatrix<f64>,
    chol_m: Option<Cholesky<f64, Dyn>>,
    d: DVector<f64>,
}

impl KktFactor {
    fn build(input: &IpmInput, d: &DVector<f64>, delta: f64) -> Option<Self> {
        let n = input.c.len();
        let p = input.eq_rows.len();
        let mut h = input.q * 2.0;
        for i in 0..n {
            h[(i, i)] += delta;
        }
        for (k, row) in input.ineq_rows.iter().enumerate() {
            let dk = d[k];
            for (pos, (&i, &vi)) in row.indices.iter().zip(&row.values).enumerate() {
                for (&j, &vj) in row.indices[pos..].iter().zip(&row.values[pos..]) {
                    let add = dk * vi * vj;
                    h[(i, j)] += add;
                    if i != j {
                        h[(j, i)] += add;
                    }
                }
            }
        }
        let chol_h = Cholesky::new(h)?;
        let mut e_t = DMatrix::zeros(n, p);
        for (k, row) in input.eq_rows.iter().enumerate() {
            for (&i, &v) in row.indices.iter().zip(&row.values) {
                e_t[(i, k)] = v;
            }
        }
        let chol_m = if p > 0 {
            let w = chol_h.solve(&e_t);
            let mut m_mat = e_t.transpose() * w;
            for i in 0..p {
                m_mat[(i, i)] += delta;
            }
            Some(Cholesky::new(m_mat)?)
        } else {
            None
        };
        Some(Self {
            chol_h,
            e_t,
            chol_m,
            d: d.clone(),
        })
    }

    /// Solve `H Δx + Eᵀ Δy = rx`, `E Δx = ry` with one refinement round.
    fn solve(
        &self,
        input: &IpmInput,
        rx: &DVector<f64>,
        ry: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let (mut dx, mut dy) = self.solve_once(rx, ry);
        let mut res_x = rx - self.apply_h(input, &dx);
        if self.e_t.ncols() > 0 {
            res_x -= &self.e_t * &dy;
        }
        let res_y = ry - mat_vec(&input.eq_rows, &dx);
        let (cx, cy) = self.solve_once(&res_x, &res_y);
        dx += cx;
        dy += cy;
        (dx, dy)
    }

    fn solve_once(&self, rx: &DVector<f64>, ry: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let hx = self.chol_h.solve(rx);
        match &self.chol_m {
            Some(chol_m) => {
                let rhs = self.e_t.transpose() * &hx - ry;
                let dy = chol_m.solve(&rhs);
                let dx = self.chol_h.solve(&(rx - &self.e_t * &dy));
                (dx, dy)
            }
            None => (hx, DVector::zeros(0)),
        }
    }

    /// `(2Q + AᵀDA) x` without the regularization shift.
    fn apply_h(&self, input: &IpmInput, x: &DVector<f64>) -> DVector<f64> {
        let mut out = input.q * 2.0 * x;
        for (k, row) in input.ineq_rows.iter().enumerate() {
            let rv = row.dot(x);
            if rv != 0.0 {
                let scaled = self.d[k] * rv;
                for (&i, &v) in row.indices.iter().zip(&row.values) {
                    out[i] += v * scaled;
                }
            }
        }
        out
    }
}

pub(crate) fn solve(input: &IpmInput, settings: &SolverSettings) -> IpmOutput {
    let n = input.c.len();
    let m = input.ineq_rows.len();
    let p = input.eq_rows.len();

    let norm_inf = |v: &DVector<f64>| v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let data_p = 1.0 + norm_inf(&input.eq_rhs).max(norm_inf(&input.ineq_rhs));
    let data_d = 1.0 + norm_inf(input.c);

    let objective = |x: &DVector<f64>| (x.transpose() * input.q * x)[(0, 0)] + input.c.dot(x);

    // Starting point: origin, slack-sized positives, unit multipliers.
    let mut x = DVector::zeros(n);
    let mut y = DVector::zeros(p);
    let mut s = DVector::from_iterator(m, input.ineq_rhs.iter().map(|&u| u.abs().max(1.0)));
    let mut z = DVector::from_element(m, 1.0);

    let mut log = Vec::new();
    let mut status = SolverStatus::IterLimit;
    let mut iterations = 0;
    let mut best_pinf = f64::INFINITY;

    for iter in 0..settings.max_iterations {
        let r_d = {
            let mut r = input.q * 2.0 * &x + input.c;
            if p > 0 {
                r += mat_t_vec(&input.eq_rows, &y, n);
            }
            if m > 0 {
                r += mat_t_vec(&input.ineq_rows, &z, n);
            }
            r
        };
        let r_p = if p > 0 {
            mat_vec(&input.eq_rows, &x) - &input.eq_rhs
        } else {
            DVector::zeros(0)
        };
        let r_i = if m > 0 {
            mat_vec(&input.ineq_rows, &x) + &s - &input.ineq_rhs
        } else {
            DVector::zeros(0)
        };

        let obj = objective(&x);
        let gap_abs = s.dot(&z);
        let pinf = norm_inf(&r_p).max(norm_inf(&r_i)) / data_p;
        let dinf = norm_inf(&r_d) / data_d;
        let gap_rel = gap_abs / (1.0 + obj.abs());
        best_pinf = best_pinf.min(pinf);

        log.push(IterationRecord {
            iteration: iter,
            primal_objective: obj,
            dual_objective: obj - gap_abs,
            complementarity_gap: gap_abs,
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
            step_primal: 0.0,
            step_dual: 0.0,
        });

        if !obj.is_finite() || !gap_abs.is_finite() {
            status = SolverStatus::IterLimit;
            break;
        }
        if pinf <= settings.feasibility_tol
            && dinf <= settings.feasibility_tol
            && gap_rel <= settings.duality_gap_tol
        {
            status = SolverStatus::Optimal;
            break;
        }
        if m > 0 {
            // Growing multipliers with Aᵀz ≈ 0 and uᵀz < 0 form a Farkas ray
            // certifying that no feasible point exists.
            let z_scale = norm_inf(&z);
            if z_scale > 1e6 {
                let z_ray = &z / z_scale;
                let ray_residual = norm_inf(&mat_t_vec(&input.ineq_rows, &z_ray, n));
                let ray_value = input.ineq_rhs.dot(&z_ray);
                if ray_residual <= 1e-6 && ray_value < -1e-9 {
                    status = SolverStatus::Infeasible;
                    break;
                }
            }
            // Complementarity exhausted while the primal residual persists.
            if iter >= 5
                && gap_rel <= settings.duality_gap_tol
                && pinf > 1e3 * settings.feasibility_tol
                && pinf > 0.5 * best_pinf
            {
                status = SolverStatus::Infeasible;
                break;
            }
        }
        if obj < -1e14 * data_d || norm_inf(&x) > 1e14 {
            status = SolverStatus::Unbounded;
            break;
        }

        if m == 0 {
            // Pure equality-constrained QP: one regularized Newton solve.
            let d = DVector::zeros(0);
            let Some(factor) = KktFactor::build(input, &d, settings.static_regularization) else {
                break;
            };
            let (dx, dy) = factor.solve(input, &-(r_d.clone()), &-(r_p.clone()));
            x += dx;
            y += dy;
            iterations = iter + 1;
            continue;
        }

        let mu = gap_abs / m as f64;
        let d = DVector::from_iterator(m, z.iter().zip(s.iter()).map(|(&zk, &sk)| zk / sk));

        let mut delta = settings.static_regularization;
        let factor = loop {
            match KktFactor::build(input, &d, delta) {
                Some(f) => break Some(f),
                None if delta < 1.0 => delta *= 100.0,
                None => break None,
            }
        };
        let Some(factor) = factor else {
            break;
        };

        // rx = −r_d − Aᵀ S⁻¹ (Z r_i − r_comp)
        let assemble_rhs = |r_comp: &DVector<f64>| {
            let w = DVector::from_iterator(m, (0..m).map(|k| (z[k] * r_i[k] - r_comp[k]) / s[k]));
            -(r_d.clone()) - mat_t_vec(&input.ineq_rows, &w, n)
        };
        let recover = |dx: &DVector<f64>, r_comp: &DVector<f64>| {
            let a_dx = mat_vec(&input.ineq_rows, dx);
            let ds = DVector::from_iterator(m, (0..m).map(|k| -r_i[k] - a_dx[k]));
            let dz = DVector::from_iterator(m, (0..m).map(|k| -(r_comp[k] + z[k] * ds[k]) / s[k]));
            (ds, dz)
        };

        // Predictor (affine scaling).
        let r_comp_aff = DVector::from_iterator(m, (0..m).map(|k| s[k] * z[k]));
        let rx_aff = assemble_rhs(&r_comp_aff);
        let (dx_aff, _) = factor.solve(input, &rx_aff, &-(r_p.clone()));
        let (ds_aff, dz_aff) = recover(&dx_aff, &r_comp_aff);

        let alpha_p_aff = max_step(&s, &ds_aff, 1.0);
        let alpha_d_aff = max_step(&z, &dz_aff, 1.0);
        let mu_aff = (0..m)
            .map(|k| (s[k] + alpha_p_aff * ds_aff[k]) * (z[k] + alpha_d_aff * dz_aff[k]))
            .sum::<f64>()
            / m as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        // Corrector with centering, reusing the factorization.
        let r_comp = DVector::from_iterator(
            m,
            (0..m).map(|k| s[k] * z[k] + ds_aff[k] * dz_aff[k] - sigma * mu),
        );
        let rx = assemble_rhs(&r_comp);
        let (dx, dy) = factor.solve(input, &rx, &-(r_p.clone()));
        let (ds, dz) = recover(&dx, &r_comp);

        let alpha_p = max_step(&s, &ds, 0.995);
        let alpha_d = max_step(&z, &dz, 0.995);
        let finite = |v: &DVector<f64>| v.iter().all(|a| a.is_finite());
        if !(finite(&dx) && finite(&ds) && finite(&dy) && finite(&dz)) {
            // Numerical breakdown; keep the last finite iterate.
            break;
        }

        x += alpha_p * &dx;
        s += alpha_p * &ds;
        y += alpha_d * &dy;
        z += alpha_d * &dz;

        if let Some(last) = log.last_mut() {
            last.step_primal = alpha_p;
            last.step_dual = alpha_d;
        }
        iterations = iter + 1;
    }

    IpmOutput {
        status,
        x,
        y,
        z,
        iterations,
        log,
    }
}
