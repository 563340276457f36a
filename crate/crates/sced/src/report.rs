//! Run reports: a schema-versioned, JSON-serializable document per run plus
//! text and CSV renderers.
//!
//! Renderers are pure functions of the report document — nothing is
//! recomputed at render time — so re-rendering a report parsed back from
//! its JSON form reproduces the original text byte for byte.

use crate::exactness::{ExactnessReport, Verdict};
use crate::oracle::{ExactnessVerification, OracleResult};
use crate::planner::{PlanReport, PlanVerdict};
use crate::solver::{Solution, SolverSettings, SolverStatus};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;

pub const SCHEMA_VERSION: u32 = 1;

/// Threshold above which the complementarity figure is highlighted: a
/// product this large means visibly simultaneous charging and discharging.
pub const COMPLEMENTARITY_ALERT: f64 = 1e-4;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmpEntry {
    pub bus: String,
    pub t: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub status: SolverStatus,
    pub objective: f64,
    pub iterations: usize,
    pub max_complementary_slackness: f64,
    pub degenerate_dual: bool,
    pub lmp: Vec<LmpEntry>,
}

impl SolutionSummary {
    pub fn new(solution: &Solution, lmp: &BTreeMap<(crate::network::BusId, usize), f64>) -> Self {
        Self {
            status: solution.status,
            objective: solution.objective,
            iterations: solution.iterations,
            max_complementary_slackness: solution.max_complementary_slackness,
            degenerate_dual: solution.degenerate_dual,
            lmp: lmp
                .iter()
                .map(|((bus, t), &value)| LmpEntry {
                    bus: bus.to_string(),
                    t: *t,
                    value,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cond2Entry {
    pub storage: String,
    pub t: usize,
    pub tau_from: usize,
    pub tau_to: usize,
    pub min_slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactnessSummary {
    pub verdict: Verdict,
    pub cond1_violations: Vec<(String, usize)>,
    pub cond2_checks: Vec<Cond2Entry>,
    pub assumption1_ok_everywhere: bool,
    pub baseline_violations: Vec<(String, usize)>,
    pub max_complementarity: f64,
    pub max_complementarity_at: Option<(String, usize)>,
    pub degenerate_dual: bool,
}

impl From<&ExactnessReport> for ExactnessSummary {
    fn from(r: &ExactnessReport) -> Self {
        Self {
            verdict: r.verdict,
            cond1_violations: r
                .cond1_violations
                .iter()
                .map(|(s, t)| (s.to_string(), *t))
                .collect(),
            cond2_checks: r
                .cond2_checks
                .iter()
                .map(|c| Cond2Entry {
                    storage: c.storage.to_string(),
                    t: c.t,
                    tau_from: c.tau_from,
                    tau_to: c.tau_to,
                    min_slack: c.min_slack,
                    pass: c.pass,
                })
                .collect(),
            assumption1_ok_everywhere: r.assumption1_ok.values().all(|&ok| ok),
            baseline_violations: r
                .baseline_violations
                .iter()
                .map(|(s, t)| (s.to_string(), *t))
                .collect(),
            max_complementarity: r.max_complementarity,
            max_complementarity_at: r
                .max_complementarity_at
                .as_ref()
                .map(|(s, t)| (s.to_string(), *t)),
            degenerate_dual: r.degenerate_dual,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSummary {
    pub optimum: f64,
    pub relaxation_value: f64,
    pub gap_to_rp: f64,
    pub nodes_explored: usize,
    pub pruned: usize,
    pub complete: bool,
    pub near_tie: bool,
    pub relative_gap: f64,
    pub schedule_distance: f64,
    pub exact: bool,
}

impl OracleSummary {
    pub fn new(oracle: &OracleResult, verification: &ExactnessVerification) -> Self {
        Self {
            optimum: oracle.optimum,
            relaxation_value: oracle.relaxation_value,
            gap_to_rp: oracle.gap_to_rp,
            nodes_explored: oracle.nodes_explored,
            pruned: oracle.pruned,
            complete: oracle.complete,
            near_tie: oracle.near_tie,
            relative_gap: verification.relative_gap,
            schedule_distance: verification.schedule_distance,
            exact: verification.exact,
        }
    }
}

/// One run of solve/check/oracle, as a structured document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub case_path: String,
    pub case_checksum: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    pub settings: SolverSettings,
    pub solution: SolutionSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exactness: Option<ExactnessSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
    pub timings_ms: BTreeMap<String, f64>,
}

/// One row of the scenario table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub name: String,
    pub f_prime: f64,
    pub g_prime: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lmp_target: Option<f64>,
    /// Minimum LMP over storage buses and slots.
    pub lmp_achieved: f64,
    pub cond1: bool,
    /// None renders as "/" (vacuous: the bound held everywhere).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cond2: Option<bool>,
    pub baseline: bool,
    pub max_complementarity: f64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableReport {
    pub schema_version: u32,
    pub scenario_path: String,
    pub case_path: String,
    pub case_checksum: String,
    pub rows: Vec<TableRow>,
    pub timings_ms: BTreeMap<String, f64>,
}

/// Planner run document.
#[derive(Debug, Clone, Serialize)]
pub struct PlanRunReport {
    pub schema_version: u32,
    pub case_path: String,
    pub case_checksum: String,
    pub forecast_path: String,
    pub plan: PlanReport,
}

fn fmt_sci(v: f64) -> String {
    format!("{v:.1e}")
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::ExactByCond1 => "ExactByCond1",
        Verdict::ExactByCond2 => "ExactByCond2",
        Verdict::NotCertified => "NotCertified",
    }
}

/// Render a run report as human-readable text.
pub fn render_run_text(report: &RunReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "case: {} (sha256 {})",
        report.case_path, report.case_checksum
    )
    .unwrap();
    if let Some(v) = &report.variant {
        writeln!(out, "variant: {v}").unwrap();
    }
    writeln!(
        out,
        "status: {:?}  objective: {:.6}  iterations: {}",
        report.solution.status, report.solution.objective, report.solution.iterations
    )
    .unwrap();
    if let Some(ex) = &report.exactness {
        writeln!(out, "verdict: {}", verdict_str(ex.verdict)).unwrap();
        let comp = fmt_sci(ex.max_complementarity);
        let comp = if ex.max_complementarity > COMPLEMENTARITY_ALERT {
            format!("\x1b[1m{comp}\x1b[0m")
        } else {
            comp
        };
        match &ex.max_complementarity_at {
            Some((s, t)) => writeln!(out, "max |pc*pd|: {comp} MW^2 at ({s}, t{t})").unwrap(),
            None => writeln!(out, "max |pc*pd|: {comp} MW^2").unwrap(),
        }
        if !ex.cond1_violations.is_empty() {
            writeln!(
                out,
                "bound violations: {} (first at ({}, t{}))",
                ex.cond1_violations.len(),
                ex.cond1_violations[0].0,
                ex.cond1_violations[0].1
            )
            .unwrap();
        }
        for c in &ex.cond2_checks {
            writeln!(
                out,
                "  cap scan ({}, t{}): tau {}..{} min slack {:.6} -> {}",
                c.storage,
                c.t,
                c.tau_from,
                c.tau_to,
                c.min_slack,
                if c.pass { "pass" } else { "FAIL" }
            )
            .unwrap();
        }
        if !ex.baseline_violations.is_empty() {
            writeln!(out, "baseline violations: {}", ex.baseline_violations.len()).unwrap();
        }
        if ex.degenerate_dual {
            writeln!(out, "note: degenerate duals detected").unwrap();
        }
    }
    if let Some(or) = &report.oracle {
        writeln!(
            out,
            "oracle: v_op {:.6}  v_rp {:.6}  gap {:.3e}  exact: {}  nodes {} (pruned {}){}",
            or.optimum,
            or.relaxation_value,
            or.gap_to_rp,
            yes_no(or.exact),
            or.nodes_explored,
            or.pruned,
            if or.complete { "" } else { "  [INCOMPLETE]" }
        )
        .unwrap();
    }
    out.push_str(&render_lmp_block(&report.solution.lmp));
    out
}

/// LMP block: full matrix for small cases, per-bus ranges otherwise.
fn render_lmp_block(lmp: &[LmpEntry]) -> String {
    let mut out = String::new();
    if lmp.is_empty() {
        return out;
    }
    let mut buses: Vec<&str> = Vec::new();
    let mut t_max = 0usize;
    for e in lmp {
        if !buses.contains(&e.bus.as_str()) {
            buses.push(&e.bus);
        }
        t_max = t_max.max(e.t);
    }
    let value = |bus: &str, t: usize| {
        lmp.iter()
            .find(|e| e.bus == bus && e.t == t)
            .map(|e| e.value)
            .unwrap_or(f64::NAN)
    };
    if lmp.len() <= 400 {
        writeln!(out, "LMP ($/MWh):").unwrap();
        write!(out, "{:>8}", "bus").unwrap();
        for t in 1..=t_max {
            write!(out, " {:>9}", format!("t{t}")).unwrap();
        }
        out.push('\n');
        for bus in &buses {
            write!(out, "{bus:>8}").unwrap();
            for t in 1..=t_max {
                write!(out, " {:>9.3}", value(bus, t)).unwrap();
            }
            out.push('\n');
        }
    } else {
        writeln!(out, "LMP ($/MWh), per-bus range over {t_max} slots:").unwrap();
        for bus in &buses {
            let vals: Vec<f64> = (1..=t_max).map(|t| value(bus, t)).collect();
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            writeln!(out, "{bus:>8}  min {min:>9.3}  max {max:>9.3}").unwrap();
        }
    }
    out
}

/// Render LMPs as long-format CSV (`bus,t,lmp`).
pub fn render_run_csv(report: &RunReport) -> String {
    let mut out = String::from("bus,t,lmp\n");
    for e in &report.solution.lmp {
        writeln!(out, "{},{},{}", e.bus, e.t, e.value).unwrap();
    }
    out
}

/// Render the scenario table as text.
pub fn render_table_text(report: &TableReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "scenario: {} on {} (sha256 {})",
        report.scenario_path, report.case_path, report.case_checksum
    )
    .unwrap();
    writeln!(
        out,
        "{:<16} {:>12} {:>8} {:>7} {:>7} {:>9} {:>12}  verdict",
        "variant", "(f',g')", "LMP", "Cond.1", "Cond.2", "Baseline", "max|pc*pd|"
    )
    .unwrap();
    for row in &report.rows {
        if let Some(err) = &row.failed {
            writeln!(out, "{:<16} FAILED: {err}", row.name).unwrap();
            continue;
        }
        let comp = fmt_sci(row.max_complementarity);
        let comp = if row.max_complementarity > COMPLEMENTARITY_ALERT {
            format!("\x1b[1m{comp}\x1b[0m")
        } else {
            comp
        };
        writeln!(
            out,
            "{:<16} {:>12} {:>8.2} {:>7} {:>7} {:>9} {:>12}  {}",
            row.name,
            format!("({},{})", row.f_prime, row.g_prime),
            row.lmp_achieved,
            yes_no(row.cond1),
            row.cond2.map_or("/", yes_no),
            yes_no(row.baseline),
            comp,
            verdict_str(row.verdict),
        )
        .unwrap();
    }
    out
}

/// Render the scenario table as CSV.
pub fn render_table_csv(report: &TableReport) -> String {
    let mut out =
        String::from("variant,f_prime,g_prime,lmp_achieved,cond1,cond2,baseline,max_complementarity,verdict,failed\n");
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            row.name,
            row.f_prime,
            row.g_prime,
            row.lmp_achieved,
            yes_no(row.cond1),
            row.cond2.map_or("/", yes_no),
            yes_no(row.baseline),
            row.max_complementarity,
            verdict_str(row.verdict),
            row.failed.clone().unwrap_or_default(),
        )
        .unwrap();
    }
    out
}

/// Render a planner report as text.
pub fn render_plan_text(report: &PlanRunReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "case: {} (sha256 {})",
        report.case_path, report.case_checksum
    )
    .unwrap();
    writeln!(out, "forecast: {}", report.forecast_path).unwrap();
    let plan = &report.plan;
    writeln!(
        out,
        "step 1: bound check on forecast -> {}",
        if plan.step1_violations.is_empty() {
            "clear".to_string()
        } else {
            format!("{} violations", plan.step1_violations.len())
        }
    )
    .unwrap();
    if !plan.step1_violations.is_empty() {
        let first = &plan.step1_violations[0];
        writeln!(
            out,
            "step 2: first violation at ({}, t{})",
            first.0, first.1
        )
        .unwrap();
        writeln!(
            out,
            "step 3: capacity estimates (participation {})",
            if plan.participation_ok {
                "ok"
            } else {
                "VIOLATED"
            }
        )
        .unwrap();
    }
    writeln!(
        out,
        "{:<10} {:>12} {:>10} {:>11}",
        "storage", "needed MWh", "peak slot", "sufficient"
    )
    .unwrap();
    for e in &plan.estimates {
        writeln!(
            out,
            "{:<10} {:>12.4} {:>10} {:>11}",
            e.storage.to_string(),
            e.needed_capacity,
            e.peak_time,
            yes_no(e.sufficient)
        )
        .unwrap();
    }
    let verdict = match plan.verdict {
        PlanVerdict::PredictedExact { step } => format!("PredictedExact (step {step})"),
        PlanVerdict::Unknown => "Unknown".to_string(),
    };
    writeln!(out, "verdict: {verdict}").unwrap();
    out
}

/// Render planner estimates as CSV.
pub fn render_plan_csv(report: &PlanRunReport) -> String {
    let mut out = String::from("storage,needed_capacity,peak_time,sufficient\n");
    for e in &report.plan.estimates {
        writeln!(
            out,
            "{},{},{},{}",
            e.storage,
            e.needed_capacity,
            e.peak_time,
            yes_no(e.sufficient)
        )
        .unwrap();
    }
    out
}
