//! Run reports (text and JSON), trace CSV files and trace diagnostics.

use std::path::Path;

use bpalm::diagnostics::{ergodic_gap_check, fejer_check, rate_fit, solution_distances, summability_check};
use bpalm::outer::Trace;
use bpalm::{BregmanGeometry, SolveReport};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::{CliError, Setup};

pub const TRACE_COLUMNS: [&str; 11] = [
    "k",
    "sigma",
    "rho",
    "T_k_used",
    "T_k_predicted",
    "B_k",
    "grad_norm",
    "decrement",
    "dual_res",
    "primal_res",
    "D_to_solution",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub fejer_monotone: Option<bool>,
    pub fejer_violations: Option<usize>,
    pub rate_superlinear: Option<bool>,
    pub rate_last_q: Option<f64>,
    pub ergodic_max_violation: Option<f64>,
    pub summability_holds: Option<bool>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub status: String,
    pub iterations: usize,
    pub newton_steps_total: usize,
    pub dual_res: f64,
    pub primal_res: f64,
    pub compl_res: f64,
    pub sigma_final: f64,
    pub wall_time_ms: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsReport>,
}

impl Report {
    pub fn new(solved: &SolveReport, wall_time_ms: f64, diagnostics: Option<DiagnosticsReport>) -> Self {
        Self {
            status: solved.status.name().to_string(),
            iterations: solved.outer_iterations,
            newton_steps_total: solved.total_newton_steps,
            dual_res: solved.residuals.dual_res,
            primal_res: solved.residuals.primal_res,
            compl_res: solved.residuals.compl_res,
            sigma_final: solved.sigma_final,
            wall_time_ms,
            x: solved.x.iter().copied().collect(),
            y: solved.y.iter().copied().collect(),
            message: solved.message.clone(),
            diagnostics,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let vec = |v: &[f64]| format!("[{}]", v.iter().map(|&t| fmt_real(t)).collect::<Vec<_>>().join(", "));
        let mut out = String::new();
        let mut line = |k: &str, v: String| out.push_str(&format!("{k:<20}{v}\n"));
        line("status", self.status.clone());
        line("iterations", self.iterations.to_string());
        line("newton_steps_total", self.newton_steps_total.to_string());
        line("dual_res", fmt_real(self.dual_res));
        line("primal_res", fmt_real(self.primal_res));
        line("compl_res", fmt_real(self.compl_res));
        line("sigma_final", fmt_real(self.sigma_final));
        line("wall_time_ms", format!("{:.3}", self.wall_time_ms));
        line("x", vec(&self.x));
        line("y", vec(&self.y));
        if let Some(m) = &self.message {
            line("message", m.clone());
        }
        if let Some(d) = &self.diagnostics {
            let opt = |v: Option<String>| v.unwrap_or_else(|| "skipped".into());
            line("fejer_monotone", opt(d.fejer_monotone.map(|b| b.to_string())));
            line("fejer_violations", opt(d.fejer_violations.map(|b| b.to_string())));
            line("rate_superlinear", opt(d.rate_superlinear.map(|b| b.to_string())));
            line("rate_last_q", opt(d.rate_last_q.map(fmt_real)));
            line("ergodic_violation", opt(d.ergodic_max_violation.map(fmt_real)));
            line("summability_holds", opt(d.summability_holds.map(|b| b.to_string())));
            for n in &d.notes {
                line("note", n.clone());
            }
        }
        out
    }
}

/// The embedded solution, when it matches the dimensions of the built
/// problem.
pub fn reference(setup: &Setup) -> Option<(DVector<f64>, DVector<f64>)> {
    let s = setup.file.solution.as_ref()?;
    if setup.built.spec.m != setup.built.original_rows {
        return None;
    }
    Some((DVector::from_column_slice(&s.x), DVector::from_column_slice(&s.y)))
}

pub fn write_trace(
    path: &Path,
    trace: &Trace,
    reference: Option<&(DVector<f64>, DVector<f64>)>,
    geometry: &BregmanGeometry,
) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let distances = reference.and_then(|(x, y)| solution_distances(trace, x, y, geometry).ok());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(TRACE_COLUMNS).map_err(io)?;
    for r in &trace.records {
        let d = distances.as_ref().map(|d| d[r.k + 1]).filter(|d| d.is_finite()).map(fmt_real).unwrap_or_default();
        w.write_record([
            r.k.to_string(),
            fmt_real(r.sigma),
            fmt_real(r.rho),
            r.t_used.to_string(),
            r.t_predicted.map(|t| t.to_string()).unwrap_or_default(),
            fmt_real(r.b),
            fmt_real(r.grad_norm),
            fmt_real(r.decrement),
            fmt_real(r.residuals.dual_res),
            fmt_real(r.residuals.primal_res),
            d,
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn diagnose(
    setup: &Setup,
    solved: &SolveReport,
    reference: Option<&(DVector<f64>, DVector<f64>)>,
) -> DiagnosticsReport {
    let mut out = DiagnosticsReport {
        fejer_monotone: None,
        fejer_violations: None,
        rate_superlinear: None,
        rate_last_q: None,
        ergodic_max_violation: None,
        summability_holds: None,
        notes: Vec::new(),
    };
    let Some((x, y)) = reference else {
        out.notes.push("no embedded solution for this problem".into());
        return out;
    };
    let geometry = &setup.config.geometry;
    let trace = &solved.trace;
    match fejer_check(trace, x, y, geometry) {
        Ok(f) => {
            out.fejer_monotone = Some(f.monotone);
            out.fejer_violations = Some(f.violations.len());
        }
        Err(e) => out.notes.push(format!("fejer: {e}")),
    }
    match rate_fit(trace, x, y, geometry) {
        Ok(r) => {
            out.rate_superlinear = Some(r.superlinear);
            out.rate_last_q = r.q.last().copied();
        }
        Err(e) => out.notes.push(format!("rate: {e}")),
    }
    let ergodic = ergodic_gap_check(&setup.built.spec, trace, &[(x.clone(), y.clone())], geometry);
    if ergodic.max_violation.is_finite() {
        out.ergodic_max_violation = Some(ergodic.max_violation);
    } else {
        out.notes.push("ergodic: bound is infinite for this solution".into());
    }
    match summability_check(trace, x, y, geometry) {
        Ok(s) => out.summability_holds = Some(s.holds),
        Err(e) => out.notes.push(format!("summability: {e}")),
    }
    out
}
