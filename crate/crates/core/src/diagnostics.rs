//! Post-processing of solver traces: Fejér monotonicity, contraction rates,
//! ergodic gap bounds, conic feasibility and summability of the proximal
//! residuals.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::legendre::BregmanGeometry;
use crate::outer::Trace;
use crate::problem::{NonsmoothTerm, ProblemSpec};

pub const FEJER_SLACK: f64 = 1e-10;
/// Distances below this fraction of the initial one count as zero in
/// [`rate_fit`]; below it the ratios are rounding noise.
pub const RATE_FLOOR: f64 = 1e-24;
pub const MIN_RATE_TRACE: usize = 6;

/// `D_Phi(z*, z_k)` for `k = 0..=K`.
pub fn solution_distances(
    trace: &Trace,
    x_star: &DVector<f64>,
    y_star: &DVector<f64>,
    geometry: &BregmanGeometry,
) -> Result<Vec<f64>> {
    if !geometry.primal.in_domain(x_star) || !geometry.dual.in_domain(y_star) {
        return Err(domain("reference solution is outside dom Phi"));
    }
    Ok((0..=trace.len())
        .map(|k| {
            let (x, y, eta) = trace.iterate(k);
            geometry.primal.bregman(x_star, x) + geometry.dual.bregman_with_grad(y_star, y, eta)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FejerReport {
    pub monotone: bool,
    pub distances: Vec<f64>,
    /// Indices `k` with `d_{k+1} > d_k + slack`.
    pub violations: Vec<usize>,
}

pub fn fejer_from_distances(distances: Vec<f64>) -> FejerReport {
    let violations: Vec<usize> =
        distances.windows(2).enumerate().filter(|(_, w)| w[1] > w[0] + FEJER_SLACK).map(|(k, _)| k).collect();
    FejerReport { monotone: violations.is_empty(), distances, violations }
}

pub fn fejer_check(
    trace: &Trace,
    x_star: &DVector<f64>,
    y_star: &DVector<f64>,
    geometry: &BregmanGeometry,
) -> Result<FejerReport> {
    Ok(fejer_from_distances(solution_distances(trace, x_star, y_star, geometry)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub distances: Vec<f64>,
    /// `q_k = d_{k+1} / d_k`, cut where `d_k` reaches the floor.
    pub q: Vec<f64>,
    pub superlinear: bool,
}

pub fn rate_from_distances(distances: Vec<f64>) -> Result<RateEstimate> {
    if distances.len() < MIN_RATE_TRACE + 1 {
        return Err(Error::InsufficientTrace { have: distances.len().saturating_sub(1), need: MIN_RATE_TRACE });
    }
    let floor = RATE_FLOOR * distances[0];
    let mut q = Vec::new();
    for w in distances.windows(2) {
        if w[0] <= floor || w[0] == 0.0 {
            break;
        }
        q.push(w[1] / w[0]);
    }
    let superlinear = q.len() >= 5 && {
        let tail = &q[q.len() - 5..];
        tail.windows(2).all(|w| w[1] < w[0]) && tail[4] < 0.1
    };
    Ok(RateEstimate { distances, q, superlinear })
}

pub fn rate_fit(
    trace: &Trace,
    x_star: &DVector<f64>,
    y_star: &DVector<f64>,
    geometry: &BregmanGeometry,
) -> Result<RateEstimate> {
    if trace.len() < MIN_RATE_TRACE {
        return Err(Error::InsufficientTrace { have: trace.len(), need: MIN_RATE_TRACE });
    }
    rate_from_distances(solution_distances(trace, x_star, y_star, geometry)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    /// Worst `lhs - rhs` over all prefixes and test points.
    pub max_violation: f64,
    pub checked: usize,
}

/// Checks `L(s_K, y) - L(x, y_K) <= (D_psi(x, x0) + D_phi(y, y0)) / sum sigma`
/// for the ergodic iterates of every prefix of the trace.
pub fn ergodic_gap_check(
    problem: &ProblemSpec,
    trace: &Trace,
    test_points: &[(DVector<f64>, DVector<f64>)],
    geometry: &BregmanGeometry,
) -> ErgodicReport {
    let mut xbar = DVector::zeros(problem.n);
    let mut ybar = DVector::zeros(problem.m);
    let mut total = 0.0;
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    let radii: Vec<f64> = test_points
        .iter()
        .map(|(x, y)| {
            geometry.primal.bregman(x, &trace.x0) + geometry.dual.bregman_with_grad(y, &trace.y0, &trace.eta0)
        })
        .collect();
    for r in &trace.records {
        total += r.sigma;
        let w = r.sigma / total;
        xbar = xbar * (1.0 - w) + &r.s * w;
        ybar = ybar * (1.0 - w) + &r.y_next * w;
        for ((x, y), &dist) in test_points.iter().zip(&radii) {
            if !dist.is_finite() {
                continue;
            }
            let lhs = problem.lagrangian(&xbar, y) - problem.lagrangian(x, &ybar);
            if lhs.is_nan() || lhs == f64::NEG_INFINITY {
                continue;
            }
            worst = worst.max(lhs - dist / total);
            checked += 1;
        }
    }
    ErgodicReport { max_violation: worst, checked }
}

/// Per-prefix data of the conic feasibility bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicReport {
    pub objective_gap: Vec<f64>,
    pub infeasibility: Vec<f64>,
    pub bound: Vec<f64>,
    /// `max(objective_gap, infeasibility) - bound` over all prefixes.
    pub max_excess: f64,
}

/// Deterministic points on the part of the sphere of radius `r` inside the
/// nonnegative orthant (or the whole sphere), plus the axes and the origin.
fn sphere_samples(m: usize, r: f64, orthant: bool, count: usize) -> Vec<DVector<f64>> {
    let mut out = vec![DVector::zeros(m)];
    for i in 0..m {
        let mut e = DVector::zeros(m);
        e[i] = r;
        out.push(e.clone());
        if !orthant {
            out.push(-e);
        }
    }
    let golden = 0.618_033_988_749_895_f64;
    for k in 1..=count {
        let mut p = DVector::from_fn(m, |i, _| {
            let t = ((k * (i + 1)) as f64 * golden + 0.37 * i as f64).fract();
            if orthant {
                t
            } else {
                2.0 * t - 1.0
            }
        });
        let nrm = p.norm();
        if nrm > 0.0 {
            p *= r / nrm;
            out.push(p);
        }
    }
    out
}

/// Checks `max(|f(s_K) - f*|, dist(A s_K - b, -C)) <= (D_psi(x*, x0) + max D_phi(y, y0)) / sum sigma`
/// with the max over `C* ∩ B_R`, `R = 2|y*| + 1`, estimated from below by
/// sampling extreme points; the estimate only makes the check stricter.
pub fn conic_feasibility_check(
    problem: &ProblemSpec,
    trace: &Trace,
    x_star: &DVector<f64>,
    y_star: &DVector<f64>,
    geometry: &BregmanGeometry,
) -> Result<ConicReport> {
    let orthant = match problem.g {
        NonsmoothTerm::NonposOrthant => true,
        NonsmoothTerm::ZeroIndicator => false,
        _ => return Err(Error::Unsupported("conic feasibility needs a cone constraint".into())),
    };
    let radius = 2.0 * y_star.norm() + 1.0;
    let dual_max = sphere_samples(problem.m, radius, orthant, 256)
        .iter()
        .map(|y| geometry.dual.bregman_with_grad(y, &trace.y0, &trace.eta0))
        .fold(0.0f64, f64::max);
    let d_primal = geometry.primal.bregman(x_star, &trace.x0);
    if !d_primal.is_finite() || !dual_max.is_finite() {
        return Err(domain("bound is infinite for this reference solution"));
    }
    let f_star = problem.f.value(x_star);
    let mut report =
        ConicReport { objective_gap: vec![], infeasibility: vec![], bound: vec![], max_excess: f64::NEG_INFINITY };
    let mut xbar = DVector::zeros(problem.n);
    let mut total = 0.0;
    for r in &trace.records {
        total += r.sigma;
        let w = r.sigma / total;
        xbar = xbar * (1.0 - w) + &r.s * w;
        let res = problem.map.apply(&xbar);
        let infeas = if orthant { res.map(|v| v.max(0.0)).norm() } else { res.norm() };
        let gap = (problem.f.value(&xbar) - f_star).abs();
        let bound = (d_primal + dual_max) / total;
        report.max_excess = report.max_excess.max(gap.max(infeas) - bound);
        report.objective_gap.push(gap);
        report.infeasibility.push(infeas);
        report.bound.push(bound);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummabilityReport {
    /// Partial sums of `D_Phi(p_k, z_k) = B_k(s_k)`.
    pub partial_sums: Vec<f64>,
    pub bound: f64,
    pub holds: bool,
}

pub const SUMMABILITY_SLACK: f64 = 1e-6;

/// `sum_k B_k(s_k) <= D_Phi(z*, z0) / (1 - max rho) + slack`.
pub fn summability_check(
    trace: &Trace,
    x_star: &DVector<f64>,
    y_star: &DVector<f64>,
    geometry: &BregmanGeometry,
) -> Result<SummabilityReport> {
    let d0 = solution_distances(trace, x_star, y_star, geometry)?[0];
    let rho_max = trace.records.iter().map(|r| r.rho).fold(0.0f64, f64::max);
    let bound = d0 / (1.0 - rho_max) + SUMMABILITY_SLACK;
    let mut acc = 0.0;
    let partial_sums: Vec<f64> = trace
        .records
        .iter()
        .map(|r| {
            acc += r.b;
            acc
        })
        .collect();
    let holds = partial_sums.iter().all(|&s| s <= bound);
    Ok(SummabilityReport { partial_sums, bound, holds })
}

/// Finite-candidate estimate of the restricted gap
/// `sup { <w, z - z'> : (z', w) in gph T, |z'| <= R }`.
///
/// Candidates where the KKT operator is not single-valued are skipped.
pub fn restricted_gap(
    problem: &ProblemSpec,
    x: &DVector<f64>,
    y: &DVector<f64>,
    candidates: &[(DVector<f64>, DVector<f64>)],
    radius: f64,
) -> f64 {
    candidates
        .iter()
        .filter(|(cx, cy)| (cx.norm_squared() + cy.norm_squared()).sqrt() <= radius)
        .filter_map(|(cx, cy)| {
            let (wx, wy) = problem.kkt_operator(cx, cy)?;
            Some(wx.dot(&(x - cx)) + wy.dot(&(y - cy)))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
