#![allow(dead_code)]

use std::sync::OnceLock;

use bpalm::auglag::SubproblemContext;
use bpalm::oracle::{golden_suite, GoldenFamily, GoldenProblem};
use bpalm::{solve, BregmanGeometry, DualPenalty, SolveReport};
use nalgebra::DVector;
use proptest::prelude::*;

pub struct Case {
    pub gp: GoldenProblem,
    pub geometry: BregmanGeometry,
    pub penalty: DualPenalty,
}

pub fn cases() -> &'static [Case] {
    static CASES: OnceLock<Vec<Case>> = OnceLock::new();
    CASES.get_or_init(|| {
        golden_suite()
            .into_iter()
            .map(|gp| {
                let geometry = gp.geometry();
                let penalty = DualPenalty::new(gp.spec.g, &geometry.dual).unwrap();
                Case { gp, geometry, penalty }
            })
            .collect()
    })
}

/// Interior primal point from numbers in `(0, 1)`.
pub fn primal_point(case: &Case, t: &[f64]) -> DVector<f64> {
    DVector::from_fn(case.gp.spec.n, |i, _| {
        let ti = t[i % t.len()];
        match &case.gp.bounds {
            Some((l, u)) => l[i] + (u[i] - l[i]) * (0.02 + 0.96 * ti),
            None => 4.0 * ti - 2.0,
        }
    })
}

/// Interior dual point from numbers in `(0, 1)`.
pub fn dual_point(case: &Case, t: &[f64]) -> DVector<f64> {
    let m = case.gp.spec.m;
    let raw = DVector::from_fn(m, |i, _| t[(i + 5) % t.len()]);
    if case.geometry.dual.is_energy() {
        raw.map(|v| 4.0 * v - 2.0)
    } else if case.gp.family == GoldenFamily::VecMax {
        let y = raw.map(|v| 0.05 + v);
        let total = y.sum();
        y / total
    } else {
        raw.map(|v| (-3.0 + 5.0 * v).exp())
    }
}

pub fn unit() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, 24)
}

pub fn context<'a>(case: &'a Case, a: &[f64], sigma: f64, rho: f64) -> SubproblemContext<'a> {
    let x_k = primal_point(case, a);
    let y_k = dual_point(case, a);
    SubproblemContext::new(&case.gp.spec, &case.geometry, &case.penalty, x_k, y_k, None, sigma, rho).unwrap()
}

/// Every golden problem solved with its default configuration.
pub fn solved() -> &'static [(GoldenProblem, SolveReport)] {
    static RUNS: OnceLock<Vec<(GoldenProblem, SolveReport)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        golden_suite()
            .into_iter()
            .map(|gp| {
                let report = solve(&gp.spec, &gp.config()).unwrap();
                (gp, report)
            })
            .collect()
    })
}
