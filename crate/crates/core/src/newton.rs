//! Pure Newton iterations on `J_k` and the predicted inner step counts.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::auglag::{StoppingCheck, SubproblemContext};
use crate::error::{Error, Result};
use crate::linalg::spd_solve;
use crate::penalty::PenaltyForm;

/// Gradient norm below which an iterate is accepted regardless of the
/// relative rule.
pub const GRAD_FLOOR: f64 = 1e-12;

/// Fraction of the distance to the boundary a barrier step may cover.
pub const FRACTION_TO_BOUNDARY: f64 = 0.99;

/// Which complexity estimate drives step sizes and predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Qsc,
    QscLipschitz,
    Sc,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Qsc => "qsc",
            Regime::QscLipschitz => "qsc_lipschitz",
            Regime::Sc => "sc",
        }
    }
}

/// Data recorded at one inner iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonRecord {
    pub grad_norm: f64,
    /// `sqrt(<g, H^-1 g>)`; multiply by a modulus for the scaled decrement.
    pub decrement: f64,
    /// Length of the step taken from this iterate; 0 for the last one.
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NewtonTrace {
    pub records: Vec<NewtonRecord>,
    pub iterations_used: usize,
    pub predicted: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct InnerSolve {
    pub s: DVector<f64>,
    pub trace: NewtonTrace,
    pub accepted: bool,
    pub check: StoppingCheck,
}

/// Newton direction `H^-1 g` and the unscaled decrement.
fn direction(ctx: &SubproblemContext<'_>, s: &DVector<f64>, g: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let h = ctx.hess(s)?;
    let d = spd_solve(&h, g)?;
    let dec = g.dot(&d).max(0.0).sqrt();
    Ok((d, dec))
}

/// Moves from `s` along `-d`, shortened to stay strictly inside the domain.
fn take_step(ctx: &SubproblemContext<'_>, s: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
    let neg = -d;
    let reach = ctx.geometry.primal.max_step(s, &neg);
    let mut t = if reach <= 1.0 { FRACTION_TO_BOUNDARY * reach } else { 1.0 };
    let mut next = s + &neg * t;
    // callback objectives may have a smaller domain than psi
    for _ in 0..60 {
        if ctx.value(&next) < f64::INFINITY {
            break;
        }
        t *= 0.5;
        next = s + &neg * t;
    }
    next
}

pub fn newton_step(ctx: &SubproblemContext<'_>, s: &DVector<f64>) -> Result<DVector<f64>> {
    let g = ctx.grad(s)?;
    if g.iter().all(|&v| v == 0.0) {
        return Ok(s.clone());
    }
    let (d, _) = direction(ctx, s, &g)?;
    Ok(take_step(ctx, s, &d))
}

/// `M sqrt(<grad J, hess J^-1 grad J>)`.
pub fn newton_decrement(ctx: &SubproblemContext<'_>, s: &DVector<f64>, modulus: f64) -> Result<f64> {
    let g = ctx.grad(s)?;
    let (_, dec) = direction(ctx, s, &g)?;
    Ok(modulus * dec)
}

/// Pure Newton from `start`, testing the stopping rule before every step.
pub fn solve_subproblem(ctx: &SubproblemContext<'_>, start: &DVector<f64>, cap: usize) -> Result<InnerSolve> {
    let mut s = start.clone();
    let mut trace = NewtonTrace::default();
    let mut t = 0;
    loop {
        let check = ctx.stopping_check(&s)?;
        let grad_norm = check.grad.norm();
        let (d, decrement) = direction(ctx, &s, &check.grad)?;
        let accepted = check.accepted || grad_norm <= GRAD_FLOOR;
        if accepted || t == cap {
            trace.records.push(NewtonRecord { grad_norm, decrement, step_norm: 0.0, accepted });
            trace.iterations_used = t;
            return Ok(InnerSolve { s, trace, accepted, check });
        }
        let next = take_step(ctx, &s, &d);
        let step_norm = (&next - &s).norm();
        trace.records.push(NewtonRecord { grad_norm, decrement, step_norm, accepted: false });
        s = next;
        t += 1;
    }
}

/// `ceil(log2(x))` clamped at zero; `+inf` saturates.
fn ceil_log2(x: f64) -> u32 {
    if x.is_nan() || x <= 1.0 {
        0
    } else if x == f64::INFINITY {
        u32::MAX
    } else {
        x.log2().ceil() as u32
    }
}

/// `ceil(log2 ln(1 / (2 M e^-1 sqrt(2 rho) sqrt(B))))`.
pub fn predict_qsc(m_k: f64, rho: f64, b: f64) -> u32 {
    if m_k == 0.0 {
        return 1;
    }
    let inner = 2.0 * m_k * (-1.0f64).exp() * (2.0 * rho).sqrt() * b.sqrt();
    if inner == 0.0 {
        return u32::MAX;
    }
    ceil_log2((1.0 / inner).ln())
}

/// `ceil(log2(ln(sqrt2 L sigma + sqrt rho) - ln sqrt rho + 1))`.
pub fn predict_qsc_lipschitz(l_k: f64, sigma: f64, rho: f64) -> u32 {
    if rho == 0.0 {
        return u32::MAX;
    }
    let r = rho.sqrt();
    ceil_log2((std::f64::consts::SQRT_2 * l_k * sigma + r).ln() - r.ln() + 1.0)
}

/// `ceil(log2((ln((sigma/M) sqrt(c + 1/sigma)) + max{1/2 ln(1/(2 rho B)), ln(3 M_psi)}) / ln 2))`.
pub fn predict_sc(sigma: f64, m_k: f64, c_sigma: f64, rho: f64, b: f64, m_psi: f64) -> u32 {
    if m_k == 0.0 {
        return 1;
    }
    if rho * b == 0.0 {
        return u32::MAX;
    }
    let scale = ((sigma / m_k) * (c_sigma + 1.0 / sigma).sqrt()).ln();
    let tail = (0.5 * (1.0 / (2.0 * rho * b)).ln()).max((3.0 * m_psi).ln());
    ceil_log2((scale + tail) / std::f64::consts::LN_2)
}

/// Moduli used by the predictions and the step-size rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeModuli {
    /// `M_k`
    pub m_k: f64,
    /// `L_k`, for the Lipschitz variant.
    pub l_k: Option<f64>,
    /// `c(sigma)` and `M_psi`, for the self-concordant variant.
    pub c_sigma: Option<f64>,
    pub m_psi: Option<f64>,
}

/// Collects the moduli the regime needs, or reports which one is missing.
pub fn regime_moduli(ctx: &SubproblemContext<'_>, regime: Regime) -> Result<RegimeModuli> {
    let sigma = ctx.sigma;
    let a_norm = ctx.problem.map.op_norm_bound;
    let f = &ctx.problem.f;
    let pm = ctx.penalty.moduli(sigma);
    let invalid = |msg: &str| Err(Error::InvalidRegime(format!("{}: {msg}", regime.name())));
    match regime {
        Regime::Qsc | Regime::QscLipschitz => {
            let Some(alpha) = pm.alpha else {
                return invalid("the penalty is not quasi self-concordant");
            };
            let m_k = (sigma * alpha * a_norm).max(f.qsc_modulus);
            if regime == Regime::Qsc {
                return Ok(RegimeModuli { m_k, l_k: None, c_sigma: None, m_psi: None });
            }
            let Some(beta) = pm.beta else {
                return invalid("the penalty gradient is not Lipschitz");
            };
            let Some(l_f) = f.lipschitz_modulus else {
                return invalid("the objective has no Lipschitz modulus");
            };
            if !ctx.geometry.primal.is_energy() {
                return invalid("the primal proximal term is not Lipschitz smooth");
            }
            let l_k = l_f + beta * sigma * a_norm * a_norm + 1.0 / sigma;
            Ok(RegimeModuli { m_k, l_k: Some(l_k), c_sigma: None, m_psi: None })
        }
        Regime::Sc => {
            let Some(m_psi) = ctx.geometry.primal.self_concordance() else {
                return invalid("the primal geometry is not self-concordant");
            };
            let Some(m_f) = f.sc_modulus else {
                return invalid("the objective is not self-concordant");
            };
            if ctx.penalty.form != PenaltyForm::HalfSquare {
                return invalid("only the quadratic penalty keeps J_k self-concordant");
            }
            let Some(l_f) = f.lipschitz_modulus else {
                return invalid("the objective has no Lipschitz modulus");
            };
            let m_k = m_f.max(sigma.sqrt() * m_psi);
            let c_sigma = sigma * a_norm * a_norm + l_f;
            Ok(RegimeModuli { m_k, l_k: None, c_sigma: Some(c_sigma), m_psi: Some(m_psi) })
        }
    }
}

/// Predicted Newton steps for the context, given `B_k` at the accepted point.
pub fn predicted_iterations(ctx: &SubproblemContext<'_>, regime: Regime, b: f64) -> Result<u32> {
    let m = regime_moduli(ctx, regime)?;
    Ok(match regime {
        Regime::Qsc => predict_qsc(m.m_k, ctx.rho, b),
        Regime::QscLipschitz => predict_qsc_lipschitz(m.l_k.expect("set for this regime"), ctx.sigma, ctx.rho),
        Regime::Sc => predict_sc(
            ctx.sigma,
            m.m_k,
            m.c_sigma.expect("set for this regime"),
            ctx.rho,
            b,
            m.m_psi.expect("set for this regime"),
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::{BregmanGeometry, LegendreFunction};
    use crate::linalg::SparseMatrix;
    use crate::penalty::DualPenalty;
    use crate::problem::{AffineMap, NonsmoothTerm, ProblemSpec, SmoothObjective};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn eq_qp() -> (ProblemSpec, BregmanGeometry, DualPenalty) {
        let f = SmoothObjective::quadratic(SparseMatrix::identity(1), v(&[0.0])).unwrap();
        let map = AffineMap::new(SparseMatrix::identity(1), v(&[1.0])).unwrap();
        let p = ProblemSpec::new(f, NonsmoothTerm::ZeroIndicator, map).unwrap();
        let geo = BregmanGeometry::new(LegendreFunction::energy(1), LegendreFunction::energy(1));
        let pen = DualPenalty::new(NonsmoothTerm::ZeroIndicator, &geo.dual).unwrap();
        (p, geo, pen)
    }

    #[test]
    fn one_step_is_exact_on_quadratics() {
        let (p, geo, pen) = eq_qp();
        let ctx = SubproblemContext::new(&p, &geo, &pen, v(&[0.0]), v(&[0.0]), None, 1.0, 0.5).unwrap();
        let s = newton_step(&ctx, &v(&[5.0])).unwrap();
        assert!((s[0] - 1.0 / 3.0).abs() < 1e-14);
        let again = newton_step(&ctx, &v(&[1.0 / 3.0])).unwrap();
        assert!((again[0] - 1.0 / 3.0).abs() < 1e-15);

        let out = solve_subproblem(&ctx, &v(&[0.0]), 50).unwrap();
        assert!(out.accepted);
        assert_eq!(out.trace.iterations_used, 1);
    }

    #[test]
    fn decrement_of_a_scalar_quadratic() {
        // J = 3/2 s^2 at s = 1 when x_k = 0, y_k = 0 and b = 0, sigma = 1
        let f = SmoothObjective::quadratic(SparseMatrix::identity(1), v(&[0.0])).unwrap();
        let map = AffineMap::new(SparseMatrix::identity(1), v(&[0.0])).unwrap();
        let p = ProblemSpec::new(f, NonsmoothTerm::ZeroIndicator, map).unwrap();
        let geo = BregmanGeometry::new(LegendreFunction::energy(1), LegendreFunction::energy(1));
        let pen = DualPenalty::new(NonsmoothTerm::ZeroIndicator, &geo.dual).unwrap();
        let ctx = SubproblemContext::new(&p, &geo, &pen, v(&[0.0]), v(&[0.0]), None, 1.0, 0.5).unwrap();
        let d1 = newton_decrement(&ctx, &v(&[1.0]), 1.0).unwrap();
        assert!((d1 - 3f64.sqrt()).abs() < 1e-14);
        let d2 = newton_decrement(&ctx, &v(&[1.0]), 2.0).unwrap();
        assert_eq!(d2, 2.0 * d1);
        assert_eq!(newton_decrement(&ctx, &v(&[0.0]), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn cap_zero_returns_start() {
        let (p, geo, pen) = eq_qp();
        let ctx = SubproblemContext::new(&p, &geo, &pen, v(&[0.0]), v(&[0.0]), None, 1.0, 0.5).unwrap();
        let out = solve_subproblem(&ctx, &v(&[0.0]), 0).unwrap();
        assert!(!out.accepted);
        assert_eq!(out.s, v(&[0.0]));
        assert_eq!(out.trace.iterations_used, 0);
    }

    #[test]
    fn predictions() {
        assert_eq!(predict_qsc(1.0, 1e-4, 1e-4), 4);
        assert_eq!(predict_qsc_lipschitz(1.0, 1.0, 0.25), 2);
        assert_eq!(predict_qsc(1.0, 0.5, 10.0), 0);
        assert_eq!(predict_qsc(1.0, 0.0, 1.0), u32::MAX);
        assert_eq!(predict_qsc(0.0, 0.5, 1.0), 1);
    }

    #[test]
    fn missing_moduli_are_invalid_regimes() {
        let f = SmoothObjective::quadratic(SparseMatrix::identity(1), v(&[0.0])).unwrap();
        let map = AffineMap::new(SparseMatrix::identity(1), v(&[1.0])).unwrap();
        let p = ProblemSpec::new(f, NonsmoothTerm::NonposOrthant, map).unwrap();
        let geo = BregmanGeometry::new(LegendreFunction::energy(1), LegendreFunction::von_neumann(1));
        let pen = DualPenalty::new(NonsmoothTerm::NonposOrthant, &geo.dual).unwrap();
        let ctx = SubproblemContext::new(&p, &geo, &pen, v(&[0.0]), v(&[1.0]), None, 1.0, 0.5).unwrap();
        assert!(matches!(predicted_iterations(&ctx, Regime::QscLipschitz, 1.0), Err(Error::InvalidRegime(_))));
        assert!(matches!(predicted_iterations(&ctx, Regime::Sc, 1.0), Err(Error::InvalidRegime(_))));
        assert!(predicted_iterations(&ctx, Regime::Qsc, 1.0).is_ok());
    }
}
