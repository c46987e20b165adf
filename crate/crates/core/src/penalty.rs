//! Marginalized dual penalties `P = phi* infconv (sigma * g)`.
//!
//! For every supported pairing of a nonsmooth term `g` with a dual Legendre
//! function `phi` the penalty has a closed form, and its gradient is the
//! multiplier update `y+ = grad P(grad phi(y) + sigma (A s - b))`. All
//! catalog entries pair positively homogeneous `g` with the conjugate
//! structure, so the closed forms do not depend on `sigma`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::legendre::{LegendreFunction, LegendreKind};
use crate::problem::NonsmoothTerm;
use crate::special::{logsumexp, sigmoid, softplus, softplus_integral};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PenaltyForm {
    /// `sum exp(u_i)`
    SumExp,
    /// `ln sum exp(u_i) + 1`
    LogSumExpPlusOne,
    /// `sum -Li2(-exp(u_i))`
    SoftplusIntegral,
    /// `1/2 |u|^2`
    HalfSquare,
    /// `1/2 |max(u, 0)|^2`
    MaxHalfSquare,
    /// Huber function with unit threshold.
    Huber,
}

/// Generalized self-concordance data of a penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyModuli {
    /// Quasi self-concordance modulus. `None` for the piecewise quadratic
    /// forms, whose Hessian jumps across the kinks.
    pub alpha: Option<f64>,
    /// Lipschitz constant of the gradient, when finite.
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPenalty {
    pub g: NonsmoothTerm,
    pub dual: LegendreKind,
    pub form: PenaltyForm,
}

impl DualPenalty {
    /// Looks up the closed form for `(g, phi)`; only uniform dual kinds are
    /// accepted.
    pub fn new(g: NonsmoothTerm, dual: &LegendreFunction) -> Result<Self> {
        let kind = dual.kind().clone();
        let form = match (g, &kind) {
            (NonsmoothTerm::NonposOrthant, LegendreKind::VonNeumann) => PenaltyForm::SumExp,
            (NonsmoothTerm::VecMax, LegendreKind::VonNeumann) => PenaltyForm::LogSumExpPlusOne,
            (NonsmoothTerm::NonposOrthant, LegendreKind::Spence) => PenaltyForm::SoftplusIntegral,
            (NonsmoothTerm::ZeroIndicator, LegendreKind::Energy) => PenaltyForm::HalfSquare,
            (NonsmoothTerm::NonposOrthant, LegendreKind::Energy) => PenaltyForm::MaxHalfSquare,
            (NonsmoothTerm::OneNorm, LegendreKind::Energy) => PenaltyForm::Huber,
            _ => {
                return Err(Error::Unsupported(format!(
                    "no closed-form penalty for g = {} with dual geometry {kind:?}",
                    g.name()
                )))
            }
        };
        Ok(Self { g, dual: kind, form })
    }

    pub fn value(&self, u: &DVector<f64>) -> f64 {
        match self.form {
            PenaltyForm::SumExp => u.iter().map(|v| v.exp()).sum(),
            PenaltyForm::LogSumExpPlusOne => logsumexp(u.as_slice()) + 1.0,
            PenaltyForm::SoftplusIntegral => u.iter().map(|&v| softplus_integral(v)).sum(),
            PenaltyForm::HalfSquare => 0.5 * u.norm_squared(),
            PenaltyForm::MaxHalfSquare => 0.5 * u.iter().map(|&v| v.max(0.0).powi(2)).sum::<f64>(),
            PenaltyForm::Huber => u.iter().map(|&v| if v.abs() <= 1.0 { 0.5 * v * v } else { v.abs() - 0.5 }).sum(),
        }
    }

    /// The multiplier update map.
    pub fn grad(&self, u: &DVector<f64>) -> DVector<f64> {
        match self.form {
            PenaltyForm::SumExp => u.map(f64::exp),
            PenaltyForm::LogSumExpPlusOne => softmax(u),
            PenaltyForm::SoftplusIntegral => u.map(softplus),
            PenaltyForm::HalfSquare => u.clone(),
            PenaltyForm::MaxHalfSquare => u.map(|v| v.max(0.0)),
            PenaltyForm::Huber => u.map(|v| v.clamp(-1.0, 1.0)),
        }
    }

    /// `grad phi(grad P(u))`, computed without forming `grad P(u)` where that
    /// would underflow.
    pub fn mirror(&self, u: &DVector<f64>) -> DVector<f64> {
        match self.form {
            PenaltyForm::SumExp | PenaltyForm::SoftplusIntegral => u.clone(),
            PenaltyForm::LogSumExpPlusOne => {
                let lse = logsumexp(u.as_slice());
                u.map(|v| v - lse)
            }
            PenaltyForm::HalfSquare | PenaltyForm::MaxHalfSquare | PenaltyForm::Huber => self.grad(u),
        }
    }

    /// Second derivative; kinks take the active value 1.
    pub fn hess(&self, u: &DVector<f64>) -> DMatrix<f64> {
        match self.form {
            PenaltyForm::SumExp => DMatrix::from_diagonal(&u.map(f64::exp)),
            PenaltyForm::LogSumExpPlusOne => {
                let s = softmax(u);
                DMatrix::from_diagonal(&s) - &s * s.transpose()
            }
            PenaltyForm::SoftplusIntegral => DMatrix::from_diagonal(&u.map(sigmoid)),
            PenaltyForm::HalfSquare => DMatrix::identity(u.len(), u.len()),
            PenaltyForm::MaxHalfSquare => DMatrix::from_diagonal(&u.map(|v| if v >= 0.0 { 1.0 } else { 0.0 })),
            PenaltyForm::Huber => DMatrix::from_diagonal(&u.map(|v| if v.abs() <= 1.0 { 1.0 } else { 0.0 })),
        }
    }

    /// The Hessian as `diag(d) - w w^T`; only the softmax form has a rank-one part.
    pub fn hess_parts(&self, u: &DVector<f64>) -> (DVector<f64>, Option<DVector<f64>>) {
        match self.form {
            PenaltyForm::LogSumExpPlusOne => {
                let s = softmax(u);
                (s.clone(), Some(s))
            }
            _ => (self.hess(u).diagonal(), None),
        }
    }

    /// Bare moduli of `P`; the factor `sigma |A|` of the composition is
    /// applied by the caller.
    pub fn moduli(&self, _sigma: f64) -> PenaltyModuli {
        let (alpha, beta) = match self.form {
            PenaltyForm::SumExp => (Some(1.0), None),
            PenaltyForm::LogSumExpPlusOne => (Some(2.0), Some(1.0)),
            PenaltyForm::SoftplusIntegral => (Some(1.0), Some(1.0)),
            PenaltyForm::HalfSquare => (Some(0.0), Some(1.0)),
            PenaltyForm::MaxHalfSquare | PenaltyForm::Huber => (None, Some(1.0)),
        };
        PenaltyModuli { alpha, beta }
    }

    /// Whether the update map keeps multipliers nonnegative.
    pub fn is_orthant(&self) -> bool {
        self.g == NonsmoothTerm::NonposOrthant
    }
}

/// Softmax with max shifting.
pub fn softmax(u: &DVector<f64>) -> DVector<f64> {
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = u.map(|v| (v - max).exp());
    let total = e.sum();
    e / total
}
