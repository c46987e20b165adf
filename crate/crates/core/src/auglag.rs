//! The smooth subproblem of one outer iteration.
//!
//! With `eta_k = grad phi(y_k)` and `u(s) = eta_k + sigma (A s - b)`,
//!
//! ```text
//! J_k(s) = f(s) + P(u(s)) / sigma + D_psi(s, x_k) / sigma
//! ```
//!
//! The constant `-phi*(eta_k) / sigma` is left out of `J_k`; it shifts values
//! only. A point `s` is accepted when `D_psi(s, x+(s)) <= rho B_k(s)` with
//! `x+(s) = grad psi*(grad psi(s) - sigma grad J_k(s))`.

use nalgebra::{DMatrix, DVector};

use crate::error::{dimension, domain, Result};
use crate::legendre::BregmanGeometry;
use crate::penalty::DualPenalty;
use crate::problem::ProblemSpec;

/// Frozen state of one outer iteration.
#[derive(Debug, Clone)]
pub struct SubproblemContext<'a> {
    pub problem: &'a ProblemSpec,
    pub geometry: &'a BregmanGeometry,
    pub penalty: &'a DualPenalty,
    pub x_k: DVector<f64>,
    pub y_k: DVector<f64>,
    /// `grad phi(y_k)`, kept separately so that multipliers which underflow
    /// to zero keep an exact mirror coordinate.
    pub eta_k: DVector<f64>,
    pub sigma: f64,
    pub rho: f64,
    grad_psi_xk: DVector<f64>,
}

/// Outcome of the relative stopping test at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingCheck {
    pub accepted: bool,
    /// `D_psi(s, x+(s))`
    pub lhs: f64,
    /// `rho B_k(s)`
    pub rhs: f64,
    pub b: f64,
    pub x_plus: DVector<f64>,
    pub grad: DVector<f64>,
    pub y_plus: DVector<f64>,
    pub eta_plus: DVector<f64>,
    /// The corrected point left the interior of `dom psi*`.
    pub domain_violation: bool,
}

impl<'a> SubproblemContext<'a> {
    /// Builds the context; `eta_k` defaults to `grad phi(y_k)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        problem: &'a ProblemSpec,
        geometry: &'a BregmanGeometry,
        penalty: &'a DualPenalty,
        x_k: DVector<f64>,
        y_k: DVector<f64>,
        eta_k: Option<DVector<f64>>,
        sigma: f64,
        rho: f64,
    ) -> Result<Self> {
        if x_k.len() != problem.n || y_k.len() != problem.m {
            return Err(dimension("anchor lengths do not match the problem"));
        }
        if geometry.primal.dim() != problem.n || geometry.dual.dim() != problem.m {
            return Err(dimension("geometry dimensions do not match the problem"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(domain(format!("step size must be positive, got {sigma}")));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(domain(format!("relative error must lie in [0, 1), got {rho}")));
        }
        let grad_psi_xk = geometry.primal.grad(&x_k)?;
        let eta_k = match eta_k {
            Some(eta) if eta.len() == problem.m && eta.iter().all(|v| v.is_finite()) => eta,
            Some(_) => return Err(domain("mirror coordinate of the multiplier is not finite")),
            None => geometry.dual.grad(&y_k)?,
        };
        Ok(Self { problem, geometry, penalty, x_k, y_k, eta_k, sigma, rho, grad_psi_xk })
    }

    /// `u(s) = eta_k + sigma (A s - b)`
    pub fn shifted(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.eta_k + self.problem.map.apply(s) * self.sigma
    }

    /// `y+(s)`, the exact dual update at `s`.
    pub fn y_plus(&self, s: &DVector<f64>) -> DVector<f64> {
        self.penalty.grad(&self.shifted(s))
    }

    fn interior(&self, s: &DVector<f64>) -> bool {
        s.len() == self.problem.n && self.geometry.primal.in_interior(s) && self.problem.f.in_domain_interior(s)
    }

    fn require_interior(&self, s: &DVector<f64>) -> Result<()> {
        if self.interior(s) {
            Ok(())
        } else {
            Err(domain("subproblem point outside int dom f and int dom psi"))
        }
    }

    pub fn value(&self, s: &DVector<f64>) -> f64 {
        if !self.interior(s) {
            return f64::INFINITY;
        }
        let fs = self.problem.f.value(s);
        let pen = self.penalty.value(&self.shifted(s));
        let prox = self.geometry.primal.bregman_with_grad(s, &self.x_k, &self.grad_psi_xk);
        fs + (pen + prox) / self.sigma
    }

    pub fn grad(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        self.require_interior(s)?;
        self.grad_with(s, &self.y_plus(s))
    }

    fn grad_with(&self, s: &DVector<f64>, y_plus: &DVector<f64>) -> Result<DVector<f64>> {
        let prox = (self.geometry.primal.grad(s)? - &self.grad_psi_xk) / self.sigma;
        Ok(self.problem.f.gradient(s) + self.problem.map.a.tr_mul_vec(y_plus) + prox)
    }

    pub fn hess(&self, s: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.require_interior(s)?;
        let a = &self.problem.map.a;
        let (d, rank_one) = self.penalty.hess_parts(&self.shifted(s));
        let mut h = self.problem.f.hessian(s) + a.weighted_gram(&d) * self.sigma;
        if let Some(w) = rank_one {
            let atw = a.tr_mul_vec(&w);
            h -= &atw * atw.transpose() * self.sigma;
        }
        let psi = self.geometry.primal.hess_diag(s)?;
        for i in 0..h.nrows() {
            h[(i, i)] += psi[i] / self.sigma;
        }
        Ok(h)
    }

    /// `B_k(s) = D_psi(s, x_k) + D_phi(y+(s), y_k)`.
    pub fn b_measure(&self, s: &DVector<f64>) -> Result<f64> {
        self.require_interior(s)?;
        Ok(self.b_with(s, &self.y_plus(s)))
    }

    fn b_with(&self, s: &DVector<f64>, y_plus: &DVector<f64>) -> f64 {
        self.geometry.primal.bregman_with_grad(s, &self.x_k, &self.grad_psi_xk)
            + self.geometry.dual.bregman_with_grad(y_plus, &self.y_k, &self.eta_k)
    }

    pub fn stopping_check(&self, s: &DVector<f64>) -> Result<StoppingCheck> {
        self.require_interior(s)?;
        let u = self.shifted(s);
        let y_plus = self.penalty.grad(&u);
        let eta_plus = self.penalty.mirror(&u);
        let grad = self.grad_with(s, &y_plus)?;
        let b = self.b_with(s, &y_plus);
        let rhs = self.rho * b;
        let psi = &self.geometry.primal;
        let (x_plus, lhs, domain_violation) = if psi.is_energy() {
            let step = &grad * self.sigma;
            let lhs = 0.5 * step.norm_squared();
            (s - step, lhs, false)
        } else {
            let t = psi.grad(s)? - &grad * self.sigma;
            if psi.in_conj_interior(&t) {
                let x_plus = psi.conj_grad_near(&t, s)?;
                let lhs = psi.bregman(s, &x_plus);
                (x_plus, lhs, false)
            } else {
                (s.clone(), f64::INFINITY, true)
            }
        };
        let accepted = !domain_violation && lhs <= rhs;
        Ok(StoppingCheck { accepted, lhs, rhs, b, x_plus, grad, y_plus, eta_plus, domain_violation })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::LegendreFunction;
    use crate::linalg::SparseMatrix;
    use crate::problem::{AffineMap, NonsmoothTerm, SmoothObjective};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    /// min 1/2 x^2 s.t. x = 1 with energy geometry on both sides.
    fn eq_qp() -> (ProblemSpec, BregmanGeometry, DualPenalty) {
        let f = SmoothObjective::quadratic(SparseMatrix::identity(1), v(&[0.0])).unwrap();
        let map = AffineMap::new(SparseMatrix::identity(1), v(&[1.0])).unwrap();
        let p = ProblemSpec::new(f, NonsmoothTerm::ZeroIndicator, map).unwrap();
        let geo = BregmanGeometry::new(LegendreFunction::energy(1), LegendreFunction::energy(1));
        let pen = DualPenalty::new(NonsmoothTerm::ZeroIndicator, &geo.dual).unwrap();
        (p, geo, pen)
    }

    #[test]
    fn values_gradients_hessians() {
        let (p, geo, pen) = eq_qp();
        let ctx = SubproblemContext::new(&p, &geo, &pen, v(&[0.0]), v(&[0.0]), None, 1.0, 0.5).unwrap();
        assert!((ctx.value(&v(&[0.0])) - 0.5).abs() < 1e-15);
        assert!((ctx.grad(&v(&[0.0])).unwrap()[0] + 1.0).abs() < 1e-15);
        assert!(ctx.grad(&v(&[1.0 / 3.0])).unwrap()[0].abs() < 1e-12);
        assert!((ctx.hess(&v(&[0.7])).unwrap()[(0, 0)] - 3.0).abs() < 1e-15);
        let b = ctx.b_measure(&v(&[1.0 / 3.0])).unwrap();
        assert!((b - 5.0 / 18.0).abs() < 1e-14);
    }

    #[test]
    fn value_at_anchor_has_no_prox_term() {
        let (p, geo, pen) = eq_qp();
        let ctx = SubproblemContext::new(&p, &geo, &pen, v(&[0.4]), v(&[0.2]), None, 2.0, 0.5).unwrap();
        let expected = 0.5 * 0.16 + pen.value(&ctx.shifted(&v(&[0.4]))) / 2.0;
        assert!((ctx.value(&v(&[0.4])) - expected).abs() < 1e-15);
    }

    #[test]
    fn stopping_rule() {
        let (p, geo, pen) = eq_qp();
        let ctx = SubproblemContext::new(&p, &geo, &pen, v(&[0.0]), v(&[0.0]), None, 1.0, 0.5).unwrap();
        let exact = ctx.stopping_check(&v(&[1.0 / 3.0])).unwrap();
        assert!(exact.accepted);
        assert!(exact.lhs < 1e-30);
        assert!((exact.x_plus[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((exact.y_plus[0] + 2.0 / 3.0).abs() < 1e-15);

        let strict = SubproblemContext::new(&p, &geo, &pen, v(&[0.0]), v(&[0.0]), None, 1.0, 0.0).unwrap();
        assert!(!strict.stopping_check(&v(&[0.3])).unwrap().accepted);

        // energy shortcut agrees with the Bregman form
        let chk = ctx.stopping_check(&v(&[0.2])).unwrap();
        let g = chk.grad[0];
        assert!((chk.lhs - 0.5 * g * g).abs() < 1e-15);
        assert!((chk.lhs - geo.primal.bregman(&v(&[0.2]), &chk.x_plus)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        let (p, geo, pen) = eq_qp();
        assert!(SubproblemContext::new(&p, &geo, &pen, v(&[0.0]), v(&[0.0]), None, 0.0, 0.5).is_err());
        assert!(SubproblemContext::new(&p, &geo, &pen, v(&[0.0]), v(&[0.0]), None, 1.0, 1.0).is_err());
        assert!(SubproblemContext::new(&p, &geo, &pen, v(&[0.0, 1.0]), v(&[0.0]), None, 1.0, 0.5).is_err());
    }

    #[test]
    fn softplus_hessian_contribution() {
        // f = 0, A = [1], b = 0, spence dual at y with grad phi(y) = 0
        let f = SmoothObjective::quadratic(SparseMatrix::zeros(1, 1), v(&[0.0])).unwrap();
        let map = AffineMap::new(SparseMatrix::identity(1), v(&[0.0])).unwrap();
        let p = ProblemSpec::new(f, NonsmoothTerm::NonposOrthant, map).unwrap();
        let geo = BregmanGeometry::new(LegendreFunction::energy(1), LegendreFunction::spence(1));
        let pen = DualPenalty::new(NonsmoothTerm::NonposOrthant, &geo.dual).unwrap();
        let y = v(&[2f64.ln()]);
        let ctx = SubproblemContext::new(&p, &geo, &pen, v(&[0.0]), y, None, 2.0, 0.5).unwrap();
        let h = ctx.hess(&v(&[0.0])).unwrap()[(0, 0)];
        assert!((h - (2.0 * 0.5 + 0.5)).abs() < 1e-14);
    }
}
