//! The composite problem `min f(x) + g(Ax - b)`, its Lagrangian and KKT residuals.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dimension, domain, Error, Result};
use crate::linalg::SparseMatrix;

/// Slack used when testing membership in `dom g*` for multipliers produced
/// in floating point (softmax weights summing to `1 +- eps`, for instance).
pub const CONJ_DOMAIN_TOL: f64 = 1e-10;

/// User-supplied smooth objective.
///
/// Implementations must be pure and re-entrant; the solver may evaluate
/// several problems concurrently.
pub trait SmoothFunction: Send + Sync + fmt::Debug {
    /// `f(x)`, `+inf` outside the domain.
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Symmetric positive semidefinite Hessian.
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn in_domain_interior(&self, _x: &DVector<f64>) -> bool {
        true
    }
    /// `f*(w)`, if the implementation knows it.
    fn conjugate(&self, _w: &DVector<f64>) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone)]
pub enum SmoothKind {
    /// `1/2 x^T W x + c^T x` with `W` symmetric PSD.
    Quadratic {
        w: SparseMatrix,
        c: DVector<f64>,
    },
    Callback(Arc<dyn SmoothFunction>),
}

/// The smooth part `f` together with its generalized self-concordance data.
#[derive(Debug, Clone)]
pub struct SmoothObjective {
    pub kind: SmoothKind,
    /// Quasi self-concordance modulus `M_f`.
    pub qsc_modulus: f64,
    /// Lipschitz constant of the gradient, when known.
    pub lipschitz_modulus: Option<f64>,
    /// Self-concordance constant, when `f` is self-concordant.
    pub sc_modulus: Option<f64>,
}

impl SmoothObjective {
    pub fn quadratic(w: SparseMatrix, c: DVector<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() || w.nrows() != c.len() {
            return Err(dimension(format!(
                "quadratic term is {}x{} with a linear term of length {}",
                w.nrows(),
                w.ncols(),
                c.len()
            )));
        }
        if !w.is_symmetric(1e-12 * (1.0 + w.to_dense().amax())) {
            return Err(domain("quadratic term must be symmetric"));
        }
        let lipschitz = w.op_norm();
        Ok(Self {
            kind: SmoothKind::Quadratic { w, c },
            qsc_modulus: 0.0,
            lipschitz_modulus: Some(lipschitz),
            sc_modulus: Some(0.0),
        })
    }

    pub fn callback(
        f: Arc<dyn SmoothFunction>,
        qsc_modulus: f64,
        lipschitz_modulus: Option<f64>,
        sc_modulus: Option<f64>,
    ) -> Self {
        Self { kind: SmoothKind::Callback(f), qsc_modulus, lipschitz_modulus, sc_modulus }
    }

    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            SmoothKind::Quadratic { c, .. } => Some(c.len()),
            SmoothKind::Callback(_) => None,
        }
    }

    pub fn in_domain_interior(&self, x: &DVector<f64>) -> bool {
        match &self.kind {
            SmoothKind::Quadratic { .. } => x.iter().all(|v| v.is_finite()),
            SmoothKind::Callback(f) => f.in_domain_interior(x),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match &self.kind {
            SmoothKind::Quadratic { w, c } => 0.5 * x.dot(&w.mul_vec(x)) + c.dot(x),
            SmoothKind::Callback(f) => f.value(x),
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            SmoothKind::Quadratic { w, c } => w.mul_vec(x) + c,
            SmoothKind::Callback(f) => f.gradient(x),
        }
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.kind {
            SmoothKind::Quadratic { w, .. } => w.to_dense(),
            SmoothKind::Callback(f) => f.hessian(x),
        }
    }

    /// `f*(w)`. Quadratics need a positive-definite `W`.
    pub fn conjugate(&self, v: &DVector<f64>) -> Result<f64> {
        match &self.kind {
            SmoothKind::Quadratic { w, c } => {
                let chol = w
                    .to_dense()
                    .cholesky()
                    .ok_or_else(|| Error::Unsupported("conjugate of a quadratic with singular W".into()))?;
                let r = v - c;
                Ok(0.5 * r.dot(&chol.solve(&r)))
            }
            SmoothKind::Callback(f) => {
                f.conjugate(v).ok_or_else(|| Error::Unsupported("callback objective has no conjugate evaluator".into()))
            }
        }
    }
}

/// The nonsmooth outer function `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NonsmoothTerm {
    /// `g = indicator{0}`: equality constraints `Ax = b`.
    ZeroIndicator,
    /// `g = indicator of the nonpositive orthant`: `Ax <= b`.
    NonposOrthant,
    /// `g(u) = max_i u_i`.
    VecMax,
    /// `g(u) = |u|_1`.
    OneNorm,
}

impl NonsmoothTerm {
    pub fn value(&self, u: &DVector<f64>) -> f64 {
        match self {
            NonsmoothTerm::ZeroIndicator => {
                if u.iter().all(|&v| v == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            NonsmoothTerm::NonposOrthant => {
                if u.iter().all(|&v| v <= 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            NonsmoothTerm::VecMax => u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            NonsmoothTerm::OneNorm => u.iter().map(|v| v.abs()).sum(),
        }
    }

    /// Distance from `y` to `dom g*` (Euclidean).
    pub fn conj_domain_distance(&self, y: &DVector<f64>) -> f64 {
        match self {
            NonsmoothTerm::ZeroIndicator => 0.0,
            NonsmoothTerm::NonposOrthant => y.iter().map(|&v| v.min(0.0).powi(2)).sum::<f64>().sqrt(),
            NonsmoothTerm::VecMax => (y - project_simplex(y)).norm(),
            NonsmoothTerm::OneNorm => y.iter().map(|&v| (v.abs() - 1.0).max(0.0).powi(2)).sum::<f64>().sqrt(),
        }
    }

    /// `g*(y)`: zero on its domain (up to [`CONJ_DOMAIN_TOL`]), `+inf` elsewhere.
    pub fn conj_value(&self, y: &DVector<f64>) -> f64 {
        if self.conj_domain_distance(y) <= CONJ_DOMAIN_TOL {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NonsmoothTerm::ZeroIndicator => "zero_indicator",
            NonsmoothTerm::NonposOrthant => "nonpos_orthant",
            NonsmoothTerm::VecMax => "vecmax",
            NonsmoothTerm::OneNorm => "one_norm",
        }
    }
}

/// Euclidean projection onto the unit simplex.
pub fn project_simplex(y: &DVector<f64>) -> DVector<f64> {
    let mut sorted: Vec<f64> = y.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if v - t > 0.0 {
            tau = t;
        }
    }
    y.map(|v| (v - tau).max(0.0))
}

/// `x -> Ax - b` with a cached bound on `|A|`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub a: SparseMatrix,
    pub b: DVector<f64>,
    pub op_norm_bound: f64,
}

impl AffineMap {
    pub fn new(a: SparseMatrix, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(dimension(format!("A has {} rows but b has length {}", a.nrows(), b.len())));
        }
        let op_norm_bound = a.op_norm();
        Ok(Self { a, b, op_norm_bound })
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.a.mul_vec(x) - &self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub dual_res: f64,
    pub primal_res: f64,
    pub compl_res: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.dual_res.max(self.primal_res).max(self.compl_res)
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub f: SmoothObjective,
    pub g: NonsmoothTerm,
    pub map: AffineMap,
    pub n: usize,
    pub m: usize,
}

impl ProblemSpec {
    pub fn new(f: SmoothObjective, g: NonsmoothTerm, map: AffineMap) -> Result<Self> {
        let n = map.a.ncols();
        let m = map.a.nrows();
        if let Some(fd) = f.dim() {
            if fd != n {
                return Err(dimension(format!("objective has dimension {fd} but A has {n} columns")));
            }
        }
        Ok(Self { f, g, map, n, m })
    }

    /// `f(x) + g(Ax - b)`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        if !self.f.in_domain_interior(x) {
            return f64::INFINITY;
        }
        self.f.value(x) + self.g.value(&self.map.apply(x))
    }

    /// `L(x, y) = f(x) + <Ax - b, y> - g*(y)`.
    pub fn lagrangian(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        if x.len() != self.n || y.len() != self.m || !self.f.in_domain_interior(x) {
            return f64::INFINITY;
        }
        let fx = self.f.value(x);
        if fx == f64::INFINITY {
            return f64::INFINITY;
        }
        if self.g.conj_value(y) == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        fx + self.map.apply(x).dot(y)
    }

    pub fn kkt_residuals(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<KktResiduals> {
        self.kkt_residuals_within(x, y, None)
    }

    /// Residuals for the problem with `x` additionally restricted to the box
    /// `[l, u]`; the dual residual becomes the natural-map residual
    /// `|x - P(x - grad_x L)|`.
    pub fn kkt_residuals_within(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        bounds: Option<(&DVector<f64>, &DVector<f64>)>,
    ) -> Result<KktResiduals> {
        if x.len() != self.n || y.len() != self.m {
            return Err(dimension("iterate lengths do not match the problem"));
        }
        if !self.f.in_domain_interior(x) {
            return Err(domain("x is not in the interior of dom f"));
        }
        let dist = self.g.conj_domain_distance(y);
        if dist > CONJ_DOMAIN_TOL {
            return Err(domain(format!("y is {dist:e} away from dom g*")));
        }
        let r = self.map.apply(x);
        let grad_l = self.f.gradient(x) + self.map.a.tr_mul_vec(y);
        let dual_res = match bounds {
            None => grad_l.norm(),
            Some((l, u)) => {
                if l.len() != self.n || u.len() != self.n {
                    return Err(dimension("bound lengths do not match the problem"));
                }
                let mut acc = 0.0;
                for i in 0..self.n {
                    let p = (x[i] - grad_l[i]).max(l[i]).min(u[i]);
                    acc += (x[i] - p).powi(2);
                }
                acc.sqrt()
            }
        };
        let (primal_res, compl_res) = match self.g {
            NonsmoothTerm::ZeroIndicator => (r.norm(), 0.0),
            NonsmoothTerm::NonposOrthant => (r.map(|v| v.max(0.0)).norm(), y.dot(&r).abs()),
            NonsmoothTerm::VecMax => {
                let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (dist + (max - y.dot(&r)).max(0.0), 0.0)
            }
            NonsmoothTerm::OneNorm => {
                // y must be a fixed point of the clip of y + r
                let fixed = (y + &r).map(|v| v.clamp(-1.0, 1.0));
                ((y - fixed).norm(), 0.0)
            }
        };
        Ok(KktResiduals { dual_res, primal_res, compl_res })
    }

    /// `F*(v, y) = f*(v - A^T y) + <b, y> + g*(y)`.
    pub fn dual_perturbation_value(&self, v: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        if v.len() != self.n || y.len() != self.m {
            return Err(dimension("argument lengths do not match the problem"));
        }
        let gy = self.g.conj_value(y);
        if gy == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        let fstar = self.f.conjugate(&(v - self.map.a.tr_mul_vec(y)))?;
        Ok(fstar + self.map.b.dot(y) + gy)
    }

    /// A point of `T(x, y)` when the KKT operator is single-valued there:
    /// equality constraints, or inequalities with strictly positive multipliers.
    pub fn kkt_operator(&self, x: &DVector<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let single_valued = match self.g {
            NonsmoothTerm::ZeroIndicator => true,
            NonsmoothTerm::NonposOrthant => y.iter().all(|&v| v > 0.0),
            NonsmoothTerm::VecMax | NonsmoothTerm::OneNorm => false,
        };
        if !single_valued || !self.f.in_domain_interior(x) {
            return None;
        }
        let primal = self.f.gradient(x) + self.map.a.tr_mul_vec(y);
        let dual = -self.map.apply(x);
        Some((primal, dual))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    /// min 1/2 x^2 s.t. x = 1 (or x <= 1 etc. with a different g)
    fn scalar_problem(g: NonsmoothTerm) -> ProblemSpec {
        let f = SmoothObjective::quadratic(SparseMatrix::identity(1), v(&[0.0])).unwrap();
        let map = AffineMap::new(SparseMatrix::identity(1), v(&[1.0])).unwrap();
        ProblemSpec::new(f, g, map).unwrap()
    }

    #[test]
    fn lagrangian_values() {
        let p = scalar_problem(NonsmoothTerm::ZeroIndicator);
        assert!((p.lagrangian(&v(&[1.0]), &v(&[0.0])) - 0.5).abs() < 1e-15);
        assert!((p.lagrangian(&v(&[1.0]), &v(&[-1.0])) - 0.5).abs() < 1e-15);
        let q = ProblemSpec::new(
            SmoothObjective::quadratic(SparseMatrix::identity(2), v(&[0.0, 0.0])).unwrap(),
            NonsmoothTerm::VecMax,
            AffineMap::new(SparseMatrix::identity(2), v(&[0.0, 0.0])).unwrap(),
        )
        .unwrap();
        assert_eq!(q.lagrangian(&v(&[0.0, 0.0]), &v(&[0.7, 0.7])), f64::NEG_INFINITY);
    }

    #[test]
    fn kkt_residuals_equality() {
        let p = scalar_problem(NonsmoothTerm::ZeroIndicator);
        let r = p.kkt_residuals(&v(&[1.0]), &v(&[-1.0])).unwrap();
        assert_eq!(r.max(), 0.0);
        let r = p.kkt_residuals(&v(&[0.0]), &v(&[0.0])).unwrap();
        assert_eq!(r.dual_res, 0.0);
        assert_eq!(r.primal_res, 1.0);
    }

    #[test]
    fn kkt_residuals_orthant_strictly_feasible() {
        // Ax - b = -1 at x = 0
        let p = scalar_problem(NonsmoothTerm::NonposOrthant);
        let r = p.kkt_residuals(&v(&[0.0]), &v(&[0.0])).unwrap();
        assert_eq!(r.primal_res, 0.0);
        assert_eq!(r.compl_res, 0.0);
        assert!(matches!(p.kkt_residuals(&v(&[0.0]), &v(&[-1.0])), Err(Error::Domain(_))));
    }

    #[test]
    fn kkt_residuals_one_norm_natural_map() {
        // min 1/2 x^2 + |x - 1|: x* = 1 - y*, y* in d|.|(x* - 1) -> x* = 0? no: x* = 1 - 1 = 0,
        // then x* - 1 = -1 < 0 contradicts y* = 1; the solution is x* = 1, y* = -1... check
        // stationarity x + y = 0 with y in d|.|(x - 1): x = 1 gives y = -1 in [-1, 1]. Good.
        let p = scalar_problem(NonsmoothTerm::OneNorm);
        let r = p.kkt_residuals(&v(&[1.0]), &v(&[-1.0])).unwrap();
        assert!(r.max() < 1e-15);
        let r = p.kkt_residuals(&v(&[0.5]), &v(&[-0.5])).unwrap();
        assert!(r.primal_res > 0.1);
    }

    #[test]
    fn dual_perturbation_values() {
        let p = scalar_problem(NonsmoothTerm::ZeroIndicator);
        for &y in &[-3.0, -1.0, 0.0, 2.5] {
            let val = p.dual_perturbation_value(&v(&[0.0]), &v(&[y])).unwrap();
            assert!((val - (0.5 * y * y + y)).abs() < 1e-14);
        }
        let at_min = p.dual_perturbation_value(&v(&[0.0]), &v(&[-1.0])).unwrap();
        assert!((at_min + 0.5).abs() < 1e-15);
        assert_eq!(p.dual_perturbation_value(&v(&[0.0]), &v(&[0.0])).unwrap(), 0.0);
    }

    #[test]
    fn dual_perturbation_unsupported_for_singular_quadratic() {
        let f = SmoothObjective::quadratic(SparseMatrix::zeros(1, 1), v(&[0.0])).unwrap();
        let map = AffineMap::new(SparseMatrix::identity(1), v(&[1.0])).unwrap();
        let p = ProblemSpec::new(f, NonsmoothTerm::ZeroIndicator, map).unwrap();
        assert!(matches!(p.dual_perturbation_value(&v(&[0.0]), &v(&[0.0])), Err(Error::Unsupported(_))));
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&v(&[0.5, 0.5]));
        assert!((p - v(&[0.5, 0.5])).norm() < 1e-15);
        let p = project_simplex(&v(&[2.0, 0.0]));
        assert!((p - v(&[1.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn dimension_checks() {
        let f = SmoothObjective::quadratic(SparseMatrix::identity(2), v(&[0.0, 0.0])).unwrap();
        let map = AffineMap::new(SparseMatrix::identity(1), v(&[1.0])).unwrap();
        assert!(matches!(ProblemSpec::new(f, NonsmoothTerm::ZeroIndicator, map), Err(Error::Dimension(_))));
        assert!(AffineMap::new(SparseMatrix::identity(2), v(&[1.0])).is_err());
    }
}
