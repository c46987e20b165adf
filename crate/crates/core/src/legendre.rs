//! Legendre distance-generating functions and their Bregman calculus.
//!
//! Every function in the catalog is separable, so all evaluations reduce to
//! a per-coordinate scalar kernel. Products of catalog entries are flattened
//! into one kernel per coordinate at construction.
//!
//! Extended-real values use `f64::INFINITY` for `+inf`; it is never replaced
//! by a large finite number.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dimension, domain, Result};
use crate::special::{
    gauss_legendre, log_expm1, sigmoid, softplus, softplus_integral, spence_entropy, x_minus_log1p, xlogx_excess,
};

/// Points closer than this (relative to the bound) to a finite box bound are
/// treated as lying on the boundary.
pub const BOUNDARY_TOL: f64 = 1e-14;

/// Catalog of supported Legendre functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LegendreKind {
    /// `1/2 |z|^2`
    Energy,
    /// `sum z ln z - z`
    VonNeumann,
    /// `-sum ln z`
    Burg,
    /// `sum int_0^z ln(e^t - 1) dt`
    Spence,
    /// `1/2 |z|^2 - sum ln(u - z) + ln(z - l)`; infinite bounds drop their term.
    BoxBarrier { lower: Vec<f64>, upper: Vec<f64> },
    /// Block-separable sum of catalog entries.
    Product(Vec<LegendreFunction>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kernel {
    Energy,
    VonNeumann,
    Burg,
    Spence,
    Barrier { lower: f64, upper: f64 },
}

/// A separable Legendre function on `R^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LegendreSpec", into = "LegendreSpec")]
pub struct LegendreFunction {
    kind: LegendreKind,
    dim: usize,
    #[serde(skip)]
    kernels: Vec<Kernel>,
}

#[derive(Serialize, Deserialize)]
struct LegendreSpec {
    kind: LegendreKind,
    dim: usize,
}

impl TryFrom<LegendreSpec> for LegendreFunction {
    type Error = crate::Error;
    fn try_from(spec: LegendreSpec) -> Result<Self> {
        Self::new(spec.kind, spec.dim)
    }
}

impl From<LegendreFunction> for LegendreSpec {
    fn from(f: LegendreFunction) -> Self {
        LegendreSpec { kind: f.kind, dim: f.dim }
    }
}

impl LegendreFunction {
    pub fn new(kind: LegendreKind, dim: usize) -> Result<Self> {
        let kernels = match &kind {
            LegendreKind::Energy => vec![Kernel::Energy; dim],
            LegendreKind::VonNeumann => vec![Kernel::VonNeumann; dim],
            LegendreKind::Burg => vec![Kernel::Burg; dim],
            LegendreKind::Spence => vec![Kernel::Spence; dim],
            LegendreKind::BoxBarrier { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(dimension(format!(
                        "box bounds have lengths {}/{} but dimension is {dim}",
                        lower.len(),
                        upper.len()
                    )));
                }
                lower
                    .iter()
                    .zip(upper)
                    .map(|(&l, &u)| {
                        if l.is_nan() || u.is_nan() || l >= u {
                            Err(domain(format!("empty box [{l}, {u}]")))
                        } else {
                            Ok(Kernel::Barrier { lower: l, upper: u })
                        }
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            LegendreKind::Product(blocks) => {
                let total: usize = blocks.iter().map(|b| b.dim).sum();
                if total != dim {
                    return Err(dimension(format!("product blocks cover {total} coordinates, expected {dim}")));
                }
                blocks.iter().flat_map(|b| b.kernels.iter().copied()).collect()
            }
        };
        Ok(Self { kind, dim, kernels })
    }

    pub fn energy(dim: usize) -> Self {
        Self::new(LegendreKind::Energy, dim).expect("energy is always valid")
    }

    pub fn von_neumann(dim: usize) -> Self {
        Self::new(LegendreKind::VonNeumann, dim).expect("entropy is always valid")
    }

    pub fn burg(dim: usize) -> Self {
        Self::new(LegendreKind::Burg, dim).expect("burg is always valid")
    }

    pub fn spence(dim: usize) -> Self {
        Self::new(LegendreKind::Spence, dim).expect("spence is always valid")
    }

    pub fn box_barrier(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let dim = lower.len();
        Self::new(LegendreKind::BoxBarrier { lower, upper }, dim)
    }

    pub fn product(blocks: Vec<LegendreFunction>) -> Result<Self> {
        let dim = blocks.iter().map(|b| b.dim).sum();
        Self::new(LegendreKind::Product(blocks), dim)
    }

    pub fn kind(&self) -> &LegendreKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_energy(&self) -> bool {
        self.kernels.iter().all(|k| matches!(k, Kernel::Energy))
    }

    /// Self-concordance constant, when the function is self-concordant.
    /// Quadratics report 0.
    pub fn self_concordance(&self) -> Option<f64> {
        self.kernels.iter().try_fold(0.0f64, |acc, k| match k {
            Kernel::Energy => Some(acc),
            Kernel::Barrier { lower, upper } if lower.is_finite() || upper.is_finite() => Some(acc.max(1.0)),
            Kernel::Barrier { .. } => Some(acc),
            Kernel::Burg => Some(acc.max(1.0)),
            Kernel::VonNeumann | Kernel::Spence => None,
        })
    }

    /// A canonical interior point: 0 for energy, 1 for the entropies, the box
    /// midpoint (or one unit inside a single finite bound) for barriers.
    pub fn interior_point(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim, self.kernels.iter().map(|k| k.center()))
    }

    /// Largest `t` such that `z + t d` stays in the closed domain (`+inf`
    /// when the ray never leaves it).
    pub fn max_step(&self, z: &DVector<f64>, d: &DVector<f64>) -> f64 {
        self.kernels
            .iter()
            .zip(z.iter().zip(d.iter()))
            .map(|(k, (&t, &dt))| k.max_step(t, dt))
            .fold(f64::INFINITY, f64::min)
    }

    /// Componentwise lower and upper bounds of the closed domain.
    pub fn domain_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let (lo, hi): (Vec<f64>, Vec<f64>) = self.kernels.iter().map(|k| k.bounds()).unzip();
        (DVector::from_vec(lo), DVector::from_vec(hi))
    }

    fn check_len(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() == self.dim {
            Ok(())
        } else {
            Err(dimension(format!("vector of length {} for a {}-dimensional function", z.len(), self.dim)))
        }
    }

    pub fn in_domain(&self, z: &DVector<f64>) -> bool {
        z.len() == self.dim && self.kernels.iter().zip(z.iter()).all(|(k, &t)| k.in_domain(t))
    }

    pub fn in_interior(&self, z: &DVector<f64>) -> bool {
        z.len() == self.dim && self.kernels.iter().zip(z.iter()).all(|(k, &t)| k.in_interior(t))
    }

    pub fn in_conj_interior(&self, t: &DVector<f64>) -> bool {
        t.len() == self.dim && self.kernels.iter().zip(t.iter()).all(|(k, &s)| k.in_conj_interior(s))
    }

    /// `Phi(z)`, `+inf` outside the domain.
    pub fn value(&self, z: &DVector<f64>) -> f64 {
        if z.len() != self.dim {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        for (k, &t) in self.kernels.iter().zip(z.iter()) {
            let v = k.value(t);
            if v == f64::INFINITY {
                return f64::INFINITY;
            }
            acc += v;
        }
        acc
    }

    /// `Phi*(t)`, `+inf` outside the conjugate domain.
    pub fn conj_value(&self, t: &DVector<f64>) -> f64 {
        if t.len() != self.dim {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        for (k, &s) in self.kernels.iter().zip(t.iter()) {
            let v = k.conj_value(s);
            if v == f64::INFINITY {
                return f64::INFINITY;
            }
            acc += v;
        }
        acc
    }

    pub fn grad(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(z)?;
        self.map_interior(z, |k, t| k.in_interior(t), |k, t| k.grad(t), "gradient")
    }

    /// `grad Phi*`, the inverse of [`grad`](Self::grad).
    pub fn conj_grad(&self, t: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(t)?;
        self.map_interior(t, |k, s| k.conj_interior_ok(s), |k, s| k.conj_grad(s, None), "conjugate gradient")
    }

    /// `grad Phi*(t)` with a hint near the answer; speeds up the barrier root find.
    pub fn conj_grad_near(&self, t: &DVector<f64>, hint: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(t)?;
        self.check_len(hint)?;
        let mut out = DVector::zeros(self.dim);
        for i in 0..self.dim {
            let k = &self.kernels[i];
            if !k.conj_interior_ok(t[i]) {
                return Err(domain(format!("conjugate gradient undefined at coordinate {i} (t = {})", t[i])));
            }
            let h = if k.in_interior(hint[i]) { Some(hint[i]) } else { None };
            out[i] = k.conj_grad(t[i], h);
        }
        Ok(out)
    }

    pub fn hess_diag(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(z)?;
        self.map_interior(z, |k, t| k.in_interior(t), |k, t| k.hess(t), "Hessian")
    }

    /// Dense diagonal Hessian.
    pub fn hess(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_diagonal(&self.hess_diag(z)?))
    }

    pub fn conj_hess_diag(&self, t: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(t)?;
        self.map_interior(t, |k, s| k.conj_interior_ok(s), |k, s| k.conj_hess(s), "conjugate Hessian")
    }

    fn map_interior(
        &self,
        z: &DVector<f64>,
        ok: impl Fn(&Kernel, f64) -> bool,
        f: impl Fn(&Kernel, f64) -> f64,
        what: &str,
    ) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dim);
        for (i, (k, &t)) in self.kernels.iter().zip(z.iter()).enumerate() {
            if !ok(k, t) {
                return Err(domain(format!("{what} undefined at coordinate {i} (value {t})")));
            }
            let v = f(k, t);
            if !v.is_finite() {
                return Err(domain(format!("{what} overflows at coordinate {i} (value {t})")));
            }
            out[i] = v;
        }
        Ok(out)
    }

    /// `D_Phi(z1, z2)`: `+inf` unless `z1` is in the domain and `z2` in the interior.
    pub fn bregman(&self, z1: &DVector<f64>, z2: &DVector<f64>) -> f64 {
        if z1.len() != self.dim || z2.len() != self.dim {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        for (k, (&a, &b)) in self.kernels.iter().zip(z1.iter().zip(z2.iter())) {
            if !k.in_domain(a) || !k.in_interior(b) {
                return f64::INFINITY;
            }
            acc += k.bregman(a, b, None);
        }
        acc.max(0.0)
    }

    /// Bregman distance when `grad Phi(z2)` is known exactly.
    ///
    /// Multipliers updated multiplicatively can underflow to zero while their
    /// mirror coordinate `grad Phi(z2)` stays finite; this form stays exact in
    /// that case.
    pub fn bregman_with_grad(&self, z1: &DVector<f64>, z2: &DVector<f64>, grad2: &DVector<f64>) -> f64 {
        if z1.len() != self.dim || z2.len() != self.dim || grad2.len() != self.dim {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        for i in 0..self.dim {
            let k = &self.kernels[i];
            let (a, b, g) = (z1[i], z2[i], grad2[i]);
            if !k.in_domain(a) || !g.is_finite() {
                return f64::INFINITY;
            }
            let d = if k.in_interior(b) {
                k.bregman(a, b, Some(g))
            } else if k.in_domain(b) {
                // underflowed anchor: Phi(z2) and <g, z2> vanish together
                k.value(a) - k.value(b) - g * (a - b)
            } else {
                return f64::INFINITY;
            };
            acc += d;
        }
        acc.max(0.0)
    }

    /// `D_{Phi*}(t1, t2)`.
    pub fn conj_bregman(&self, t1: &DVector<f64>, t2: &DVector<f64>) -> f64 {
        let v1 = self.conj_value(t1);
        if v1 == f64::INFINITY || !self.in_conj_interior(t2) {
            return f64::INFINITY;
        }
        let Ok(g2) = self.conj_grad(t2) else {
            return f64::INFINITY;
        };
        (v1 - self.conj_value(t2) - g2.dot(&(t1 - t2))).max(0.0)
    }
}

impl Kernel {
    fn in_domain(&self, t: f64) -> bool {
        match *self {
            Kernel::Energy => t.is_finite(),
            Kernel::VonNeumann | Kernel::Spence => t.is_finite() && t >= 0.0,
            Kernel::Burg => t.is_finite() && t > 0.0,
            Kernel::Barrier { .. } => self.in_interior(t),
        }
    }

    fn in_interior(&self, t: f64) -> bool {
        match *self {
            Kernel::Energy => t.is_finite(),
            Kernel::VonNeumann | Kernel::Spence | Kernel::Burg => t.is_finite() && t > 0.0,
            Kernel::Barrier { lower, upper } => {
                t.is_finite()
                    && (lower == f64::NEG_INFINITY || t - lower > BOUNDARY_TOL * lower.abs().max(1.0))
                    && (upper == f64::INFINITY || upper - t > BOUNDARY_TOL * upper.abs().max(1.0))
            }
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            Kernel::Energy => (f64::NEG_INFINITY, f64::INFINITY),
            Kernel::VonNeumann | Kernel::Spence | Kernel::Burg => (0.0, f64::INFINITY),
            Kernel::Barrier { lower, upper } => (lower, upper),
        }
    }

    fn max_step(&self, t: f64, dt: f64) -> f64 {
        if *self == Kernel::Energy {
            return f64::INFINITY;
        }
        let (lower, upper) = self.bounds();
        if dt < 0.0 && lower.is_finite() {
            (lower - t) / dt
        } else if dt > 0.0 && upper.is_finite() {
            (upper - t) / dt
        } else {
            f64::INFINITY
        }
    }

    fn center(&self) -> f64 {
        match *self {
            Kernel::Energy => 0.0,
            Kernel::VonNeumann | Kernel::Spence | Kernel::Burg => 1.0,
            Kernel::Barrier { lower, upper } => match (lower.is_finite(), upper.is_finite()) {
                (true, true) => 0.5 * (lower + upper),
                (true, false) => lower + 1.0,
                (false, true) => upper - 1.0,
                (false, false) => 0.0,
            },
        }
    }

    fn in_conj_interior(&self, s: f64) -> bool {
        match *self {
            Kernel::Burg => s.is_finite() && s < 0.0,
            _ => s.is_finite(),
        }
    }

    fn conj_interior_ok(&self, s: f64) -> bool {
        self.in_conj_interior(s)
    }

    fn value(&self, t: f64) -> f64 {
        if !self.in_domain(t) {
            return f64::INFINITY;
        }
        match *self {
            Kernel::Energy => 0.5 * t * t,
            Kernel::VonNeumann => {
                if t == 0.0 {
                    0.0
                } else {
                    t * t.ln() - t
                }
            }
            Kernel::Burg => -t.ln(),
            Kernel::Spence => spence_entropy(t),
            Kernel::Barrier { lower, upper } => {
                let mut v = 0.5 * t * t;
                if upper.is_finite() {
                    v -= (upper - t).ln();
                }
                if lower.is_finite() {
                    v -= (t - lower).ln();
                }
                v
            }
        }
    }

    fn conj_value(&self, s: f64) -> f64 {
        if !self.in_conj_interior(s) {
            return f64::INFINITY;
        }
        match *self {
            Kernel::Energy => 0.5 * s * s,
            Kernel::VonNeumann => s.exp(),
            Kernel::Burg => -1.0 - (-s).ln(),
            Kernel::Spence => softplus_integral(s),
            Kernel::Barrier { .. } => {
                let z = self.conj_grad(s, None);
                s * z - self.value(z)
            }
        }
    }

    fn grad(&self, t: f64) -> f64 {
        match *self {
            Kernel::Energy => t,
            Kernel::VonNeumann => t.ln(),
            Kernel::Burg => -1.0 / t,
            Kernel::Spence => log_expm1(t),
            Kernel::Barrier { lower, upper } => barrier_grad(t, lower, upper),
        }
    }

    fn hess(&self, t: f64) -> f64 {
        match *self {
            Kernel::Energy => 1.0,
            Kernel::VonNeumann => 1.0 / t,
            Kernel::Burg => 1.0 / (t * t),
            Kernel::Spence => 1.0 / -(-t).exp_m1(),
            Kernel::Barrier { lower, upper } => barrier_hess(t, lower, upper),
        }
    }

    fn conj_grad(&self, s: f64, hint: Option<f64>) -> f64 {
        match *self {
            Kernel::Energy => s,
            Kernel::VonNeumann => s.exp(),
            Kernel::Burg => -1.0 / s,
            Kernel::Spence => softplus(s),
            Kernel::Barrier { lower, upper } => barrier_inverse(s, lower, upper, hint),
        }
    }

    fn conj_hess(&self, s: f64) -> f64 {
        match *self {
            Kernel::Energy => 1.0,
            Kernel::VonNeumann => s.exp(),
            Kernel::Burg => 1.0 / (s * s),
            Kernel::Spence => sigmoid(s),
            Kernel::Barrier { lower, upper } => {
                1.0 / barrier_hess(barrier_inverse(s, lower, upper, None), lower, upper)
            }
        }
    }

    /// Scalar Bregman distance for `a` in the domain and `b` in the interior.
    fn bregman(&self, a: f64, b: f64, grad_b: Option<f64>) -> f64 {
        match *self {
            Kernel::Energy => 0.5 * (a - b) * (a - b),
            Kernel::VonNeumann => {
                if a == 0.0 {
                    b
                } else {
                    b * xlogx_excess((a - b) / b)
                }
            }
            Kernel::Burg => x_minus_log1p((a - b) / b),
            Kernel::Spence => {
                let gb = grad_b.unwrap_or_else(|| log_expm1(b));
                if (a - b).abs() <= 1e-2 * b {
                    gauss_legendre(b, a, |t| log_expm1(t) - gb)
                } else {
                    spence_entropy(a) - spence_entropy(b) - gb * (a - b)
                }
            }
            Kernel::Barrier { lower, upper } => {
                let mut d = 0.5 * (a - b) * (a - b);
                if upper.is_finite() {
                    d += x_minus_log1p(-(a - b) / (upper - b));
                }
                if lower.is_finite() {
                    d += x_minus_log1p((a - b) / (b - lower));
                }
                d
            }
        }
    }
}

fn barrier_grad(t: f64, lower: f64, upper: f64) -> f64 {
    let mut g = t;
    if upper.is_finite() {
        g += 1.0 / (upper - t);
    }
    if lower.is_finite() {
        g -= 1.0 / (t - lower);
    }
    g
}

fn barrier_hess(t: f64, lower: f64, upper: f64) -> f64 {
    let mut h = 1.0;
    if upper.is_finite() {
        h += 1.0 / ((upper - t) * (upper - t));
    }
    if lower.is_finite() {
        h += 1.0 / ((t - lower) * (t - lower));
    }
    h
}

/// Solves `barrier_grad(z) = s` for `z` in `(lower, upper)`.
///
/// The map is strictly increasing from `-inf` to `+inf`, so a bracket always
/// exists; Newton steps are taken when they stay inside it, bisection otherwise.
fn barrier_inverse(s: f64, lower: f64, upper: f64, hint: Option<f64>) -> f64 {
    let (mut lo, mut hi) = match (lower.is_finite(), upper.is_finite()) {
        (false, false) => return s,
        (true, false) => (lower, (s + 1.0).max(lower + 1.0)),
        (false, true) => ((s - 1.0).min(upper - 1.0), upper),
        (true, true) => (lower, upper),
    };
    let mut z = match hint {
        Some(h) if h > lo && h < hi => h,
        _ => {
            if lower.is_finite() && upper.is_finite() {
                0.5 * (lower + upper)
            } else if lower.is_finite() {
                0.5 * (lo + hi).max(lower + 0.5)
            } else {
                0.5 * (lo + hi).min(upper - 0.5)
            }
        }
    };
    if !(z > lo && z < hi) {
        z = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let r = barrier_grad(z, lower, upper) - s;
        if r == 0.0 {
            return z;
        }
        if r > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let newton = z - r / barrier_hess(z, lower, upper);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - z).abs() <= 4.0 * f64::EPSILON * z.abs().max(1e-300) || hi - lo <= f64::EPSILON * z.abs() {
            return next;
        }
        z = next;
    }
    z
}

/// The separable geometry `Phi(x, y) = psi(x) + phi(y)` on decision and
/// multiplier space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BregmanGeometry {
    pub primal: LegendreFunction,
    pub dual: LegendreFunction,
}

impl BregmanGeometry {
    pub fn new(primal: LegendreFunction, dual: LegendreFunction) -> Self {
        Self { primal, dual }
    }

    /// `D_Phi((x1, y1), (x2, y2)) = D_psi(x1, x2) + D_phi(y1, y2)`.
    pub fn bregman(&self, x1: &DVector<f64>, y1: &DVector<f64>, x2: &DVector<f64>, y2: &DVector<f64>) -> f64 {
        self.primal.bregman(x1, x2) + self.dual.bregman(y1, y2)
    }
}
