//! Reference solvers and brute-force evaluators, independent of the main
//! solver path. Used by tests and the acceptance suite.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dimension, Error, Result};
use crate::legendre::{BregmanGeometry, LegendreFunction};
use crate::linalg::SparseMatrix;
use crate::outer::{Regime, SolverConfig};
use crate::parallel::par_map;
use crate::problem::{AffineMap, KktResiduals, NonsmoothTerm, ProblemSpec, SmoothObjective};

/// Solves `[W A^T; A 0] (x, y) = (-c, b)`.
pub fn solve_equality_qp(
    w: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (n, m) = (w.nrows(), a.nrows());
    if w.ncols() != n || c.len() != n || a.ncols() != n || b.len() != m {
        return Err(dimension("inconsistent equality QP data"));
    }
    if n + m == 0 {
        return Ok((DVector::zeros(0), DVector::zeros(0)));
    }
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(w);
    k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    k.view_mut((n, 0), (m, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-c));
    rhs.rows_mut(n, m).copy_from(b);
    let lu = k.clone().full_piv_lu();
    let sol = lu.solve(&rhs).ok_or(Error::SingularSystem)?;
    // full-pivot LU reports success on numerically singular systems
    let scale = 1.0 + k.amax() * sol.amax() + rhs.amax();
    if (&k * &sol - &rhs).amax() > 1e-9 * scale || !sol.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok((sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned()))
}

/// Largest `n` handled by active-set enumeration.
/// Outer budget for box problems, whose iterates approach active bounds
/// only sublinearly under the self-concordant step-size rule.
pub const BOX_MAX_OUTER: usize = 2000;

pub const ENUMERATION_LIMIT: usize = 12;
/// Largest `n` handled by the projected-gradient fallback.
pub const PROJECTED_LIMIT: usize = 50;

/// Global solution of `min 1/2 x^T W x + c^T x` s.t. `A x = b`, `l <= x <= u`,
/// returning `x*` and the multipliers of `A x = b`.
///
/// Enumerates every assignment of coordinates to {free, lower, upper} for
/// `n <= 12`; for `n <= 50` without equality constraints it falls back to
/// projected gradient.
pub fn solve_box_qp_bruteforce(
    w: &DMatrix<f64>,
    c: &DVector<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = w.nrows();
    let m = a.nrows();
    if l.len() != n || u.len() != n || c.len() != n || a.ncols() != n || b.len() != m {
        return Err(dimension("inconsistent box QP data"));
    }
    if n > ENUMERATION_LIMIT {
        if n <= PROJECTED_LIMIT && m == 0 {
            return Ok((projected_gradient(w, c, l, u), DVector::zeros(0)));
        }
        return Err(Error::Scale(format!("{n} variables")));
    }
    let patterns = 3usize.pow(n as u32);
    let tol = 1e-9;
    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    for code in 0..patterns {
        // 0 free, 1 at lower, 2 at upper
        let mut state = vec![0u8; n];
        let mut rest = code;
        let mut valid = true;
        for (i, st) in state.iter_mut().enumerate() {
            *st = (rest % 3) as u8;
            rest /= 3;
            if (*st == 1 && !l[i].is_finite()) || (*st == 2 && !u[i].is_finite()) {
                valid = false;
            }
        }
        if !valid {
            continue;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
        let mut x = DVector::zeros(n);
        for i in 0..n {
            match state[i] {
                1 => x[i] = l[i],
                2 => x[i] = u[i],
                _ => {}
            }
        }
        let nf = free.len();
        let wff = DMatrix::from_fn(nf, nf, |p, q| w[(free[p], free[q])]);
        let wx = w * &x;
        let cf = DVector::from_fn(nf, |p, _| c[free[p]] + wx[free[p]]);
        let af = DMatrix::from_fn(m, nf, |r, q| a[(r, free[q])]);
        let bf = b - a * &x;
        let Ok((xf, y)) = solve_equality_qp(&wff, &cf, &af, &bf) else {
            continue;
        };
        for (p, &i) in free.iter().enumerate() {
            x[i] = xf[p];
        }
        let scale = 1.0 + x.amax();
        if (0..n).any(|i| x[i] < l[i] - tol * scale || x[i] > u[i] + tol * scale) {
            continue;
        }
        if (a * &x - b).amax() > 1e-8 * scale {
            continue;
        }
        let reduced = w * &x + c + a.transpose() * &y;
        let gscale = 1.0 + reduced.amax();
        let signs_ok = (0..n).all(|i| match state[i] {
            1 => reduced[i] >= -tol * gscale,
            2 => reduced[i] <= tol * gscale,
            _ => true,
        });
        if !signs_ok {
            continue;
        }
        let obj = 0.5 * x.dot(&(w * &x)) + c.dot(&x);
        if best.as_ref().is_none_or(|(o, _, _)| obj < *o - 1e-14 * (1.0 + obj.abs())) {
            best = Some((obj, x, y));
        }
    }
    best.map(|(_, x, y)| (x, y)).ok_or(Error::SingularSystem)
}

fn projected_gradient(w: &DMatrix<f64>, c: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let lip = w.symmetric_eigenvalues().amax().max(1e-12);
    let project = |x: DVector<f64>| x.zip_zip_map(l, u, |v, lo, hi| v.clamp(lo, hi));
    let mut x = project(DVector::zeros(w.nrows()));
    for _ in 0..1_000_000 {
        let next = project(&x - (w * &x + c) / lip);
        let moved = (&next - &x).amax();
        x = next;
        if moved <= 1e-15 * (1.0 + x.amax()) {
            break;
        }
    }
    x
}

/// Grid used by [`penalty_bruteforce`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub points: usize,
    pub radius: f64,
    pub zoom_rounds: usize,
}

impl Grid {
    /// A box wide enough to contain the maximizer for arguments of size `u`.
    pub fn for_argument(u: &DVector<f64>) -> Self {
        let big = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Self { points: 201, radius: 2.0 + 2.0 * big + big.exp(), zoom_rounds: 3 }
    }
}

type Lift = Box<dyn Fn(&[f64]) -> DVector<f64> + Sync>;

/// Numerically evaluates `sup_eta <u, eta> - phi(eta) - sigma g*(eta)` by
/// grid search with zooming. `m <= 2`.
pub fn penalty_bruteforce(g: NonsmoothTerm, phi: &LegendreFunction, sigma: f64, u: &DVector<f64>, grid: Grid) -> f64 {
    let m = u.len();
    assert!(m <= 2 && phi.dim() == m, "brute force supports m <= 2");
    let objective = |eta: &DVector<f64>| -> f64 {
        let gs = g.conj_value(eta);
        if gs == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        u.dot(eta) - phi.value(eta) - sigma * gs
    };
    // the simplex is searched through its first m - 1 coordinates
    let (dims, lift): (usize, Lift) = if g == NonsmoothTerm::VecMax {
        (
            m - 1,
            Box::new(move |t: &[f64]| {
                let mut e = DVector::zeros(m);
                let head: f64 = t.iter().sum();
                for (i, &ti) in t.iter().enumerate() {
                    e[i] = ti;
                }
                e[m - 1] = 1.0 - head;
                e
            }),
        )
    } else {
        (m, Box::new(|t: &[f64]| DVector::from_column_slice(t)))
    };
    if dims == 0 {
        return objective(&lift(&[]));
    }
    let (dom_lo, dom_hi) = match g {
        NonsmoothTerm::VecMax => (0.0, 1.0),
        NonsmoothTerm::OneNorm => (-1.0, 1.0),
        NonsmoothTerm::NonposOrthant => (0.0, f64::INFINITY),
        NonsmoothTerm::ZeroIndicator => (f64::NEG_INFINITY, f64::INFINITY),
    };
    let mut center = vec![0.0; dims];
    let mut half = grid.radius;
    let mut best = f64::NEG_INFINITY;
    for _ in 0..=grid.zoom_rounds {
        let axes: Vec<Vec<f64>> = center
            .iter()
            .map(|&c0| {
                let lo = (c0 - half).max(dom_lo);
                let hi = (c0 + half).min(dom_hi);
                (0..grid.points).map(|i| lo + (hi - lo) * i as f64 / (grid.points - 1) as f64).collect()
            })
            .collect();
        let rows: Vec<f64> = axes[0].clone();
        let results = par_map(&rows, |&t0| {
            let mut local = (f64::NEG_INFINITY, vec![t0]);
            if dims == 1 {
                let val = objective(&lift(&[t0]));
                if val > local.0 {
                    local = (val, vec![t0]);
                }
            } else {
                for &t1 in &axes[1] {
                    let val = objective(&lift(&[t0, t1]));
                    if val > local.0 {
                        local = (val, vec![t0, t1]);
                    }
                }
            }
            local
        });
        for (val, at) in results {
            if val > best {
                best = val;
                center = at;
            }
        }
        half /= 10.0;
    }
    best
}

/// Water-filling solution of `min 1/2 |x - c|^2 + max_i x_i`: `x_i = min(c_i, tau)`
/// with `sum (c_i - tau)_+ = 1`; the multiplier is `c - x`.
pub fn vecmax_prox(c: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let mut sorted: Vec<f64> = c.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = sorted[0] - 1.0;
    for (k, &v) in sorted.iter().enumerate() {
        acc += v;
        let t = (acc - 1.0) / (k + 1) as f64;
        if k + 1 == sorted.len() || sorted[k + 1] <= t {
            tau = t;
            break;
        }
    }
    let x = c.map(|v| v.min(tau));
    let y = c - &x;
    (x, y)
}

/// Solution of `min 1/2 |x - c|^2 + |x - b|_1`: `x = b + soft(c - b, 1)`.
pub fn one_norm_prox(c: &DVector<f64>, b: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let r = c - b;
    let x = b + r.map(|v| v.signum() * (v.abs() - 1.0).max(0.0));
    let y = c - &x;
    (x, y)
}

/// Which geometry family a golden problem is meant to be solved with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoldenFamily {
    Equality,
    ExpInequality,
    SpenceInequality,
    BoxSc,
    VecMax,
    OneNorm,
}

#[derive(Debug, Clone)]
pub struct GoldenProblem {
    pub name: String,
    pub family: GoldenFamily,
    pub spec: ProblemSpec,
    pub x_star: DVector<f64>,
    pub y_star: DVector<f64>,
    /// Primal box, for the barrier geometry.
    pub bounds: Option<(DVector<f64>, DVector<f64>)>,
    pub provenance: &'static str,
}

impl GoldenProblem {
    /// The geometry the problem is solved with.
    pub fn geometry(&self) -> BregmanGeometry {
        let (n, m) = (self.spec.n, self.spec.m);
        let primal = match &self.bounds {
            Some((l, u)) => LegendreFunction::box_barrier(l.iter().copied().collect(), u.iter().copied().collect())
                .expect("golden boxes are nonempty"),
            None => LegendreFunction::energy(n),
        };
        let dual = match self.family {
            GoldenFamily::ExpInequality | GoldenFamily::VecMax => LegendreFunction::von_neumann(m),
            GoldenFamily::SpenceInequality => LegendreFunction::spence(m),
            _ => LegendreFunction::energy(m),
        };
        BregmanGeometry::new(primal, dual)
    }

    /// KKT residuals including the box bounds, when present.
    pub fn residuals(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<KktResiduals> {
        match &self.bounds {
            Some((l, u)) => self.spec.kkt_residuals_within(x, y, Some((l, u))),
            None => self.spec.kkt_residuals(x, y),
        }
    }

    /// Default solver configuration for the family: the self-concordant
    /// regime for box problems, quasi self-concordant otherwise.
    pub fn config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::new(self.geometry());
        if self.family == GoldenFamily::BoxSc {
            cfg.regime = Regime::Sc;
            cfg.max_outer = BOX_MAX_OUTER;
        }
        cfg
    }
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let w = g.transpose() * &g / n as f64 + DMatrix::identity(n, n) * 0.5;
    (&w + w.transpose()) * 0.5
}

fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

fn quadratic_spec(
    w: &DMatrix<f64>,
    c: DVector<f64>,
    a: &DMatrix<f64>,
    b: DVector<f64>,
    g: NonsmoothTerm,
) -> ProblemSpec {
    let f = SmoothObjective::quadratic(SparseMatrix::from_dense(w), c).expect("symmetric by construction");
    let map = AffineMap::new(SparseMatrix::from_dense(a), b).expect("consistent sizes");
    ProblemSpec::new(f, g, map).expect("consistent sizes")
}

/// Equality QP with random data, solved by the KKT system.
pub fn random_equality_qp(seed: u64, n: usize, m: usize) -> GoldenProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_spd(&mut rng, n);
    let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let a = random_matrix(&mut rng, m, n);
    let b = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
    let (x_star, y_star) = solve_equality_qp(&w, &c, &a, &b).expect("random data is nonsingular");
    GoldenProblem {
        name: format!("eq_qp_n{n}_m{m}_s{seed}"),
        family: GoldenFamily::Equality,
        spec: quadratic_spec(&w, c, &a, b, NonsmoothTerm::ZeroIndicator),
        x_star,
        y_star,
        bounds: None,
        provenance: "dense KKT solve",
    }
}

/// Inequality QP `A x <= b` with a planted strictly complementary solution.
pub fn random_inequality_qp(seed: u64, n: usize, m: usize, family: GoldenFamily) -> GoldenProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_spd(&mut rng, n);
    let a = random_matrix(&mut rng, m, n);
    let x_star = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let active: Vec<bool> = (0..m).map(|i| i % 2 == 0).collect();
    let y_star = DVector::from_fn(m, |i, _| if active[i] { rng.random_range(0.5..1.5) } else { 0.0 });
    let ax = &a * &x_star;
    let b = DVector::from_fn(m, |i, _| if active[i] { ax[i] } else { ax[i] + rng.random_range(0.5..1.5) });
    let c = -(&w * &x_star) - a.transpose() * &y_star;
    let tag = if family == GoldenFamily::SpenceInequality { "spence" } else { "exp" };
    GoldenProblem {
        name: format!("ineq_qp_{tag}_n{n}_m{m}_s{seed}"),
        family,
        spec: quadratic_spec(&w, c, &a, b, NonsmoothTerm::NonposOrthant),
        x_star,
        y_star,
        bounds: None,
        provenance: "planted KKT point",
    }
}

/// Box QP `l <= x <= u`, `A x = b`, solved by active-set enumeration.
pub fn random_box_qp(seed: u64, n: usize, m: usize) -> GoldenProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_spd(&mut rng, n);
    let c = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let l = DVector::from_element(n, -1.0);
    let u = DVector::from_element(n, 1.0);
    let a = random_matrix(&mut rng, m, n);
    // keep the feasible set nonempty: b = A x0 for an interior x0
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    let b = &a * &x0;
    let (x_star, y_star) = solve_box_qp_bruteforce(&w, &c, &l, &u, &a, &b).expect("feasible box QP");
    GoldenProblem {
        name: format!("box_qp_n{n}_m{m}_s{seed}"),
        family: GoldenFamily::BoxSc,
        spec: quadratic_spec(&w, c, &a, b, NonsmoothTerm::ZeroIndicator),
        x_star,
        y_star,
        bounds: Some((l, u)),
        provenance: "active-set enumeration",
    }
}

/// `min 1/2 |x - c|^2 + max_i x_i`.
pub fn vecmax_problem(seed: u64, n: usize) -> GoldenProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let (x_star, y_star) = vecmax_prox(&c);
    let id = DMatrix::identity(n, n);
    GoldenProblem {
        name: format!("vecmax_n{n}_s{seed}"),
        family: GoldenFamily::VecMax,
        spec: quadratic_spec(&id, -c, &id, DVector::zeros(n), NonsmoothTerm::VecMax),
        x_star,
        y_star,
        bounds: None,
        provenance: "water-filling closed form",
    }
}

/// `min 1/2 |x - c|^2 + |x - b|_1`.
pub fn one_norm_problem(seed: u64, n: usize) -> GoldenProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let (x_star, y_star) = one_norm_prox(&c, &b);
    let id = DMatrix::identity(n, n);
    GoldenProblem {
        name: format!("l1_n{n}_s{seed}"),
        family: GoldenFamily::OneNorm,
        spec: quadratic_spec(&id, -c, &id, b, NonsmoothTerm::OneNorm),
        x_star,
        y_star,
        bounds: None,
        provenance: "soft-threshold closed form",
    }
}

/// The fixed golden suite.
pub fn golden_suite() -> Vec<GoldenProblem> {
    let mut out = Vec::new();
    for (i, &(n, m)) in [(2, 1), (3, 1), (5, 2), (8, 3), (10, 4), (12, 6), (16, 5), (20, 8)].iter().enumerate() {
        out.push(random_equality_qp(100 + i as u64, n, m));
    }
    for (i, &(n, m)) in [(2, 2), (3, 2), (5, 4), (8, 6), (10, 5), (15, 8)].iter().enumerate() {
        out.push(random_inequality_qp(200 + i as u64, n, m, GoldenFamily::ExpInequality));
    }
    for (i, &(n, m)) in [(3, 2), (6, 4)].iter().enumerate() {
        out.push(random_inequality_qp(300 + i as u64, n, m, GoldenFamily::SpenceInequality));
    }
    for (i, &(n, m)) in [(2, 0), (3, 1), (5, 1), (6, 2)].iter().enumerate() {
        out.push(random_box_qp(400 + i as u64, n, m));
    }
    out.push(vecmax_problem(500, 4));
    out.push(one_norm_problem(600, 5));
    out
}
