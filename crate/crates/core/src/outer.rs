//! The outer loop: step-size selection, inner solve, extra-gradient primal
//! correction, exact dual update and ergodic averaging.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::auglag::SubproblemContext;
use crate::error::{dimension, domain, Error, Result};
use crate::legendre::BregmanGeometry;
pub use crate::newton::Regime;
use crate::newton::{predicted_iterations, regime_moduli, solve_subproblem, NewtonTrace};
use crate::parallel::{par_map, seq_map};
use crate::penalty::DualPenalty;
use crate::problem::{KktResiduals, NonsmoothTerm, ProblemSpec};

/// Step sizes below this are treated as a failed bisection.
pub const SIGMA_FLOOR: f64 = 1e-12;
/// Multiplier norm above which the run is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Consecutive stagnant iterations at the step-size bound before giving up.
pub const STAGNATION_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoSchedule {
    Constant(f64),
    /// `rho_k = rho0 * factor^k`
    Geometric {
        rho0: f64,
        factor: f64,
    },
}

impl RhoSchedule {
    pub fn rho(&self, k: usize) -> f64 {
        match *self {
            RhoSchedule::Constant(r) => r,
            RhoSchedule::Geometric { rho0, factor } => rho0 * factor.powi(k.min(i32::MAX as usize) as i32),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            RhoSchedule::Constant(r) => (0.0..1.0).contains(&r),
            RhoSchedule::Geometric { rho0, factor } => (0.0..1.0).contains(&rho0) && (0.0..=1.0).contains(&factor),
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!("relative error schedule {self:?} leaves [0, 1)")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bisection {
    pub max_iters: u32,
    pub shrink: f64,
}

impl Default for Bisection {
    fn default() -> Self {
        Self { max_iters: 40, shrink: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub geometry: BregmanGeometry,
    pub regime: Regime,
    pub sigma0: f64,
    pub sigma_growth: f64,
    /// Upper limit on step sizes; keeps the Newton systems well conditioned.
    pub sigma_max: f64,
    pub rho_schedule: RhoSchedule,
    pub tol_b: f64,
    pub tol_kkt: f64,
    pub max_outer: usize,
    pub newton_cap: usize,
    pub bisection: Bisection,
}

impl SolverConfig {
    pub fn new(geometry: BregmanGeometry) -> Self {
        Self {
            geometry,
            regime: Regime::Qsc,
            sigma0: 1.0,
            sigma_growth: 2.0,
            sigma_max: 1e6,
            rho_schedule: RhoSchedule::Constant(0.5),
            tol_b: 1e-9,
            tol_kkt: 1e-9,
            max_outer: 500,
            newton_cap: 50,
            bisection: Bisection::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(domain(format!("sigma0 must be positive, got {}", self.sigma0)));
        }
        if !(self.sigma_growth >= 1.0 && self.sigma_growth.is_finite()) {
            return Err(domain(format!("sigma growth must be at least 1, got {}", self.sigma_growth)));
        }
        if self.sigma_max.is_nan() || self.sigma_max < self.sigma0 {
            return Err(domain("sigma_max is below sigma0"));
        }
        if !(self.bisection.shrink > 0.0 && self.bisection.shrink < 1.0) {
            return Err(domain("bisection shrink factor must lie in (0, 1)"));
        }
        if !(self.tol_b > 0.0 && self.tol_kkt > 0.0) {
            return Err(domain("tolerances must be positive"));
        }
        self.rho_schedule.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    MaxIter,
    InnerFailure,
    Diverged,
}

impl Status {
    pub fn name(&self) -> &'static str {
        match self {
            Status::Optimal => "Optimal",
            Status::MaxIter => "MaxIter",
            Status::InnerFailure => "InnerFailure",
            Status::Diverged => "Diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateState {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    /// `grad phi(y)`
    pub eta: DVector<f64>,
    pub ergodic_x: DVector<f64>,
    pub ergodic_y: DVector<f64>,
    pub weight_sum: f64,
    pub k: usize,
    /// Step size of the previous iteration.
    pub sigma: Option<f64>,
}

impl IterateState {
    pub fn new(x: DVector<f64>, y: DVector<f64>, eta: DVector<f64>) -> Self {
        let (n, m) = (x.len(), y.len());
        Self {
            x,
            y,
            eta,
            ergodic_x: DVector::zeros(n),
            ergodic_y: DVector::zeros(m),
            weight_sum: 0.0,
            k: 0,
            sigma: None,
        }
    }

    /// The sigma-weighted averages of the inner solutions and new multipliers.
    pub fn ergodic_iterates(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        if self.weight_sum > 0.0 {
            Ok((self.ergodic_x.clone(), self.ergodic_y.clone()))
        } else {
            Err(Error::EmptyState)
        }
    }

    fn absorb(&mut self, sigma: f64, s: &DVector<f64>, y_next: &DVector<f64>) {
        let total = self.weight_sum + sigma;
        let w = sigma / total;
        self.ergodic_x = &self.ergodic_x * (1.0 - w) + s * w;
        self.ergodic_y = &self.ergodic_y * (1.0 - w) + y_next * w;
        self.weight_sum = total;
    }
}

/// Everything recorded about one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub k: usize,
    pub sigma: f64,
    /// The step size requested before the regime rule clipped it.
    pub sigma_target: f64,
    pub rho: f64,
    pub t_used: usize,
    pub t_predicted: Option<u32>,
    /// `M_k` of the regime, when defined.
    pub modulus: Option<f64>,
    /// `B_k(s_k)`
    pub b: f64,
    /// Stopping-rule left side at `s_k`.
    pub lhs: f64,
    /// `|grad J_k(x_k)|`
    pub grad_norm: f64,
    /// Unscaled Newton decrement of `J_k` at `x_k`.
    pub decrement: f64,
    /// Residuals at the new iterate.
    pub residuals: KktResiduals,
    pub s: DVector<f64>,
    pub x_next: DVector<f64>,
    pub y_next: DVector<f64>,
    pub eta_next: DVector<f64>,
    pub newton: NewtonTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub x0: DVector<f64>,
    pub y0: DVector<f64>,
    pub eta0: DVector<f64>,
    pub records: Vec<IterRecord>,
}

impl Trace {
    /// The iterate `(x_k, y_k, eta_k)` for `k = 0..=records.len()`.
    pub fn iterate(&self, k: usize) -> (&DVector<f64>, &DVector<f64>, &DVector<f64>) {
        if k == 0 {
            (&self.x0, &self.y0, &self.eta0)
        } else {
            let r = &self.records[k - 1];
            (&r.x_next, &r.y_next, &r.eta_next)
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: Status,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub residuals: KktResiduals,
    pub outer_iterations: usize,
    pub total_newton_steps: usize,
    pub sigma_final: f64,
    pub state: IterateState,
    pub trace: Trace,
    /// Why the run stopped early, for failure statuses.
    pub message: Option<String>,
}

/// A chosen step size together with the requested one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaChoice {
    pub sigma: f64,
    pub target: f64,
}

fn sigma_rule_holds(
    cfg: &SolverConfig,
    problem: &ProblemSpec,
    penalty: &DualPenalty,
    state: &IterateState,
    sigma: f64,
    rho: f64,
) -> Result<bool> {
    let ctx = SubproblemContext::new(
        problem,
        &cfg.geometry,
        penalty,
        state.x.clone(),
        state.y.clone(),
        Some(state.eta.clone()),
        sigma,
        rho,
    )?;
    let g = ctx.grad(&state.x)?;
    match cfg.regime {
        Regime::Qsc | Regime::QscLipschitz => {
            let gk = g.norm();
            if gk == 0.0 {
                return Ok(true);
            }
            let m_f = problem.f.qsc_modulus;
            let a_norm = problem.map.op_norm_bound;
            let mut bound = f64::INFINITY;
            if m_f > 0.0 {
                bound = bound.min(1.0 / (2.0 * gk * m_f));
            }
            if let Some(alpha) = penalty.moduli(sigma).alpha {
                if alpha > 0.0 && a_norm > 0.0 {
                    bound = bound.min(1.0 / (2.0 * gk * alpha * a_norm).sqrt());
                }
            }
            Ok(sigma <= bound)
        }
        Regime::Sc => {
            let m = regime_moduli(&ctx, Regime::Sc)?;
            let h = cfg.geometry.primal.hess_diag(&state.x)?;
            let q: f64 = g.iter().zip(h.iter()).map(|(gi, hi)| gi * gi / hi).sum();
            Ok(16.0 * m.m_k * m.m_k * sigma * q < 1.0)
        }
    }
}

/// Largest `sigma = target * shrink^j` satisfying the regime's rule.
/// KKT residuals with `x` restricted to the closed domain of the primal
/// Legendre function.
pub fn residuals_in(
    geometry: &BregmanGeometry,
    problem: &ProblemSpec,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<KktResiduals> {
    if geometry.primal.is_energy() {
        return problem.kkt_residuals(x, y);
    }
    let (l, u) = geometry.primal.domain_bounds();
    problem.kkt_residuals_within(x, y, Some((&l, &u)))
}

pub fn select_sigma(
    cfg: &SolverConfig,
    problem: &ProblemSpec,
    penalty: &DualPenalty,
    state: &IterateState,
    target: f64,
) -> Result<f64> {
    let rho = cfg.rho_schedule.rho(state.k);
    let mut sigma = target;
    for _ in 0..=cfg.bisection.max_iters {
        if sigma < SIGMA_FLOOR {
            break;
        }
        if sigma_rule_holds(cfg, problem, penalty, state, sigma, rho)? {
            return Ok(sigma);
        }
        sigma *= cfg.bisection.shrink;
    }
    Err(Error::BisectionFailed { regime: cfg.regime.name(), min_sigma: sigma.max(SIGMA_FLOOR) })
}

fn sigma_target(cfg: &SolverConfig, state: &IterateState) -> f64 {
    match state.sigma {
        None => cfg.sigma0,
        Some(prev) => (prev * cfg.sigma_growth).min(cfg.sigma_max),
    }
}

/// One outer iteration from `state`; returns the new state and its record.
pub fn outer_iteration(
    cfg: &SolverConfig,
    problem: &ProblemSpec,
    penalty: &DualPenalty,
    state: &IterateState,
) -> Result<(IterateState, IterRecord)> {
    let target = sigma_target(cfg, state);
    let mut sigma = select_sigma(cfg, problem, penalty, state, target)?;
    let rho = cfg.rho_schedule.rho(state.k);
    let mut retries = 0;
    loop {
        let ctx = SubproblemContext::new(
            problem,
            &cfg.geometry,
            penalty,
            state.x.clone(),
            state.y.clone(),
            Some(state.eta.clone()),
            sigma,
            rho,
        )?;
        let inner = solve_subproblem(&ctx, &state.x, cfg.newton_cap)?;
        if !inner.accepted {
            retries += 1;
            sigma *= cfg.bisection.shrink;
            if retries > cfg.bisection.max_iters || sigma < SIGMA_FLOOR {
                return Err(Error::BisectionFailed { regime: "inner acceptance", min_sigma: sigma });
            }
            log::debug!("inner solve hit the cap; retrying with sigma = {sigma:e}");
            continue;
        }
        let check = &inner.check;
        let t_predicted = predicted_iterations(&ctx, cfg.regime, check.b).ok();
        let modulus = regime_moduli(&ctx, cfg.regime).ok().map(|m| m.m_k);
        if !cfg.geometry.primal.in_interior(&check.x_plus) {
            return Err(domain("corrected primal iterate left the interior of dom psi"));
        }
        let residuals = residuals_in(&cfg.geometry, problem, &check.x_plus, &check.y_plus)?;
        let first = inner.trace.records[0];
        let mut next = state.clone();
        next.x = check.x_plus.clone();
        next.y = check.y_plus.clone();
        next.eta = check.eta_plus.clone();
        next.absorb(sigma, &inner.s, &check.y_plus);
        next.k = state.k + 1;
        next.sigma = Some(sigma);
        let record = IterRecord {
            k: state.k,
            sigma,
            sigma_target: target,
            rho,
            t_used: inner.trace.iterations_used,
            t_predicted,
            modulus,
            b: check.b,
            lhs: check.lhs,
            grad_norm: first.grad_norm,
            decrement: first.decrement,
            residuals,
            s: inner.s.clone(),
            x_next: next.x.clone(),
            y_next: next.y.clone(),
            eta_next: next.eta.clone(),
            newton: inner.trace,
        };
        return Ok((next, record));
    }
}

/// Default starting point: the canonical interior point of each geometry,
/// with multipliers on the simplex for `g = max`.
pub fn default_start(cfg: &SolverConfig, problem: &ProblemSpec) -> (DVector<f64>, DVector<f64>) {
    let x0 = cfg.geometry.primal.interior_point();
    let y0 = if problem.g == NonsmoothTerm::VecMax && problem.m > 0 {
        DVector::from_element(problem.m, 1.0 / problem.m as f64)
    } else {
        cfg.geometry.dual.interior_point()
    };
    (x0, y0)
}

/// Runs the method from `(x0, y0)`.
pub fn run(cfg: &SolverConfig, problem: &ProblemSpec, x0: DVector<f64>, y0: DVector<f64>) -> Result<SolveReport> {
    cfg.validate()?;
    if x0.len() != problem.n || y0.len() != problem.m {
        return Err(dimension("starting point lengths do not match the problem"));
    }
    let penalty = DualPenalty::new(problem.g, &cfg.geometry.dual)?;
    if !cfg.geometry.primal.in_interior(&x0) || !problem.f.in_domain_interior(&x0) {
        return Err(domain("x0 must lie in the interior of dom psi and dom f"));
    }
    let eta0 = cfg.geometry.dual.grad(&y0)?;
    let trace = Trace { x0: x0.clone(), y0: y0.clone(), eta0: eta0.clone(), records: Vec::new() };
    let mut state = IterateState::new(x0, y0, eta0);
    let mut report_trace = trace;
    let mut residuals = residuals_in(&cfg.geometry, problem, &state.x, &state.y).unwrap_or(KktResiduals {
        dual_res: f64::INFINITY,
        primal_res: f64::INFINITY,
        compl_res: f64::INFINITY,
    });
    let mut status = Status::MaxIter;
    let mut message = None;
    let mut stagnant = 0usize;
    let mut best_primal = f64::INFINITY;

    while state.k < cfg.max_outer {
        let (next, record) = match outer_iteration(cfg, problem, &penalty, &state) {
            Ok(out) => out,
            Err(e @ (Error::Dimension(_) | Error::InvalidRegime(_) | Error::Unsupported(_))) => return Err(e),
            Err(e) => {
                log::warn!("outer iteration {} failed: {e}", state.k);
                status = Status::InnerFailure;
                message = Some(e.to_string());
                break;
            }
        };
        log::debug!(
            "k={} sigma={:e} T={} B={:e} kkt={:e}",
            record.k,
            record.sigma,
            record.t_used,
            record.b,
            record.residuals.max()
        );
        residuals = record.residuals;
        let at_bound = record.sigma < record.sigma_target || record.sigma >= cfg.sigma_max;
        let converged = record.b <= cfg.tol_b && residuals.max() <= cfg.tol_kkt;
        if residuals.primal_res > cfg.tol_kkt && residuals.primal_res >= 0.99 * best_primal && at_bound {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        best_primal = best_primal.min(residuals.primal_res);
        report_trace.records.push(record);
        state = next;
        if converged {
            status = Status::Optimal;
            break;
        }
        if state.y.norm() > DIVERGENCE_NORM || stagnant >= STAGNATION_WINDOW {
            status = Status::Diverged;
            message = Some(if stagnant >= STAGNATION_WINDOW {
                "primal residual stagnated at the step-size bound".to_string()
            } else {
                "multipliers diverged".to_string()
            });
            break;
        }
    }

    let total_newton_steps = report_trace.records.iter().map(|r| r.t_used).sum();
    Ok(SolveReport {
        status,
        x: state.x.clone(),
        y: state.y.clone(),
        residuals,
        outer_iterations: state.k,
        total_newton_steps,
        sigma_final: state.sigma.unwrap_or(cfg.sigma0),
        state,
        trace: report_trace,
        message,
    })
}

/// [`run`] from [`default_start`].
pub fn solve(problem: &ProblemSpec, cfg: &SolverConfig) -> Result<SolveReport> {
    let (x0, y0) = default_start(cfg, problem);
    run(cfg, problem, x0, y0)
}

/// One entry of a batch.
#[derive(Debug, Clone)]
pub struct Job {
    pub problem: ProblemSpec,
    pub config: SolverConfig,
}

/// Solves independent problems, in parallel when the feature is enabled.
pub fn solve_batch(jobs: &[Job]) -> Vec<Result<SolveReport>> {
    par_map(jobs, |j| solve(&j.problem, &j.config))
}

/// Sequential reference for [`solve_batch`].
pub fn solve_batch_sequential(jobs: &[Job]) -> Vec<Result<SolveReport>> {
    seq_map(jobs, |j| solve(&j.problem, &j.config))
}
