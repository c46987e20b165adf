mod common;

use bpalm::diagnostics::{conic_feasibility_check, ergodic_gap_check, fejer_check, rate_fit, summability_check};
use bpalm::oracle::{golden_suite, GoldenFamily};
use bpalm::problem::project_simplex;
use bpalm::{solve, Error, NonsmoothTerm, RhoSchedule, Status};
use common::solved;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn converged_runs_are_fejer_monotone() {
    let mut converged = 0;
    for (gp, r) in solved() {
        let fejer = fejer_check(&r.trace, &gp.x_star, &gp.y_star, &gp.geometry());
        match fejer {
            Ok(f) => assert!(f.monotone, "{}: {:?}", gp.name, f.violations),
            // a box solution on the boundary has no finite distance
            Err(Error::Domain(_)) => assert!(gp.bounds.is_some() && r.status != Status::Optimal, "{}", gp.name),
            Err(e) => panic!("{}: {e}", gp.name),
        }
        if r.status == Status::Optimal {
            converged += 1;
        }
    }
    assert!(converged >= 20);
}

#[test]
fn ergodic_gap_bound_holds_at_random_test_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (gp, r) in solved() {
        let mut points = vec![(gp.x_star.clone(), gp.y_star.clone())];
        for _ in 0..8 {
            let x = gp.x_star.map(|v| v + rng.random_range(-0.5..0.5));
            let x = match &gp.bounds {
                Some((l, u)) => x.zip_zip_map(l, u, |v, l, u| v.clamp(l + 1e-3, u - 1e-3)),
                None => x,
            };
            let y = gp.y_star.map(|v| v + rng.random_range(-0.5..0.5));
            let y = match gp.spec.g {
                NonsmoothTerm::ZeroIndicator => y,
                NonsmoothTerm::NonposOrthant => y.map(|v| v.abs() + 1e-3),
                NonsmoothTerm::VecMax => project_simplex(&y.map(|v| v.abs() + 0.05)),
                NonsmoothTerm::OneNorm => y.map(|v| v.clamp(-1.0, 1.0)),
            };
            points.push((x, y));
        }
        let report = ergodic_gap_check(&gp.spec, &r.trace, &points, &gp.geometry());
        assert!(report.checked > 0);
        assert!(report.max_violation <= 1e-8, "{}: {}", gp.name, report.max_violation);
    }
}

#[test]
fn conic_feasibility_bound_on_cone_constrained_runs() {
    let mut checked = 0;
    for (gp, r) in solved() {
        if !matches!(gp.family, GoldenFamily::Equality | GoldenFamily::ExpInequality | GoldenFamily::SpenceInequality) {
            continue;
        }
        let c = conic_feasibility_check(&gp.spec, &r.trace, &gp.x_star, &gp.y_star, &gp.geometry()).unwrap();
        assert!(c.max_excess <= 1e-8, "{}: {}", gp.name, c.max_excess);
        checked += 1;
    }
    assert!(checked >= 14);
    let (gp, r) = solved().iter().find(|(g, _)| g.family == GoldenFamily::VecMax).unwrap();
    assert!(matches!(
        conic_feasibility_check(&gp.spec, &r.trace, &gp.x_star, &gp.y_star, &gp.geometry()),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn proximal_residuals_are_summable() {
    for (gp, r) in solved() {
        if let Ok(s) = summability_check(&r.trace, &gp.x_star, &gp.y_star, &gp.geometry()) {
            assert!(s.holds, "{}: {} > {}", gp.name, s.partial_sums.last().unwrap(), s.bound);
        }
    }
}

#[test]
fn growing_steps_and_shrinking_errors_give_a_superlinear_tail() {
    let gp = golden_suite().into_iter().find(|g| g.family == GoldenFamily::Equality && g.spec.n == 10).unwrap();
    let mut cfg = gp.config();
    cfg.sigma_growth = 2.0;
    cfg.rho_schedule = RhoSchedule::Geometric { rho0: 0.5, factor: 0.5 };
    let r = solve(&gp.spec, &cfg).unwrap();
    assert_eq!(r.status, Status::Optimal);
    let rate = rate_fit(&r.trace, &gp.x_star, &gp.y_star, &gp.geometry()).unwrap();
    assert!(rate.superlinear, "{:?}", rate.q);
}

#[test]
fn constant_steps_give_a_linear_tail() {
    let gp = golden_suite().into_iter().find(|g| g.family == GoldenFamily::Equality && g.spec.n == 10).unwrap();
    let mut cfg = gp.config();
    cfg.sigma_growth = 1.0;
    cfg.rho_schedule = RhoSchedule::Constant(0.5);
    let r = solve(&gp.spec, &cfg).unwrap();
    let rate = rate_fit(&r.trace, &gp.x_star, &gp.y_star, &gp.geometry()).unwrap();
    assert!(!rate.superlinear);
    let tail = &rate.q[rate.q.len() - 5..];
    let spread =
        tail.iter().copied().fold(f64::NEG_INFINITY, f64::max) - tail.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(tail[4] > 0.1 && spread < 0.1, "{tail:?}");
}

#[test]
fn solution_distances_need_a_reference_in_the_domain() {
    let (gp, r) = solved().iter().find(|(g, _)| g.family == GoldenFamily::ExpInequality).unwrap();
    let bad = DVector::from_element(gp.spec.m, -1.0);
    assert!(fejer_check(&r.trace, &gp.x_star, &bad, &gp.geometry()).is_err());
}
