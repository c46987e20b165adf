mod common;

use bpalm::newton::{newton_decrement, newton_step, solve_subproblem, GRAD_FLOOR};
use bpalm::oracle::GoldenFamily;
use common::{cases, context, primal_point, solved, unit};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn returned_point_passes_a_fresh_stopping_check(idx in 0usize..64, a in unit(), b in unit(), sigma in 0.2..3.0f64, rho in 0.05..0.9f64) {
        let case = &cases()[idx % cases().len()];
        let ctx = context(case, &a, sigma, rho);
        let start = primal_point(case, &b);
        let out = solve_subproblem(&ctx, &start, 50).unwrap();
        prop_assert_eq!(out.trace.records.len(), out.trace.iterations_used + 1);
        prop_assert!((out.trace.records[0].grad_norm - ctx.grad(&start).unwrap().norm()).abs() <= 1e-12 * (1.0 + out.trace.records[0].grad_norm));
        let fresh = ctx.stopping_check(&out.s).unwrap();
        prop_assert_eq!(fresh.lhs, out.check.lhs);
        prop_assert_eq!(fresh.rhs, out.check.rhs);
        if out.accepted {
            prop_assert!(fresh.accepted || fresh.grad.norm() <= GRAD_FLOOR);
        }
    }

    #[test]
    fn newton_direction_descends(idx in 0usize..64, a in unit(), b in unit(), sigma in 0.2..3.0f64) {
        let case = &cases()[idx % cases().len()];
        let ctx = context(case, &a, sigma, 0.5);
        let s = primal_point(case, &b);
        prop_assume!(ctx.grad(&s).unwrap().norm() > 1e-6);
        let next = newton_step(&ctx, &s).unwrap();
        let probe = &s + (&next - &s) * 1e-4;
        prop_assert!(ctx.value(&probe) < ctx.value(&s));
        prop_assert!(case.geometry.primal.in_interior(&next));
    }

    #[test]
    fn one_step_solves_quadratic_subproblems(idx in 0usize..64, a in unit(), b in unit(), sigma in 0.2..3.0f64) {
        let case = &cases()[idx % cases().len()];
        prop_assume!(case.gp.family == GoldenFamily::Equality);
        let ctx = context(case, &a, sigma, 0.5);
        let s = primal_point(case, &b);
        let next = newton_step(&ctx, &s).unwrap();
        let g = ctx.grad(&next).unwrap();
        prop_assert!(g.norm() <= 1e-9 * (1.0 + ctx.grad(&s).unwrap().norm()), "{}", g.norm());
        prop_assert!(newton_decrement(&ctx, &next, 1.0).unwrap() <= 1e-8);
    }
}

#[test]
fn observed_steps_respect_the_predictions() {
    let mut iterations = 0;
    let mut small = 0;
    for (gp, r) in solved() {
        for rec in &r.trace.records {
            iterations += 1;
            if rec.t_used <= 10 {
                small += 1;
            }
            if let Some(p) = rec.t_predicted {
                assert!(rec.t_used as u64 <= p as u64, "{} k={}: {} > {}", gp.name, rec.k, rec.t_used, p);
            }
        }
    }
    assert!(small as f64 >= 0.95 * iterations as f64);
}

#[test]
fn decrement_contracts_quadratically_on_self_concordant_runs() {
    let mut pairs = 0;
    for (gp, r) in solved().iter().filter(|(gp, _)| gp.family == GoldenFamily::BoxSc) {
        for rec in &r.trace.records {
            let m = rec.modulus.expect("sc runs record M_k");
            for w in rec.newton.records.windows(2) {
                let (l0, l1) = (m * w[0].decrement, m * w[1].decrement);
                if l0 < 0.25 {
                    pairs += 1;
                    assert!(l1 <= 2.0 * l0 * l0 + 1e-8, "{} k={}: {l1} vs {l0}", gp.name, rec.k);
                }
            }
        }
    }
    assert!(pairs > 100);
}
