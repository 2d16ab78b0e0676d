mod common;

use owp::driver::{prepare, OwpOptions};
use owp::io::{parse_problem, serialize_problem};
use owp::moment::{assemble_sdp, Tms};
use owp::oracle::{sample_wp, solve_lsp, LspOptions};
use owp::poly::binomial;
use owp::reformulate::lift_point;
use owp::representation::{
    build_p_matrix, find_p_inverse, kkt_residual_explicit, multipliers_at, RepChoice, RepKind,
};
use owp::{grlex_basis, ConstraintStructure, Exponent, MopProblem, Polynomial};
use proptest::prelude::*;

fn poly_strategy(n: usize, max_deg: u32, max_terms: usize) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec(
        (prop::collection::vec(0..=max_deg, n), -5.0f64..5.0),
        0..=max_terms,
    )
    .prop_map(move |terms| {
        let mut p = Polynomial::zero(n);
        for (e, c) in terms {
            if e.iter().sum::<u32>() <= max_deg {
                p.add_term(Exponent::new(e), c);
            }
        }
        p
    })
}

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

/// Coefficient-wise equality relative to the larger coefficient scale.
fn close(a: &Polynomial, b: &Polynomial, rel: f64) -> bool {
    let scale = a.max_abs_coef().max(b.max_abs_coef()).max(1.0);
    a.approx_eq(b, rel * scale)
}

fn structure_strategy() -> impl Strategy<Value = (usize, ConstraintStructure)> {
    (2usize..=4).prop_flat_map(|n| {
        let boxed = prop::collection::vec(0.2f64..3.0, n)
            .prop_map(|a| ConstraintStructure::Box { a })
            .boxed();
        let poly = (1..=n)
            .prop_flat_map(move |l| {
                (
                    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n), l),
                    prop::collection::vec(-1.0f64..1.0, l),
                )
            })
            .prop_map(|(mut a, b)| {
                // diagonal dominance keeps the rows independent
                for (i, row) in a.iter_mut().enumerate() {
                    row[i] += 4.0;
                }
                ConstraintStructure::Polyhedral { a, b }
            })
            .boxed();
        let tri = (
            prop::collection::vec(prop_oneof![-2.0f64..-0.5, 0.5f64..2.0], n),
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n + 1), n),
        )
            .prop_map(move |(alpha, coefs)| {
                let q = coefs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let mut p = Polynomial::constant(n, c[n]);
                        for (j, cj) in c.iter().enumerate().take(n).skip(i + 1) {
                            p -= &Polynomial::var(n, j).pow(2).scale(cj.abs());
                        }
                        p
                    })
                    .collect();
                ConstraintStructure::Triangular { alpha, q }
            })
            .boxed();
        prop_oneof![
            boxed,
            poly,
            tri,
            Just(ConstraintStructure::Ball),
            Just(ConstraintStructure::NonnegOrthant),
            Just(ConstraintStructure::Free),
        ]
        .prop_map(move |s| (n, s))
    })
}

fn problem_strategy() -> impl Strategy<Value = MopProblem> {
    structure_strategy().prop_flat_map(|(n, s)| {
        (
            poly_strategy(n, 3, 6),
            prop::collection::vec(poly_strategy(n, 2, 5), 1..=3),
        )
            .prop_map(move |(f0, objs)| MopProblem::new(f0, objs, s.clone()).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ring_axioms(
        p in poly_strategy(3, 3, 6),
        q in poly_strategy(3, 3, 6),
        r in poly_strategy(3, 3, 6),
    ) {
        prop_assert!(close(&(&(&p + &q) * &r), &(&(&p * &r) + &(&q * &r)), 1e-12));
        prop_assert!(close(&(&p * &q), &(&q * &p), 1e-12));
        prop_assert!(close(&(&(&p + &q) + &r), &(&p + &(&q + &r)), 1e-12));
    }

    #[test]
    fn product_evaluates_to_product(
        p in poly_strategy(3, 3, 6),
        q in poly_strategy(3, 3, 6),
        v in point(3),
    ) {
        let lhs = (&p * &q).eval(&v);
        let rhs = p.eval(&v) * q.eval(&v);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn derivative_matches_central_differences(p in poly_strategy(3, 4, 8), v in point(3)) {
        let h = 1e-5;
        for i in 0..3 {
            let d = p.differentiate(i).unwrap().eval(&v);
            let mut a = v.clone();
            let mut b = v.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (p.eval(&a) - p.eval(&b)) / (2.0 * h);
            prop_assert!((d - fd).abs() <= 1e-6 * d.abs().max(1.0), "{d} vs {fd}");
        }
    }

    #[test]
    fn grlex_basis_counts_and_order(n in 1usize..5, d in 0u32..5) {
        let b = grlex_basis(n, d);
        prop_assert_eq!(b.len(), binomial(n + d as usize, d as usize));
        prop_assert!(b.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn structures_have_exact_left_inverse((n, s) in structure_strategy()) {
        let mut f = Polynomial::zero(n);
        for i in 0..n {
            f += &Polynomial::var(n, i).pow(2);
        }
        let p = MopProblem::new(f.clone(), vec![f], s).unwrap();
        prop_assert!(p.cprime_defect().unwrap() <= 1e-9);
    }

    #[test]
    fn problem_round_trip(p in problem_strategy()) {
        let back = parse_problem(&serialize_problem(&p)).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn simplex_points_satisfy_weight_ball(raw in prop::collection::vec(0.0f64..1.0, 1..8)) {
        let s: f64 = raw.iter().sum();
        prop_assume!(s > 1e-9);
        let w: Vec<f64> = raw.iter().map(|v| v / s).collect();
        prop_assert!(1.0 - w.iter().map(|v| v * v).sum::<f64>() >= -1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Points from the scalarization oracle lifted into each representation
    /// are feasible for the reformulated problem, and their Dirac moments
    /// are feasible for its relaxation.
    #[test]
    fn lifted_oracle_points_are_feasible(
        seed in 0u64..1000,
        raw in prop::collection::vec(0.01f64..1.0, 2),
    ) {
        let prob = common::random_ball(3, 2, seed);
        let s: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let sol = solve_lsp(&prob, &w, &LspOptions::default()).unwrap();
        let lambda = multipliers_at(&prob, &sol.x, &w);
        prop_assert!(kkt_residual_explicit(&prob, &sol.x, &w, &lambda) <= 1e-5);
        for kind in [RepKind::XW, RepKind::XLambda, RepKind::XOnly] {
            let opts = OwpOptions { rep: RepChoice::Fixed(kind), ..Default::default() };
            let Ok((rep, pop)) = prepare(&prob, &opts) else { continue };
            let v = lift_point(&rep, &sol.x, &w, &lambda);
            prop_assert!(pop.eq_residual(&v) <= 1e-6, "{kind:?} eq {}", pop.eq_residual(&v));
            prop_assert!(pop.min_ineq(&v) >= -1e-6, "{kind:?} ineq {}", pop.min_ineq(&v));
            let k = pop.min_order();
            let msdp = assemble_sdp(&pop, k, opts.equality_mode).unwrap();
            let y = Tms::dirac(&v, 2 * k);
            let scale = y.values.iter().fold(1.0f64, |a, b| a.max(b.abs()));
            let (eq, eig) = msdp.check_point(&y.values);
            // Dirac moments turn h(v) into h(v)·v^α and g(v) into g(v)·|m(v)|²,
            // so both checks inherit the point-level slack above
            prop_assert!(eq <= 1e-6 * scale, "{kind:?} dirac eq {eq}");
            prop_assert!(eig >= -1e-6 * scale, "{kind:?} dirac eig {eig}");
        }
    }

    #[test]
    fn oracle_bound_refines(seed in 0u64..1000) {
        let prob = common::random_ball(3, 2, seed);
        let coarse = sample_wp(&prob, 5, &LspOptions::default()).upper_bound.unwrap();
        let fine = sample_wp(&prob, 10, &LspOptions::default()).upper_bound.unwrap();
        prop_assert!(fine <= coarse + 1e-9);
    }

    #[test]
    fn left_inverse_is_exact_when_found(seed in 0u64..1000) {
        let prob = common::random_quadratic(3, seed);
        let pm = build_p_matrix(&prob);
        if let Some(inv) = find_p_inverse(&pm, 2).unwrap() {
            prop_assert!(inv.checked_mul(&pm).unwrap().identity_defect() <= 1e-9);
        }
    }
}

#[test]
fn relaxation_bounds_increase_with_order() {
    let prob = common::parabola_cap();
    let opts = OwpOptions {
        rep: RepChoice::Fixed(RepKind::XOnly),
        ..Default::default()
    };
    let (_, pop) = prepare(&prob, &opts).unwrap();
    let k0 = pop.min_order();
    let mut last = f64::NEG_INFINITY;
    for k in k0..k0 + 3 {
        let msdp = assemble_sdp(&pop, k, opts.equality_mode).unwrap();
        let sol = owp::sdp::solve(&msdp.to_sdp(), &opts.sdp);
        assert!(sol.status.is_solved(), "order {k}: {:?}", sol.status);
        assert!(sol.pobj >= last - 1e-6, "order {k}: {} < {last}", sol.pobj);
        last = sol.pobj;
    }
}

#[test]
fn relaxation_bound_below_oracle_points() {
    let prob = common::random_ball(3, 3, 41);
    let opts = OwpOptions::default();
    let (_, pop) = prepare(&prob, &opts).unwrap();
    let k = pop.min_order();
    let msdp = assemble_sdp(&pop, k, opts.equality_mode).unwrap();
    let sol = owp::sdp::solve(&msdp.to_sdp(), &opts.sdp);
    assert!(sol.status.is_solved());
    let report = sample_wp(&prob, 8, &LspOptions::default());
    for s in &report.samples {
        assert!(sol.pobj <= s.f0 + 1e-6, "{} > {}", sol.pobj, s.f0);
    }
}
