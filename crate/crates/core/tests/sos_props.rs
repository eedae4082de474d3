use proptest::prelude::*;
use qcert::polyring::{monomials_up_to, Polynomial};
use qcert::sos::{check_not_sos, is_sos, is_sos_convex, NotSos, SosConvexVerdict, SosOptions, SosVerdict};

fn poly_of_degree(n: usize, d: u32) -> impl Strategy<Value = Polynomial> {
    let basis = monomials_up_to(n, d);
    prop::collection::vec(-1.0f64..1.0, basis.len())
        .prop_map(move |c| Polynomial::from_terms(n, basis.clone().into_iter().zip(c)).unwrap())
}

/// `Σ q_i²` with `q_i` of degree at most `d`.
fn explicit_sos() -> impl Strategy<Value = Polynomial> {
    (1usize..=3, 1u32..=3, 1usize..=3).prop_flat_map(|(n, d, k)| {
        prop::collection::vec(poly_of_degree(n, d), k)
            .prop_map(move |qs| qs.iter().fold(Polynomial::zero(n), |acc, q| acc + q.square()))
    })
}

fn affine_power_sum() -> impl Strategy<Value = Polynomial> {
    (1usize..=3).prop_flat_map(|n| {
        prop::collection::vec(poly_of_degree(n, 1), 1..=3)
            .prop_map(move |ls| ls.iter().fold(Polynomial::zero(n), |acc, l| acc + l.pow(4)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn explicit_sums_of_squares_are_recognized(f in explicit_sos()) {
        match is_sos(&f, &SosOptions::default()).unwrap() {
            SosVerdict::Sos(dec) => {
                let defect = (&f - &dec.expand(f.nvars())).l1_norm();
                prop_assert!(defect <= 1e-6, "defect {defect}");
                prop_assert!(dec.residual <= 1e-6);
            }
            other => prop_assert!(false, "{other:?} for {}", f.format()),
        }
    }

    #[test]
    fn pruning_does_not_change_the_verdict(f in explicit_sos()) {
        let pruned = is_sos(&f, &SosOptions::default()).unwrap();
        let full = is_sos(&f, &SosOptions { prune: false, ..SosOptions::default() }).unwrap();
        prop_assert_eq!(pruned.is_sos(), full.is_sos());
    }

    #[test]
    fn negative_somewhere_is_never_sos(f in explicit_sos(), shift in 0.1f64..5.0) {
        // f − f(0) − shift is negative at the origin
        let n = f.nvars();
        let origin = vec![0.0; n];
        let g = &f - &Polynomial::constant(n, f.evaluate(&origin).unwrap() + shift);
        match is_sos(&g, &SosOptions::default()).unwrap() {
            SosVerdict::NotSos(cert) => prop_assert!(check_not_sos(&g, &cert, 1e-6)),
            SosVerdict::Sos(_) => prop_assert!(false, "accepted {}", g.format()),
            SosVerdict::Inconclusive(_) => {}
        }
    }

    #[test]
    fn sums_of_affine_fourth_powers_are_sos_convex(f in affine_power_sum()) {
        match is_sos_convex(&f, &SosOptions::default()).unwrap() {
            SosConvexVerdict::SosConvex(w) => {
                let defect = f.hessian().checked_sub(&w.factor.gram()).unwrap().max_entry_l1();
                prop_assert!(defect <= 1e-6, "defect {defect}");
            }
            other => prop_assert!(false, "{other:?} for {}", f.format()),
        }
    }
}

#[test]
fn motzkin_has_a_checkable_dual_certificate() {
    let m = Polynomial::parse("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", 2).unwrap();
    for prune in [true, false] {
        let opts = SosOptions { prune, ..SosOptions::default() };
        match is_sos(&m, &opts).unwrap() {
            SosVerdict::NotSos(cert @ NotSos::Dual { .. }) => assert!(check_not_sos(&m, &cert, 1e-6)),
            other => panic!("prune={prune}: {other:?}"),
        }
    }
}

#[test]
fn dual_certificate_does_not_transfer_to_sos_polynomial() {
    let m = Polynomial::parse("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", 2).unwrap();
    let SosVerdict::NotSos(cert) = is_sos(&m, &SosOptions::default()).unwrap() else {
        panic!("Motzkin accepted");
    };
    let square = Polynomial::parse("(x1^2*x2 - 1)^2 + (x1*x2^2)^2", 2).unwrap();
    assert!(!check_not_sos(&square, &cert, 1e-6));
}

#[test]
fn odd_degree_is_refuted_structurally() {
    let f = Polynomial::parse("x1^3 + x2^2", 2).unwrap();
    assert!(matches!(
        is_sos(&f, &SosOptions::default()).unwrap(),
        SosVerdict::NotSos(NotSos::OddDegree(3))
    ));
}
