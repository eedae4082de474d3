mod common;

use common::{convex_problem, feasible_samples};
use proptest::prelude::*;
use qcert::kkt::{minimize, KktOptions};

const KKT_TOL: f64 = 1e-6;
/// Slack allowed when comparing `f*` against sampled feasible values.
const OPTIMALITY_SLACK: f64 = 1e-6;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kkt_point_is_feasible_and_globally_optimal(seed in any::<u64>()) {
        let p = convex_problem(seed);
        let sol = minimize(&p.f, &p.set, &KktOptions::default()).unwrap();
        prop_assert!(sol.stationarity_residual <= KKT_TOL);
        prop_assert!(sol.complementarity_residual <= KKT_TOL);
        prop_assert!(sol.lambda.iter().all(|&l| l >= 0.0));
        prop_assert!(p.set.contains(&sol.xstar, 1e-9));
        prop_assert!((p.f.evaluate(&sol.xstar).unwrap() - sol.fstar).abs() <= 1e-12 * (1.0 + sol.fstar.abs()));
        for x in feasible_samples(&p, 100, seed ^ 0x5eed) {
            let fx = p.f.evaluate(&x).unwrap();
            prop_assert!(fx >= sol.fstar - OPTIMALITY_SLACK, "f({x:?}) = {fx} < {}", sol.fstar);
        }
    }

    #[test]
    fn multipliers_scale_inversely_with_constraints(seed in any::<u64>(), c in 0.2f64..5.0) {
        let p = convex_problem(seed);
        let opts = KktOptions::default();
        let sol = minimize(&p.f, &p.set, &opts).unwrap();
        let scaled = p.set.scaled(&vec![c; p.set.len()]);
        let sol_c = minimize(&p.f, &scaled, &opts).unwrap();
        prop_assert!((sol.fstar - sol_c.fstar).abs() <= 1e-6 * (1.0 + sol.fstar.abs()));
        for (l, lc) in sol.lambda.iter().zip(&sol_c.lambda) {
            prop_assert!((l / c - lc).abs() <= 1e-5 * (1.0 + l.abs()), "{l}/{c} vs {lc}");
        }
    }

    #[test]
    fn barrier_trajectory_is_nonincreasing(seed in any::<u64>()) {
        let p = convex_problem(seed);
        let sol = minimize(&p.f, &p.set, &KktOptions::default()).unwrap();
        prop_assert!(!sol.trajectory.is_empty());
        for w in sol.trajectory.windows(2) {
            let ((mu0, f0), (mu1, f1)) = (w[0], w[1]);
            prop_assert!(mu1 < mu0);
            prop_assert!(f1 <= f0 + 1e-9 * (1.0 + f0.abs()), "f rose from {f0} to {f1}");
        }
    }

    #[test]
    fn same_seed_same_answer(seed in any::<u64>()) {
        let p = convex_problem(seed);
        let a = minimize(&p.f, &p.set, &KktOptions::default()).unwrap();
        let b = minimize(&p.f, &p.set, &KktOptions::default()).unwrap();
        prop_assert_eq!(a, b);
    }
}
