//! Property tests for symmetries and invariances of the public API.

use std::sync::Arc;

use fracseg::core::{make_params, FieldPair, LogPolarField, LogPolarGrid};
use fracseg::kernels::{hyperbolic_distance, poisson_kernel, KernelEval};
use fracseg::monotone::{frequency_trace, monotonicity_defect};
use fracseg::spectral::{exact_homogeneous_pair, half_angle_profile, solve_mixed_eigen, Branch};
use proptest::prelude::*;

fn pair(s: f64) -> FieldPair {
    let p = make_params(s).unwrap();
    let grid = Arc::new(LogPolarGrid::new(-3.0, 3.0, 48, 12, p).unwrap());
    exact_homogeneous_pair(grid, Branch::Segregated).unwrap()
}

fn times(f: &LogPolarField, c: f64) -> LogPolarField {
    LogPolarField::new(f.grid.clone(), f.values.mapv(|x| c * x), f.kind).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn swap_mirror_is_an_involution(s in 0.05f64..0.95) {
        let w = pair(s);
        let back = w.swapped_mirror().swapped_mirror();
        prop_assert_eq!(&back.u.values, &w.u.values);
        prop_assert_eq!(&back.v.values, &w.v.values);
        let once = w.swapped_mirror();
        let gap = (&once.u.values - &w.u.values).mapv(f64::abs).fold(0.0f64, |a, b| a.max(*b));
        prop_assert!(gap <= 1e-12 * w.scale());
    }

    #[test]
    fn frequency_ignores_amplitude(s in 0.1f64..0.9, c in 0.01f64..100.0) {
        let p = make_params(s).unwrap();
        let w = pair(s);
        let scaled = FieldPair::new(times(&w.u, c), times(&w.v, c)).unwrap();
        let n1 = frequency_trace(&w, p).unwrap().frequency;
        let n2 = frequency_trace(&scaled, p).unwrap().frequency;
        for (a, b) in n1.iter().zip(&n2) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn kernel_is_positive_and_homogeneous(s in 0.05f64..0.95, x in -20.0f64..20.0, y in 0.01f64..20.0, lam in 0.1f64..10.0) {
        let k = KernelEval::new(1, make_params(s).unwrap()).unwrap();
        let p = poisson_kernel(&[x], y, &k).unwrap();
        prop_assert!(p > 0.0);
        let q = poisson_kernel(&[lam * x], lam * y, &k).unwrap();
        prop_assert!((q * lam - p).abs() <= 1e-12 * p);
        prop_assert!((poisson_kernel(&[-x], y, &k).unwrap() - p).abs() <= 1e-14 * p);
    }

    #[test]
    fn hyperbolic_distance_is_an_isometry_invariant_metric(
        x1 in -5.0f64..5.0, y1 in 0.01f64..5.0, x2 in -5.0f64..5.0, y2 in 0.01f64..5.0,
        x3 in -5.0f64..5.0, y3 in 0.01f64..5.0, lam in 0.1f64..10.0, b in -3.0f64..3.0,
    ) {
        let d = |a: f64, ya: f64, c: f64, yc: f64| hyperbolic_distance(&[a], ya, &[c], yc).unwrap();
        let d12 = d(x1, y1, x2, y2);
        prop_assert!(d12 >= 0.0);
        prop_assert!(d(x1, y1, x1, y1) == 0.0);
        prop_assert!((d12 - d(x2, y2, x1, y1)).abs() <= 1e-12 * (1.0 + d12));
        prop_assert!(d12 <= d(x1, y1, x3, y3) + d(x3, y3, x2, y2) + 1e-9);
        let moved = d(lam * x1 + b, lam * y1, lam * x2 + b, lam * y2);
        prop_assert!((moved - d12).abs() <= 1e-9 * (1.0 + d12));
    }

    #[test]
    fn half_angle_profile_is_a_monotone_unit_profile(s in 0.05f64..0.95, t1 in 0.0f64..std::f64::consts::PI, t2 in 0.0f64..std::f64::consts::PI) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let (a, b) = (half_angle_profile(lo, s), half_angle_profile(hi, s));
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(a >= b);
    }

    #[test]
    fn nondecreasing_sequences_have_no_defect(mut v in proptest::collection::vec(-10.0f64..10.0, 2..40)) {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assert!(monotonicity_defect(&v) <= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn first_mixed_eigenvalue_matches_closed_form(s in 0.1f64..0.9) {
        let p = make_params(s).unwrap();
        let e = solve_mixed_eigen(p, 2, 512).unwrap();
        prop_assert!((e.eigenvalues[0] - p.lambda1()).abs() <= 1e-4 * p.lambda1());
        prop_assert!(e.eigenvalues[1] > e.eigenvalues[0]);
    }
}
