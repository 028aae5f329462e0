use std::sync::Arc;

use proptest::prelude::*;

use bsdelab::bsde::{solution_diff, solve_bsde, BsdeInstance, Scheme, DYNAMICS_TOL};
use bsdelab::constants::{power_sum_bounds, young_bound};
use bsdelab::counterexample::ladder_from_path;
use bsdelab::family::{DriverFamily, InstanceFamily, ObstacleFamily, TerminalFamily};
use bsdelab::generator::GeneratorSpec;
use bsdelab::norms::{norm_report, NormConfig};
use bsdelab::reflected::{check_skorokhod, solve_reflected};
use bsdelab::tree::TreeConfig;

fn family(seed: u64, n: usize, d: usize, reveal: bool, l_y: f64, l_z: f64) -> InstanceFamily {
    let mut tree = TreeConfig::new(1.0, n, d);
    if reveal {
        tree = tree.with_reveal(1.0, &["a", "b", "c"], &[0.5, 0.25, 0.25]);
    }
    InstanceFamily {
        tree,
        driver: DriverFamily { l_y, l_z, ..Default::default() },
        terminal: TerminalFamily::Smooth { scale: 2.0 },
        obstacle: ObstacleFamily::Table { scale: 1.0, shift: 0.0 },
        count: 1,
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trees_are_exact(n in 1usize..=6, d in 1usize..=2, reveal in any::<bool>()) {
        let mut cfg = TreeConfig::new(1.0, n, d);
        if reveal {
            cfg = cfg.with_reveal(1.0, &["x", "y"], &[0.3, 0.7]);
        }
        prop_assert!(cfg.build().unwrap().validate().is_ok());
    }

    #[test]
    fn reflected_solutions_satisfy_their_constraints(
        seed in any::<u64>(),
        n in 2usize..=5,
        d in 1usize..=2,
        reveal in any::<bool>(),
        l_y in 0.0f64..2.0,
        l_z in 0.0f64..2.0,
        implicit in any::<bool>(),
    ) {
        let f = family(seed, n, d, reveal, l_y, l_z);
        let tree = f.build_tree().unwrap();
        let m = f.member(&tree, 0).unwrap();
        let scheme = if implicit { Scheme::Implicit } else { Scheme::Explicit };
        let sol = solve_reflected(&m.instance, scheme).unwrap();
        let s = m.instance.obstacle.as_ref().unwrap();
        let scale = sol.y.values().iter().fold(1.0f64, |a, v| a.max(v.abs()));
        prop_assert!(sol.dynamics_residual(&tree) <= DYNAMICS_TOL);
        prop_assert!(check_skorokhod(&tree, &sol, s).abs() <= 1e-12 * scale);
        prop_assert!(sol.orthogonality_defect(&tree) <= 1e-12 * scale);
        prop_assert_eq!(sol.k[0], 0.0);
        prop_assert!(sol.k.min_increment(&tree) >= 0.0);
        prop_assert_eq!(sol.k.sibling_spread(&tree), 0.0);
        for node in 0..tree.node_count() {
            prop_assert!(sol.y[node] >= s[node]);
        }
    }

    #[test]
    fn comparison_for_the_zero_driver(seed in any::<u64>(), shift in 0.0f64..1.0, n in 1usize..=5) {
        let f = family(seed, n, 1, true, 0.0, 0.0);
        let tree = f.build_tree().unwrap();
        let base = f.member(&tree, 0).unwrap().instance;
        let zero = GeneratorSpec::zero().build(&tree).unwrap();
        let lo = BsdeInstance::new(tree.clone(), base.xi.clone(), zero.clone()).unwrap();
        let hi_xi: Vec<f64> = base.xi.iter().map(|v| v + shift).collect();
        let hi = BsdeInstance::new(tree.clone(), hi_xi, zero).unwrap();
        let a = solve_bsde(&hi, Scheme::Implicit).unwrap();
        let b = solve_bsde(&lo, Scheme::Implicit).unwrap();
        for node in 0..tree.node_count() {
            prop_assert!(a.y[node] >= b.y[node]);
        }
        let diff = solution_diff(&tree, &a, &b).unwrap();
        for node in 0..tree.node_count() {
            prop_assert!((diff.dy[node] - shift).abs() <= 1e-12);
        }
    }

    #[test]
    fn weighted_norms_grow_with_alpha(seed in any::<u64>(), p in 1.1f64..4.0, a in 0.0f64..3.0, da in 0.0f64..3.0) {
        let f = family(seed, 4, 1, false, 1.0, 1.0);
        let tree: Arc<_> = f.build_tree().unwrap();
        let m = f.member(&tree, 0).unwrap();
        let sol = solve_reflected(&m.instance, Scheme::Implicit).unwrap();
        let lo = norm_report(&tree, &sol, NormConfig::new(p, a).unwrap());
        let hi = norm_report(&tree, &sol, NormConfig::new(p, a + da).unwrap());
        let tol = 1e-12;
        prop_assert!(lo.s_p <= hi.s_p * (1.0 + tol));
        prop_assert!(lo.h_p_alpha <= hi.h_p_alpha * (1.0 + tol));
        prop_assert!(lo.m_p_alpha <= hi.m_p_alpha * (1.0 + tol));
        prop_assert!(lo.i_p_alpha <= hi.i_p_alpha * (1.0 + tol));
    }

    #[test]
    fn young_holds(a in 0.0f64..50.0, b in 0.0f64..50.0, beta in 0.01f64..10.0, p in 1.05f64..6.0) {
        let (lhs, rhs) = young_bound(a, b, beta, p).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn power_sums_are_bracketed(values in prop::collection::vec(0.001f64..10.0, 1..12), l in 0.1f64..5.0) {
        let (lo, mid, hi) = power_sum_bounds(&values, l).unwrap();
        prop_assert!(lo <= mid * (1.0 + 1e-12));
        prop_assert!(mid <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn ladder_stays_within_threshold(steps in prop::collection::vec(-0.05f64..0.05, 1..400), eps in 0.01f64..0.3) {
        let mut w = vec![0.0];
        for s in steps {
            w.push(w.last().unwrap() + s);
        }
        let l = ladder_from_path(&w, eps);
        prop_assert!(l.sup_gap < eps);
        prop_assert!((l.tv - l.tv_plus - l.tv_minus).abs() <= 1e-12 * (1.0 + l.tv));
        prop_assert_eq!(l.simultaneous, 0);
        prop_assert!(l.tv >= eps * l.crossings as f64 - 1e-12);
    }
}
