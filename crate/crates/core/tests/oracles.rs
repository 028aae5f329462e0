//! Closed-form values computed by hand or with an independent script.

use std::sync::Arc;

use bsdelab::bsde::{solve_bsde, solve_linear_bsde, BsdeInstance, Scheme};
use bsdelab::constants::{c_prime, meyer_constant};
use bsdelab::counterexample::overshoot_slack;
use bsdelab::generator::{AffineGenerator, GeneratorSpec, ProcessSpec};
use bsdelab::martingale::{girsanov_change, represent_martingale};
use bsdelab::process::{AdaptedProcess, PredictableProcess};
use bsdelab::reflected::{alpha_star, check_skorokhod, solve_reflected, truncate_instance};
use bsdelab::stopping::StoppingProblem;
use bsdelab::tree::{ScenarioTree, TreeConfig};

fn tree(horizon: f64, n: usize, d: usize) -> Arc<ScenarioTree> {
    Arc::new(TreeConfig::new(horizon, n, d).build().unwrap())
}

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b}");
}

#[test]
fn discounted_recursion_matches_discrete_exponential() {
    let t = tree(1.0, 8, 1);
    let xi = vec![1.0; t.leaves().len()];
    // (1 + λ dt)^{-n} for the implicit step, (1 − λ dt)^n for the explicit one.
    for (lambda, implicit, explicit) in [
        (0.5, 0.6156990595395905, 0.5967194738332182),
        (-1.0, 2.9102853680465293, 2.565784513950348),
    ] {
        let g = AffineGenerator::constant(&t, 0.0, lambda, &[0.0]).unwrap();
        let inst = BsdeInstance::new(t.clone(), xi.clone(), Arc::new(g.clone())).unwrap();
        close(solve_bsde(&inst, Scheme::Implicit).unwrap().y[0], implicit, 1e-12);
        close(solve_bsde(&inst, Scheme::Explicit).unwrap().y[0], explicit, 1e-12);
        close(solve_linear_bsde(&t, &xi, &g).unwrap().y[0], implicit, 1e-12);
    }
}

#[test]
fn constant_driver_gives_minus_c_t() {
    let t = tree(2.0, 5, 2);
    let g = AffineGenerator::constant(&t, 1.5, 0.0, &[0.0, 0.0]).unwrap();
    let inst = BsdeInstance::new(t.clone(), vec![0.0; t.leaves().len()], Arc::new(g)).unwrap();
    let sol = solve_bsde(&inst, Scheme::Implicit).unwrap();
    close(sol.y[0], -3.0, 1e-12);
}

#[test]
fn girsanov_drift_of_brownian_terminal_value() {
    let t = tree(1.0, 6, 1);
    let xi = ProcessSpec::Linear { constant: 0.0, time: 0.0, brownian: vec![1.0], reveal: vec![] }
        .materialize(&t)
        .unwrap();
    let eta = 0.3;
    let g = AffineGenerator::constant(&t, 0.0, 0.0, &[eta]).unwrap();
    let leaves: Vec<f64> = t.leaves().map(|l| xi[l]).collect();
    let linear = solve_linear_bsde(&t, &leaves, &g).unwrap();
    close(linear.y[0], -eta, 1e-12);
    let inst = BsdeInstance::new(t.clone(), leaves, Arc::new(g)).unwrap();
    close(solve_bsde(&inst, Scheme::Implicit).unwrap().y[0], -eta, 1e-12);

    let q = girsanov_change(&t, &PredictableProcess::from_fn(&t, 1, |_, out| out[0] = eta)).unwrap();
    close(q.expected_density(&t), 1.0, 1e-12);
}

#[test]
fn square_of_brownian_motion_is_fully_hedged() {
    let t = tree(1.0, 3, 1);
    let n = AdaptedProcess::from_fn(&t, |k| t.w(k)[0].powi(2) + (1.0 - t.time_of(k)));
    let rep = represent_martingale(&t, &n).unwrap();
    for p in 0..t.level(3).start {
        close(rep.z.at_parent(p)[0], 2.0 * t.w(p)[0], 1e-12);
    }
    assert!(rep.m.values().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn revealed_label_is_purely_orthogonal() {
    let t = Arc::new(
        TreeConfig::new(1.0, 2, 1)
            .with_reveal(0.5, &["a", "b"], &[0.25, 0.75])
            .build()
            .unwrap(),
    );
    let n = AdaptedProcess::from_fn(&t, |k| match t.revealed_labels(k)[0] {
        Some(l) => f64::from(l == 0),
        None => 0.25,
    });
    let rep = represent_martingale(&t, &n).unwrap();
    assert!(rep.z.values().iter().all(|v| v.abs() < 1e-12));
    for k in 0..t.node_count() {
        close(rep.m[k], n[k] - 0.25, 1e-12);
    }
}

#[test]
fn one_step_reflection_by_hand() {
    let t = tree(1.0, 1, 1);
    let gen = GeneratorSpec::zero().build(&t).unwrap();
    let xi = ProcessSpec::Linear { constant: 0.0, time: 0.0, brownian: vec![1.0], reveal: vec![] }
        .materialize(&t)
        .unwrap();
    let obstacle = AdaptedProcess::constant(&t, 0.3);
    let inst = BsdeInstance::from_process(t.clone(), &xi, gen)
        .unwrap()
        .with_obstacle(obstacle.clone())
        .unwrap();
    let sol = solve_reflected(&inst, Scheme::Implicit).unwrap();
    close(sol.y[0], 0.3, 1e-15);
    for l in t.leaves() {
        close(sol.k[l], 0.3, 1e-15);
        close(sol.m[l], 0.0, 1e-15);
    }
    close(sol.z.at_parent(0)[0], 1.0, 1e-15);
    let clipped = inst.obstacle.as_ref().unwrap();
    close(check_skorokhod(&t, &sol, clipped), 0.0, 1e-15);
}

#[test]
fn stopping_value_by_hand() {
    // Two steps, dt = 1/2: rewards 0.2 at the root, (0.5, -0.1) after one
    // step and the terminal values below; cost 0.1 per unit time.
    let t = tree(1.0, 2, 1);
    let mut reward = vec![0.0; t.node_count()];
    reward[0] = 0.2;
    reward[1] = 0.5;
    reward[2] = -0.1;
    for (i, l) in t.leaves().enumerate() {
        reward[l] = [1.0, 0.0, 0.4, -0.4][i];
    }
    let reward = AdaptedProcess::from_values(&t, reward).unwrap();
    let cost = vec![0.1; t.level(2).start];
    let prob = StoppingProblem::new(&t, reward, cost).unwrap();
    let v = prob.solve().unwrap();
    let brute = prob.enumerate().unwrap();
    // Node 1: max(0.5, 0.5 − 0.05) = 0.5; node 2: max(−0.1, 0 − 0.05) = −0.05;
    // root: max(0.2, (0.5 − 0.05)/2 − 0.05 = 0.175) = 0.2.
    close(v.value[1], 0.5, 1e-15);
    close(v.value[2], -0.05, 1e-15);
    close(v.value[0], 0.2, 1e-15);
    for k in 0..t.node_count() {
        close(brute[k], v.value[k], 1e-15);
    }
}

#[test]
fn truncation_of_two_point_terminal_value() {
    let t = tree(1.0, 1, 1);
    let inst = BsdeInstance::new(t.clone(), vec![-5.0, 3.0], GeneratorSpec::zero().build(&t).unwrap()).unwrap();
    assert_eq!(truncate_instance(&inst, 4.0).unwrap().xi, vec![-4.0, 3.0]);
    assert_eq!(truncate_instance(&inst, 10.0).unwrap().xi, vec![-5.0, 3.0]);
}

#[test]
fn printed_constants() {
    close(c_prime(2.0).unwrap(), 4.0, 1e-15);
    close(meyer_constant(2.0).unwrap(), 12.0, 1e-15);
    close(alpha_star(1.0, 1.0), 5.0, 0.0);
    close(overshoot_slack(1e-5), 0.015174271293851465, 1e-16);
}
