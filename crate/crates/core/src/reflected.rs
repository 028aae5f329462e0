//! Reflected BSDEs with a lower obstacle: direct solver, Skorokhod check,
//! truncation, Picard iteration and the optimal-stopping representation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bsde::{backward, BsdeInstance, Scheme, SolutionQuadruple};
use crate::error::{Error, Result};
use crate::generator::{ClippedGenerator, FrozenGenerator, Generator};
use crate::martingale::{girsanov_change, MeasureChange};
use crate::norms::{leaf_expectation, norm_h, norm_h1, norm_m, norm_sp, path_sums};
use crate::process::{AdaptedProcess, PredictableProcess};
use crate::report::EstimateReport;
use crate::stopping::StoppingProblem;
use crate::tree::ScenarioTree;

/// Tolerance of the stopping representation checks, relative to `1 + |Y|`.
pub const SNELL_TOL: f64 = 1e-10;

/// Below this `|Y|` the linearization coefficient `λ` is set to zero.
pub const LINEARIZATION_FLOOR: f64 = 1e-12;

fn require_obstacle(instance: &BsdeInstance) -> Result<&AdaptedProcess> {
    instance
        .obstacle
        .as_ref()
        .ok_or_else(|| Error::Config("reflected problem needs an obstacle".into()))
}

/// Solves the reflected BSDE: `Y_k = max(S_k, ỹ_k)`, `ΔK_{k+1} = Y_k − ỹ_k`.
pub fn solve_reflected(instance: &BsdeInstance, scheme: Scheme) -> Result<SolutionQuadruple> {
    require_obstacle(instance)?;
    backward(instance, scheme)
}

/// `E[Σ_k (Y_k − S_k) ΔK_{k+1}]`.
pub fn check_skorokhod(tree: &ScenarioTree, solution: &SolutionQuadruple, obstacle: &AdaptedProcess) -> f64 {
    let acc = path_sums(tree, |c, p| (solution.y[p] - obstacle[p]) * (solution.k[c] - solution.k[p]));
    leaf_expectation(tree, |leaf| acc[leaf])
}

/// Clips `ξ`, `S` and `g` to `[−n, n]`.
pub fn truncate_instance(instance: &BsdeInstance, n: f64) -> Result<BsdeInstance> {
    if !(n > 0.0) {
        return Err(Error::Domain(format!("truncation level must be positive, got {n}")));
    }
    let clip = |v: f64| v.clamp(-n, n);
    Ok(BsdeInstance {
        tree: instance.tree.clone(),
        xi: instance.xi.iter().map(|&v| clip(v)).collect(),
        generator: Arc::new(ClippedGenerator {
            inner: instance.generator.clone(),
            level: n,
        }),
        obstacle: instance.obstacle.as_ref().map(|s| s.map(clip)),
    })
}

/// Linearization `g(Y, Z) = g⁰ + λ Y + η·Z` along a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub lambda: Vec<f64>,
    pub eta: PredictableProcess,
    pub g0: Vec<f64>,
}

/// Difference quotients: `λ = (g(Y,Z) − g(0,Z))/Y` and `η_i` from the
/// telescoping `g(0, Z^{(i)}) − g(0, Z^{(i−1)})` with `Z^{(i)}` keeping the
/// first `i` coordinates.
pub fn linearize(tree: &ScenarioTree, g: &dyn Generator, solution: &SolutionQuadruple) -> Linearization {
    let d = tree.dim();
    let inner = tree.level(tree.n_steps()).start;
    let (l_y, l_z) = g.lipschitz();
    let mut lambda = vec![0.0; inner];
    let mut g0 = vec![0.0; inner];
    let mut partial = vec![0.0; d];
    let eta = PredictableProcess::from_fn(tree, d, |p, out| {
        let z = solution.z.at_parent(p);
        let y = solution.y[p];
        let gz = g.eval(p, 0.0, z);
        lambda[p] = if y.abs() > LINEARIZATION_FLOOR {
            ((g.eval(p, y, z) - gz) / y).clamp(-l_y, l_y)
        } else {
            0.0
        };
        partial.iter_mut().for_each(|v| *v = 0.0);
        let base = g.eval(p, 0.0, &partial);
        g0[p] = base;
        let mut prev = base;
        for i in 0..d {
            partial[i] = z[i];
            let next = g.eval(p, 0.0, &partial);
            out[i] = if z[i].abs() > LINEARIZATION_FLOOR {
                ((next - prev) / z[i]).clamp(-l_z, l_z)
            } else {
                0.0
            };
            prev = next;
        }
    });
    Linearization { lambda, eta, g0 }
}

/// Checks both optimal-stopping representations of a reflected solution.
///
/// (a) `Y` is the Snell envelope of `S`, `ξ` with the running costs frozen
/// at the driver values the solver used. (b) For the implicit scheme,
/// `X Y` is the `ℚ`-Snell envelope of `X S`, `X ξ` with running cost
/// `X_{k+1} g⁰_k`, where `X` and `ℚ` come from [`linearize`].
pub fn verify_snell_representation(instance: &BsdeInstance, solution: &SolutionQuadruple) -> Result<EstimateReport> {
    let tree = instance.tree.as_ref();
    let s = require_obstacle(instance)?;
    let reward = AdaptedProcess::from_fn(tree, |n| if tree.is_leaf(n) { instance.xi_at(n) } else { s[n] });
    let depth_cap = tree.n_steps().max(crate::stopping::SNELL_DEPTH_CAP);

    let direct = StoppingProblem::new(tree, reward.clone(), solution.driver.clone())?
        .with_depth_cap(depth_cap)
        .solve()?;
    let defect_a = (0..tree.node_count())
        .map(|n| (direct.value[n] - solution.y[n]).abs() / (1.0 + solution.y[n].abs()))
        .fold(0.0, f64::max);

    let mut report_b = None;
    if solution.scheme == Scheme::Implicit {
        let lin = linearize(tree, instance.generator.as_ref(), solution);
        let q: MeasureChange = girsanov_change(tree, &lin.eta)?;
        let dt = tree.dt();
        let mut x = AdaptedProcess::constant(tree, 1.0);
        for c in 1..tree.node_count() {
            let p = tree.parent(c).expect("non-root");
            x[c] = x[p] / (1.0 + lin.lambda[p] * dt);
        }
        let cost: Vec<f64> = (0..lin.g0.len())
            .map(|p| x[tree.children(p).start] * lin.g0[p])
            .collect();
        let weights = (0..tree.node_count())
            .map(|n| if n == 0 { 1.0 } else { q.q_prob(tree, n) })
            .collect();
        let discounted = AdaptedProcess::from_fn(tree, |n| x[n] * reward[n]);
        let env = StoppingProblem::new(tree, discounted, cost)?
            .with_weights(weights)?
            .with_depth_cap(depth_cap)
            .solve()?;
        let defect = (0..tree.node_count())
            .map(|n| (env.value[n] - x[n] * solution.y[n]).abs() / (1.0 + (x[n] * solution.y[n]).abs()))
            .fold(0.0, f64::max);
        let max_lambda = lin.lambda.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let max_eta = (0..lin.eta.parents()).map(|p| lin.eta.norm(p)).fold(0.0, f64::max);
        report_b = Some((defect, max_lambda, max_eta));
    }

    let defect_b = report_b.map_or(0.0, |r| r.0);
    let mut report = EstimateReport::explicit("snell_representation", defect_a.max(defect_b), SNELL_TOL, None)
        .with("defect_direct", defect_a)
        .with("y0", solution.y[0]);
    if let Some((d, l, e)) = report_b {
        report = report.with("defect_discounted", d).with("max_abs_lambda", l).with("max_eta_norm", e);
    }
    Ok(report)
}

/// `α > 1/ε + 2L_y + L_z²/η` with `ε = 1`, `η = 1/2`.
pub fn alpha_star(l_y: f64, l_z: f64) -> f64 {
    1.0 + 2.0 * l_y + 2.0 * l_z * l_z
}

/// Distances between consecutive Picard iterates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardStep {
    /// `Ȳⁿ_0`.
    pub y0: f64,
    /// `‖δY‖_{𝕊²}`.
    pub dist_y: f64,
    /// `‖δZ‖_{ℍ^{2,α}}`.
    pub dist_z: f64,
    /// `‖δL̄‖_{𝕄^{2,α}}` with `L̄ = M̄ − K̄`.
    pub dist_l: f64,
    /// `(‖δY‖²_{ℍ^{2,α}_1} + ‖δZ‖²_{ℍ^{2,α}})^{1/2}`, the contracted distance.
    pub weighted: f64,
}

/// Record of a Picard run. Step `n` compares iterate `n` with `n − 1`;
/// the run stops at the first iterate that the next one reproduces to
/// `tol`, and that iterate's index is the iteration count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardTrace {
    pub alpha: f64,
    pub tol: f64,
    pub steps: Vec<PicardStep>,
    /// Distance of the confirming step, when the run converged.
    pub final_distance: Option<f64>,
}

impl PicardTrace {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn converged(&self) -> bool {
        self.final_distance.is_some()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.dist_y + s.dist_z).collect()
    }

    /// `w_{n+1} / w_n` on the contracted distance.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.steps
            .windows(2)
            .filter(|w| w[0].weighted > 0.0)
            .map(|w| w[1].weighted / w[0].weighted)
            .collect()
    }

    pub fn max_contraction_ratio(&self) -> f64 {
        self.contraction_ratios().into_iter().fold(0.0, f64::max)
    }
}

fn frozen_step(instance: &BsdeInstance, y: &AdaptedProcess, z: &PredictableProcess) -> Result<SolutionQuadruple> {
    let tree = instance.tree.as_ref();
    let g = instance.generator.as_ref();
    let inner = tree.level(tree.n_steps()).start;
    let mut values = vec![0.0; tree.node_count()];
    for (p, v) in values.iter_mut().enumerate().take(inner) {
        *v = g.eval(p, y[p], z.at_parent(p));
    }
    let frozen = BsdeInstance {
        generator: Arc::new(FrozenGenerator { values }),
        ..instance.clone()
    };
    backward(&frozen, Scheme::Explicit)
}

fn step_distances(tree: &ScenarioTree, alpha: f64, new: &SolutionQuadruple, old: &SolutionQuadruple) -> Result<PicardStep> {
    let dy = new.y.zip_with(&old.y, |a, b| a - b)?;
    let dz = new.z.zip_with(&old.z, |a, b| a - b)?;
    let dl = new.l().zip_with(&old.l(), |a, b| a - b)?;
    let h_y = norm_h1(tree, &dy.left_point(tree), 2.0, alpha);
    let h_z = norm_h(tree, &dz, 2.0, alpha);
    Ok(PicardStep {
        y0: new.y[0],
        dist_y: norm_sp(tree, &dy, 2.0).sqrt(),
        dist_z: h_z.sqrt(),
        dist_l: norm_m(tree, &dl, 2.0, alpha).sqrt(),
        weighted: (h_y + h_z).sqrt(),
    })
}

/// Picard iteration with the driver frozen at the previous iterate,
/// started from `(0, 0, 0)`. Works with or without an obstacle.
pub fn picard_solve(
    instance: &BsdeInstance,
    alpha: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(SolutionQuadruple, PicardTrace)> {
    let tree = instance.tree.as_ref();
    if !(alpha >= 0.0 && tol > 0.0) {
        return Err(Error::Domain(format!("need alpha >= 0 and tol > 0, got {alpha}, {tol}")));
    }
    let mut trace = PicardTrace {
        alpha,
        tol,
        steps: Vec::new(),
        final_distance: None,
    };
    let mut current = SolutionQuadruple {
        y: AdaptedProcess::zeros(tree),
        z: PredictableProcess::zeros(tree, tree.dim()),
        m: AdaptedProcess::zeros(tree),
        k: AdaptedProcess::zeros(tree),
        driver: vec![0.0; tree.level(tree.n_steps()).start],
        scheme: Scheme::Explicit,
        inner_iterations: 0,
    };
    loop {
        let next = frozen_step(instance, &current.y, &current.z)?;
        let step = step_distances(tree, alpha, &next, &current)?;
        let dist = step.dist_y + step.dist_z;
        if !trace.steps.is_empty() && dist <= tol {
            trace.final_distance = Some(dist);
            let mut out = next;
            out.scheme = Scheme::Implicit;
            return Ok((out, trace));
        }
        if trace.steps.len() >= max_iter || !dist.is_finite() {
            return Err(Error::PicardNonConvergence(Box::new(trace)));
        }
        trace.steps.push(step);
        current = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde::solve_bsde;
    use crate::generator::{AffineGenerator, FnGenerator};
    use crate::tree::TreeConfig;

    fn tree3() -> Arc<ScenarioTree> {
        Arc::new(
            TreeConfig::new(1.0, 3, 1)
                .with_reveal(1.0 / 3.0, &["a", "b"], &[0.5, 0.5])
                .build()
                .unwrap(),
        )
    }

    fn nonlinear(tree: &ScenarioTree) -> Arc<dyn Generator> {
        let w: Vec<f64> = (0..tree.node_count()).map(|n| tree.w(n)[0]).collect();
        Arc::new(FnGenerator::new((0.8, 0.6), move |n, y: f64, z: &[f64]| {
            0.3 * w[n] + 0.8 * y.sin() + 0.6 * z[0].abs()
        }))
    }

    #[test]
    fn never_binding_obstacle_is_plain_solution() {
        let tree = tree3();
        let xi: Vec<f64> = tree.leaves().map(|l| tree.w(l)[0]).collect();
        let inst = BsdeInstance::new(tree.clone(), xi, nonlinear(&tree)).unwrap();
        let plain = solve_bsde(&inst, Scheme::Implicit).unwrap();
        let refl = solve_reflected(&inst.clone().with_obstacle(AdaptedProcess::constant(&tree, -1e9)).unwrap(), Scheme::Implicit).unwrap();
        assert_eq!(plain.y, refl.y);
        assert!(refl.k.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn binding_obstacle_and_skorokhod() {
        let tree = tree3();
        let s = AdaptedProcess::from_fn(&tree, |n| 2.0 - tree.time_of(n));
        let xi: Vec<f64> = tree.leaves().map(|_| 1.0).collect();
        let zero = Arc::new(FrozenGenerator {
            values: vec![0.0; tree.node_count()],
        });
        let inst = BsdeInstance::new(tree.clone(), xi, zero).unwrap().with_obstacle(s.clone()).unwrap();
        let sol = solve_reflected(&inst, Scheme::Implicit).unwrap();
        for n in 0..tree.node_count() {
            assert!((sol.y[n] - s[n]).abs() < 1e-15);
        }
        for c in 1..tree.node_count() {
            let p = tree.parent(c).unwrap();
            assert!((sol.k[c] - sol.k[p] - (s[p] - s[c])).abs() < 1e-14);
        }
        assert!(check_skorokhod(&tree, &sol, &s).abs() < 1e-12);
        let mut bad = sol.clone();
        bad.y = bad.y.map(|v| v + 0.5);
        assert!(check_skorokhod(&tree, &bad, &s) > 0.1);
    }

    #[test]
    fn snell_representation_both_displays() {
        let tree = tree3();
        let s = AdaptedProcess::from_fn(&tree, |n| 0.4 * tree.w(n)[0] + if tree.revealed_labels(n)[0] == Some(0) { 0.3 } else { 0.0 });
        let xi: Vec<f64> = tree.leaves().map(|l| tree.w(l)[0].abs() - 0.2).collect();
        for g in [nonlinear(&tree), Arc::new(AffineGenerator::constant(&tree, 0.1, -0.7, &[0.4]).unwrap()) as Arc<dyn Generator>] {
            let inst = BsdeInstance::new(tree.clone(), xi.clone(), g).unwrap().with_obstacle(s.clone()).unwrap();
            for scheme in [Scheme::Implicit, Scheme::Explicit] {
                let sol = solve_reflected(&inst, scheme).unwrap();
                let report = verify_snell_representation(&inst, &sol).unwrap();
                assert!(report.pass, "{report:?}");
            }
        }
    }

    #[test]
    fn picard_reaches_the_implicit_solution() {
        let tree = tree3();
        let s = AdaptedProcess::from_fn(&tree, |n| 0.5 * tree.w(n)[0]);
        let xi: Vec<f64> = tree.leaves().map(|l| tree.w(l)[0].exp()).collect();
        let inst = BsdeInstance::new(tree.clone(), xi, nonlinear(&tree)).unwrap().with_obstacle(s).unwrap();
        let tol = 1e-12;
        let (lim, trace) = picard_solve(&inst, alpha_star(0.8, 0.6), 500, tol).unwrap();
        let direct = solve_reflected(&inst, Scheme::Implicit).unwrap();
        for n in 0..tree.node_count() {
            assert!((lim.y[n] - direct.y[n]).abs() < 10.0 * tol);
        }
        assert!(trace.max_contraction_ratio() < 1.0);
    }

    #[test]
    fn picard_with_frozen_driver_takes_one_iteration() {
        let tree = tree3();
        let g = Arc::new(FrozenGenerator {
            values: (0..tree.node_count()).map(|n| n as f64 * 0.1).collect(),
        });
        let xi: Vec<f64> = tree.leaves().map(|l| tree.w(l)[0]).collect();
        let inst = BsdeInstance::new(tree.clone(), xi, g).unwrap();
        let (_, trace) = picard_solve(&inst, 1.0, 10, 1e-12).unwrap();
        assert_eq!(trace.iterations(), 1);
    }

    #[test]
    fn truncation_clips() {
        let tree = Arc::new(TreeConfig::new(1.0, 1, 1).build().unwrap());
        let g = Arc::new(FrozenGenerator { values: vec![10.0; 3] });
        let inst = BsdeInstance::new(tree.clone(), vec![-5.0, 3.0], g).unwrap();
        let t = truncate_instance(&inst, 4.0).unwrap();
        assert_eq!(t.xi, vec![-4.0, 3.0]);
        assert_eq!(t.generator.eval(0, 0.0, &[0.0]), 4.0);
        assert!(truncate_instance(&inst, 0.0).is_err());
    }
}
