//! Solver-level experiments: exactness of the tree and of the martingale
//! tools, the optimal-stopping oracle, complementarity, Picard iteration,
//! convergence to closed forms and truncation of heavy-tailed data.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsde::{solve_bsde, BsdeInstance, Scheme, SolutionQuadruple};
use crate::error::{Error, Result};
use crate::family::{FamilyMember, InstanceFamily};
use crate::generator::AffineGenerator;
use crate::martingale::{girsanov_change, martingale_defect, represent_martingale, EXACT_TOL};
use crate::norms::norm_sp;
use crate::process::{AdaptedProcess, PredictableProcess};
use crate::reflected::{check_skorokhod, picard_solve, solve_reflected, truncate_instance, verify_snell_representation};
use crate::report::EstimateReport;
use crate::seed::RandomSeed;
use crate::stopping::{StoppingProblem, ENUMERATION_NODE_CAP};
use crate::suites::{log_log_slope, random_martingale};
use crate::tree::{ScenarioTree, TreeConfig};

fn exact(id: &str, defect: f64, scale: f64, fp: &str) -> EstimateReport {
    EstimateReport::explicit(id, defect, EXACT_TOL * scale.max(1.0), None).with_fingerprint(fp)
}

/// Structural validation of a tree: probabilities, increment moments and
/// reveal independence.
pub fn tree_exactness(config: &TreeConfig) -> Result<EstimateReport> {
    let tree = config.build()?;
    let outcome = tree.validate();
    let ok = outcome.is_ok();
    Ok(EstimateReport::explicit("tree_exactness", if ok { 0.0 } else { 1.0 }, 0.0, None)
        .with("nodes", tree.node_count() as f64)
        .with("steps", tree.n_steps() as f64)
        .with("d", tree.dim() as f64)
        .with("reveals", tree.reveals().len() as f64))
}

/// Representation of seeded martingales: `N = N_0 + Z⋆W + M` rebuilt exactly
/// with `M` orthogonal to `W`.
pub fn representation_check(tree: &ScenarioTree, count: usize, seed: RandomSeed) -> Result<Vec<EstimateReport>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.fork(i as u64).rng();
            let n = random_martingale(tree, &mut rng);
            let rep = represent_martingale(tree, &n)?;
            let zw = rep.z.integral_dw(tree);
            let scale = n.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let recon = (0..tree.node_count())
                .map(|k| (n[0] + zw[k] + rep.m[k] - n[k]).abs())
                .fold(0.0, f64::max);
            let (_, mdef) = martingale_defect(tree, &rep.m);
            let fp = format!("mart-{i:04}");
            Ok(vec![
                exact("representation_reconstruction", recon, scale, &fp),
                exact("representation_orthogonality", rep.residual_orthogonality, scale * scale, &fp),
                exact("representation_residual_martingale", mdef, scale, &fp),
            ])
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())
}

/// Seeded measure changes: `E[D_T] = 1` and `W^ℚ` is a `ℚ`-martingale.
pub fn girsanov_check(tree: &ScenarioTree, count: usize, seed: RandomSeed) -> Result<Vec<EstimateReport>> {
    let limit = 0.9 / tree.dt().sqrt() / tree.dim() as f64;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.fork(i as u64).rng();
            let bound = limit.min(2.0) * rng.random_range(0.1..1.0);
            let eta = PredictableProcess::from_fn(tree, tree.dim(), |_, out| {
                out.iter_mut().for_each(|v| *v = bound * rng.random_range(-1.0..1.0));
            });
            let q = girsanov_change(tree, &eta)?;
            let fp = format!("eta-{i:04}");
            Ok(vec![
                exact("girsanov_density_mean", (q.expected_density(tree) - 1.0).abs(), 1.0, &fp),
                exact("girsanov_q_martingale", q.w_q_defect(tree), 1.0, &fp),
            ])
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())
}

fn reflected(member: &FamilyMember) -> Result<SolutionQuadruple> {
    solve_reflected(&member.instance, Scheme::Implicit)
}

/// `Y` against the stopping problem with frozen costs: exhaustive
/// enumeration when the tree is small enough, both Snell displays always.
pub fn snell_check(family: &InstanceFamily) -> Result<Vec<EstimateReport>> {
    let tree = family.build_tree()?;
    let inner = tree.level(tree.n_steps()).start;
    let members: Vec<FamilyMember> = (0..family.count).map(|i| family.member(&tree, i)).collect::<Result<_>>()?;
    members
        .par_iter()
        .map(|m| {
            let sol = reflected(m)?;
            let mut out = vec![verify_snell_representation(&m.instance, &sol)?.with_fingerprint(&m.fingerprint)];
            if inner <= ENUMERATION_NODE_CAP {
                let s = m.instance.obstacle.as_ref().ok_or_else(|| Error::Config("snell check needs obstacles".into()))?;
                let mut reward = s.clone();
                for l in tree.leaves() {
                    reward[l] = m.instance.xi_at(l);
                }
                let prob = StoppingProblem::new(&tree, reward, sol.driver[..inner].to_vec())?;
                let brute = prob.enumerate()?;
                let defect = (0..tree.node_count()).map(|n| (brute[n] - sol.y[n]).abs()).fold(0.0, f64::max);
                let scale = sol.y.values().iter().fold(1.0f64, |a, v| a.max(v.abs()));
                out.push(exact("snell_enumeration", defect, scale, &m.fingerprint).with("y0", sol.y[0]));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())
}

/// Complementarity and the structural properties of the reflection.
pub fn skorokhod_check(family: &InstanceFamily) -> Result<Vec<EstimateReport>> {
    let tree = family.build_tree()?;
    (0..family.count)
        .into_par_iter()
        .map(|i| {
            let m = family.member(&tree, i)?;
            let sol = reflected(&m)?;
            let s = m.instance.obstacle.as_ref().ok_or_else(|| Error::Config("skorokhod check needs obstacles".into()))?;
            let defect = check_skorokhod(&tree, &sol, s);
            let below = (0..tree.node_count()).map(|n| (s[n] - sol.y[n]).max(0.0)).fold(0.0, f64::max);
            let dk = (-sol.k.min_increment(&tree)).max(0.0);
            let scale = sol.y.values().iter().fold(1.0f64, |a, v| a.max(v.abs()));
            let fp = &m.fingerprint;
            Ok(vec![
                exact("skorokhod_defect", defect.abs(), scale, fp).with("signed", defect),
                EstimateReport::explicit("obstacle_domination", below, 0.0, None).with_fingerprint(fp),
                EstimateReport::explicit("k_nondecreasing", dk, 0.0, None)
                    .with_fingerprint(fp)
                    .require(sol.k[0] == 0.0 && sol.k.sibling_spread(&tree) == 0.0),
                exact("dynamics_residual", sol.dynamics_residual(&tree), 1.0, fp),
            ])
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())
}

/// Largest allowed distance between the Picard limit and the direct solver.
pub const PICARD_MATCH_TOL: f64 = 1e-9;

/// Picard iteration on each member: contraction ratio below one, agreement
/// with the direct solver, one iteration for a frozen driver.
pub fn picard_check(family: &InstanceFamily, alpha: f64, tol: f64, max_iter: usize) -> Result<Vec<EstimateReport>> {
    let tree = family.build_tree()?;
    (0..family.count)
        .into_par_iter()
        .map(|i| {
            let m = family.member(&tree, i)?;
            let direct = reflected(&m)?;
            let (limit, trace) = picard_solve(&m.instance, alpha, max_iter, tol)?;
            let gap = (0..tree.node_count()).map(|n| (limit.y[n] - direct.y[n]).abs()).fold(0.0, f64::max);
            let ratio = trace.max_contraction_ratio();
            let fp = &m.fingerprint;
            let frozen = crate::bsde::BsdeInstance {
                generator: Arc::new(crate::generator::FrozenGenerator {
                    values: (0..tree.node_count()).map(|n| m.instance.generator.g0(n)).collect(),
                }),
                ..m.instance.clone()
            };
            let (_, ftrace) = picard_solve(&frozen, alpha, max_iter, tol)?;
            Ok(vec![
                EstimateReport::explicit("picard_contraction", ratio, 1.0, None)
                    .with_fingerprint(fp)
                    .with("iterations", trace.iterations() as f64)
                    .with("alpha", alpha)
                    .require(ratio < 1.0),
                EstimateReport::explicit("picard_limit", gap, PICARD_MATCH_TOL, None).with_fingerprint(fp),
                EstimateReport::explicit("picard_frozen_iterations", ftrace.iterations() as f64, 1.0, None)
                    .with_fingerprint(fp)
                    .require(ftrace.iterations() == 1),
            ])
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())
}

/// Largest Picard contraction ratio over a family for each `α`.
pub fn picard_ratio_by_alpha(family: &InstanceFamily, alphas: &[f64], tol: f64) -> Result<Vec<(f64, f64)>> {
    let tree = family.build_tree()?;
    let members: Vec<FamilyMember> = (0..family.count).map(|i| family.member(&tree, i)).collect::<Result<_>>()?;
    alphas
        .iter()
        .map(|&a| {
            let worst = members
                .par_iter()
                .map(|m| picard_solve(&m.instance, a, 500, tol).map(|(_, t)| t.max_contraction_ratio()))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            Ok((a, worst))
        })
        .collect()
}

/// One point of a closed-form convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub scheme: Scheme,
    pub lambda: f64,
    pub n_steps: usize,
    pub dt: f64,
    pub y0: f64,
    pub exact: f64,
    pub error: f64,
}

/// `g = λy`, `ξ = 1` on a one-dimensional tree: `Y_0 → e^{−λT}`.
pub fn closed_form_convergence(lambdas: &[f64], horizon: f64, steps: &[usize], scheme: Scheme) -> Result<Vec<ConvergenceRow>> {
    let mut out = Vec::new();
    for &lambda in lambdas {
        for &n in steps {
            let tree = Arc::new(TreeConfig::new(horizon, n, 1).build()?);
            let g = AffineGenerator::constant(&tree, 0.0, lambda, &[0.0])?;
            let xi = vec![1.0; tree.leaves().len()];
            let inst = BsdeInstance::new(tree.clone(), xi, Arc::new(g))?;
            let y0 = solve_bsde(&inst, scheme)?.y[0];
            let exact = (-lambda * horizon).exp();
            out.push(ConvergenceRow {
                scheme,
                lambda,
                n_steps: n,
                dt: tree.dt(),
                y0,
                exact,
                error: (y0 - exact).abs(),
            });
        }
    }
    Ok(out)
}

/// Least-squares order of the error in `dt`, per `λ`.
pub fn convergence_orders(rows: &[ConvergenceRow]) -> Vec<(f64, f64)> {
    let mut lambdas: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
    lambdas.dedup();
    lambdas
        .into_iter()
        .map(|l| {
            let sel: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.lambda == l).collect();
            let dt: Vec<f64> = sel.iter().map(|r| r.dt).collect();
            let err: Vec<f64> = sel.iter().map(|r| r.error).collect();
            (l, log_log_slope(&dt, &err))
        })
        .collect()
}

/// `‖Y^{(j+1)} − Y^{(j)}‖^p_{𝕊^p}` for truncation levels `levels[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationRow {
    pub fingerprint: String,
    pub level: f64,
    pub next_level: f64,
    pub increment: f64,
}

/// Cauchy increments of truncated reflected solutions.
pub fn truncation_study(family: &InstanceFamily, levels: &[f64], p: f64) -> Result<Vec<TruncationRow>> {
    if levels.len() < 2 || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("truncation levels must be increasing, at least two".into()));
    }
    let tree = family.build_tree()?;
    let rows = (0..family.count)
        .into_par_iter()
        .map(|i| {
            let m = family.member(&tree, i)?;
            let sols = levels
                .iter()
                .map(|&n| {
                    let inst = truncate_instance(&m.instance, n)?;
                    if inst.obstacle.is_some() {
                        solve_reflected(&inst, Scheme::Implicit)
                    } else {
                        solve_bsde(&inst, Scheme::Implicit)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let mut rows = Vec::new();
            for j in 0..levels.len() - 1 {
                let d = sols[j + 1].y.zip_with(&sols[j].y, |a, b| a - b)?;
                rows.push(TruncationRow {
                    fingerprint: m.fingerprint.clone(),
                    level: levels[j],
                    next_level: levels[j + 1],
                    increment: norm_sp(&tree, &d, p),
                });
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Per instance: the increments never increase with the level.
pub fn truncation_monotone(rows: &[TruncationRow]) -> Vec<(String, bool)> {
    let mut out: Vec<(String, bool)> = Vec::new();
    for w in rows.windows(2) {
        if w[0].fingerprint == w[1].fingerprint {
            let ok = w[1].increment <= w[0].increment * (1.0 + 1e-12);
            match out.last_mut() {
                Some(last) if last.0 == w[0].fingerprint => last.1 &= ok,
                _ => out.push((w[0].fingerprint.clone(), ok)),
            }
        }
    }
    out
}

/// The adapted process `E_t[ξ]`, for reporting.
pub fn conditional_terminal(instance: &BsdeInstance) -> Result<AdaptedProcess> {
    let tree = instance.tree.as_ref();
    let mut v = instance.xi_process().values().to_vec();
    for p in (0..tree.level(tree.n_steps()).start).rev() {
        v[p] = tree.cond_mean(p, |c| v[c]);
    }
    AdaptedProcess::from_values(tree, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{DriverFamily, ObstacleFamily, TerminalFamily};

    fn fam(tree: TreeConfig, count: usize) -> InstanceFamily {
        InstanceFamily {
            tree,
            driver: DriverFamily::default(),
            terminal: TerminalFamily::Smooth { scale: 1.0 },
            obstacle: ObstacleFamily::Table { scale: 0.8, shift: 0.0 },
            count,
            seed: 3,
        }
    }

    #[test]
    fn snell_enumeration_on_small_trees() {
        let reports = snell_check(&fam(TreeConfig::new(1.0, 3, 1).with_reveal(2.0 / 3.0, &["a", "b"], &[0.5, 0.5]), 5)).unwrap();
        assert!(reports.iter().any(|r| r.id == "snell_enumeration"));
        assert!(reports.iter().all(|r| r.pass), "{reports:?}");
    }

    #[test]
    fn skorokhod_and_picard() {
        let f = fam(TreeConfig::new(1.0, 4, 1), 4);
        assert!(skorokhod_check(&f).unwrap().iter().all(|r| r.pass));
        let reports = picard_check(&f, 8.0, 1e-12, 300).unwrap();
        assert!(reports.iter().all(|r| r.pass), "{reports:?}");
    }

    #[test]
    fn closed_form_rows() {
        let rows = closed_form_convergence(&[0.5], 1.0, &[4, 8], Scheme::Implicit).unwrap();
        assert!((rows[0].y0 - 1.125f64.powi(-4)).abs() < 1e-14);
        assert!(rows[1].error < rows[0].error);
    }

    #[test]
    fn representation_and_girsanov() {
        let tree = TreeConfig::new(1.0, 4, 2).with_reveal(0.5, &["a", "b"], &[0.3, 0.7]).build().unwrap();
        assert!(representation_check(&tree, 5, RandomSeed::new(1)).unwrap().iter().all(|r| r.pass));
        assert!(girsanov_check(&tree, 5, RandomSeed::new(2)).unwrap().iter().all(|r| r.pass));
    }
}
