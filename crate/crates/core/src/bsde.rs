//! Backward induction for BSDEs and reflected BSDEs on a scenario tree.
//!
//! Sign convention: `Y_t = ξ − ∫_t^T g ds − ∫_t^T Z dW − (M_T − M_t) + K_T − K_t`,
//! so one grid step reads `Y_k = Y_{k+1} − g_k dt − Z_k·ΔW − ΔM + ΔK`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{AffineGenerator, Generator};
use crate::martingale::{girsanov_change, orthogonality_defect, project_node};
use crate::norms::path_sums;
use crate::process::{AdaptedProcess, PredictableProcess};
use crate::tree::ScenarioTree;

/// Tolerance of the implicit fixed point, relative to `1 + |y|`.
pub const INNER_TOL: f64 = 1e-13;

/// Iteration cap of the implicit fixed point.
pub const INNER_MAX_ITER: usize = 200;

/// Bound on the path-wise dynamics residual of a solver output.
pub const DYNAMICS_TOL: f64 = 1e-10;

/// How the driver sees `y` on a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `g(E_k[Y_{k+1}], Z_k)`.
    Explicit,
    /// `g(Y_k, Z_k)` solved by an inner fixed point.
    #[default]
    Implicit,
}

/// Terminal value, driver and optional lower obstacle on a tree.
#[derive(Debug, Clone)]
pub struct BsdeInstance {
    pub tree: Arc<ScenarioTree>,
    /// `ξ` on the leaves, in level order.
    pub xi: Vec<f64>,
    pub generator: Arc<dyn Generator>,
    pub obstacle: Option<AdaptedProcess>,
}

impl BsdeInstance {
    pub fn new(tree: Arc<ScenarioTree>, xi: Vec<f64>, generator: Arc<dyn Generator>) -> Result<Self> {
        let leaves = tree.leaves().len();
        if xi.len() != leaves {
            return Err(Error::LengthMismatch {
                expected: leaves,
                found: xi.len(),
            });
        }
        if let Some(i) = xi.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("terminal value is not finite at leaf {i}")));
        }
        Ok(Self {
            tree,
            xi,
            generator,
            obstacle: None,
        })
    }

    /// Takes `ξ` from the terminal level of an adapted process.
    pub fn from_process(tree: Arc<ScenarioTree>, xi: &AdaptedProcess, generator: Arc<dyn Generator>) -> Result<Self> {
        if xi.len() != tree.node_count() {
            return Err(Error::TreeMismatch);
        }
        let v = xi.level(&tree, tree.n_steps()).to_vec();
        Self::new(tree, v, generator)
    }

    /// Attaches a lower obstacle; `S_T` is lowered to `min(S_T, ξ)`.
    pub fn with_obstacle(mut self, obstacle: AdaptedProcess) -> Result<Self> {
        if obstacle.len() != self.tree.node_count() {
            return Err(Error::TreeMismatch);
        }
        let mut s = obstacle;
        let start = self.tree.leaves().start;
        for leaf in self.tree.leaves() {
            s[leaf] = s[leaf].min(self.xi[leaf - start]);
        }
        self.obstacle = Some(s);
        Ok(self)
    }

    pub fn xi_at(&self, leaf: usize) -> f64 {
        self.xi[leaf - self.tree.leaves().start]
    }

    /// `ξ` as an adapted process, zero off the terminal level.
    pub fn xi_process(&self) -> AdaptedProcess {
        let mut out = AdaptedProcess::zeros(&self.tree);
        for leaf in self.tree.leaves() {
            out[leaf] = self.xi_at(leaf);
        }
        out
    }

    /// `dt·L_y`, the contraction factor of the implicit step.
    pub fn contraction_factor(&self) -> f64 {
        self.tree.dt() * self.generator.lipschitz().0
    }
}

/// `(Y, Z, M, K)` with the driver value used on each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionQuadruple {
    pub y: AdaptedProcess,
    pub z: PredictableProcess,
    pub m: AdaptedProcess,
    pub k: AdaptedProcess,
    /// `g_k` evaluated as the scheme prescribes, one value per non-leaf node.
    pub driver: Vec<f64>,
    pub scheme: Scheme,
    /// Largest number of inner iterations over all nodes.
    pub inner_iterations: usize,
}

impl SolutionQuadruple {
    /// `L = M − K`.
    pub fn l(&self) -> AdaptedProcess {
        self.m.zip_with(&self.k, |m, k| m - k).expect("M and K share a tree")
    }

    /// `N = Z⋆W + M − K`.
    pub fn n(&self, tree: &ScenarioTree) -> AdaptedProcess {
        let zw = self.z.integral_dw(tree);
        AdaptedProcess::from_fn(tree, |node| zw[node] + self.m[node] - self.k[node])
    }

    /// Largest `|Y_k − (Y_{k+1} − g_k dt − Z_k·ΔW − ΔM + ΔK)|` over edges.
    pub fn dynamics_residual(&self, tree: &ScenarioTree) -> f64 {
        let dt = tree.dt();
        (1..tree.node_count())
            .map(|c| {
                let p = tree.parent(c).expect("non-root");
                let zw: f64 = self.z.at_parent(p).iter().zip(tree.dw(c)).map(|(a, b)| a * b).sum();
                let rhs = self.y[c] - self.driver[p] * dt - zw - (self.m[c] - self.m[p]) + (self.k[c] - self.k[p]);
                (self.y[p] - rhs).abs() / (1.0 + self.y[p].abs())
            })
            .fold(0.0, f64::max)
    }

    /// Largest `|E_k[ΔM ΔW_i]|`.
    pub fn orthogonality_defect(&self, tree: &ScenarioTree) -> f64 {
        orthogonality_defect(tree, &self.m)
    }
}

/// Component-wise difference of two solutions on the same tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDiff {
    pub dy: AdaptedProcess,
    pub dz: PredictableProcess,
    pub dm: AdaptedProcess,
    pub dk: AdaptedProcess,
    pub dn: AdaptedProcess,
    /// Running total variation of `δK`.
    pub tv_dk: AdaptedProcess,
}

pub fn solution_diff(tree: &ScenarioTree, a: &SolutionQuadruple, b: &SolutionQuadruple) -> Result<SolutionDiff> {
    if a.y.len() != tree.node_count() || b.y.len() != tree.node_count() {
        return Err(Error::TreeMismatch);
    }
    let dy = a.y.zip_with(&b.y, |x, y| x - y)?;
    let dz = a.z.zip_with(&b.z, |x, y| x - y)?;
    let dm = a.m.zip_with(&b.m, |x, y| x - y)?;
    let dk = a.k.zip_with(&b.k, |x, y| x - y)?;
    let dn = a.n(tree).zip_with(&b.n(tree), |x, y| x - y)?;
    let tv = path_sums(tree, |c, p| (dk[c] - dk[p]).abs());
    Ok(SolutionDiff {
        dy,
        dz,
        dm,
        dk,
        dn,
        tv_dk: AdaptedProcess::from_values(tree, tv)?,
    })
}

fn check_step_size(tree: &ScenarioTree, g: &dyn Generator) -> Result<()> {
    let l_y = g.lipschitz().0;
    let dt = tree.dt();
    if !(dt * l_y < 1.0) {
        return Err(Error::StepSize { dt, l_y });
    }
    Ok(())
}

/// Shared backward recursion. With an obstacle, `Y_k = max(S_k, ỹ_k)` and
/// `ΔK_{k+1} = Y_k − ỹ_k`; in the implicit scheme the driver sees the
/// reflected value.
pub(crate) fn backward(instance: &BsdeInstance, scheme: Scheme) -> Result<SolutionQuadruple> {
    let tree = instance.tree.as_ref();
    let g = instance.generator.as_ref();
    check_step_size(tree, g)?;
    let d = tree.dim();
    let dt = tree.dt();
    let inner = tree.level(tree.n_steps()).start;
    let obstacle = instance.obstacle.as_ref();

    let mut y = AdaptedProcess::zeros(tree);
    for leaf in tree.leaves() {
        y[leaf] = instance.xi_at(leaf);
    }
    let mut z = PredictableProcess::zeros(tree, d);
    let mut driver = vec![0.0; inner];
    let mut dk = vec![0.0; inner];
    let mut inner_iterations = 0;
    let mut zbuf = vec![0.0; d];

    for p in (0..inner).rev() {
        let e = project_node(tree, p, |c| y[c], &mut zbuf);
        z.at_parent_mut(p).copy_from_slice(&zbuf);
        let s = obstacle.map(|s| s[p]);
        let reflect = |v: f64| s.map_or(v, |s| v.max(s));
        let (yp, gp) = match scheme {
            Scheme::Explicit => {
                let gp = g.eval(p, e, &zbuf);
                (reflect(e - gp * dt), gp)
            }
            Scheme::Implicit => {
                let mut cur = reflect(e - g.eval(p, e, &zbuf) * dt);
                let mut it = 0;
                loop {
                    let next = reflect(e - g.eval(p, cur, &zbuf) * dt);
                    it += 1;
                    let defect = (next - cur).abs();
                    cur = next;
                    if defect <= INNER_TOL * (1.0 + cur.abs()) {
                        break;
                    }
                    if it >= INNER_MAX_ITER || !cur.is_finite() {
                        return Err(Error::InnerNonConvergence {
                            node: p,
                            iterations: it,
                            defect,
                        });
                    }
                }
                inner_iterations = inner_iterations.max(it);
                let gp = g.eval(p, cur, &zbuf);
                (reflect(e - gp * dt), gp)
            }
        };
        y[p] = yp;
        driver[p] = gp;
        if obstacle.is_some() {
            dk[p] = yp - (e - gp * dt);
        }
    }

    let mut m = AdaptedProcess::zeros(tree);
    let mut k = AdaptedProcess::zeros(tree);
    for c in 1..tree.node_count() {
        let p = tree.parent(c).expect("non-root");
        let e = y[p] + driver[p] * dt - dk[p];
        let zw: f64 = z.at_parent(p).iter().zip(tree.dw(c)).map(|(a, b)| a * b).sum();
        m[c] = m[p] + y[c] - e - zw;
        k[c] = k[p] + dk[p];
    }
    Ok(SolutionQuadruple {
        y,
        z,
        m,
        k,
        driver,
        scheme,
        inner_iterations,
    })
}

/// Solves the BSDE with `K ≡ 0`; any obstacle on the instance is ignored.
pub fn solve_bsde(instance: &BsdeInstance, scheme: Scheme) -> Result<SolutionQuadruple> {
    if instance.obstacle.is_some() {
        let plain = BsdeInstance {
            obstacle: None,
            ..instance.clone()
        };
        return backward(&plain, scheme);
    }
    backward(instance, scheme)
}

/// Closed form for affine drivers:
/// `X_k Y_k = E^ℚ_k[X_n ξ − Σ_{j≥k} X_{j+1} g⁰_j dt]` with
/// `X_{k+1} = X_k / (1 + λ_k dt)` and `dℚ/dℙ = Π(1 − η_k·ΔW_{k+1})`.
pub fn solve_linear_bsde(tree: &ScenarioTree, xi: &[f64], g: &AffineGenerator) -> Result<SolutionQuadruple> {
    if g.g0.len() != tree.node_count() || g.dim != tree.dim() {
        return Err(Error::TreeMismatch);
    }
    if xi.len() != tree.leaves().len() {
        return Err(Error::LengthMismatch {
            expected: tree.leaves().len(),
            found: xi.len(),
        });
    }
    check_step_size(tree, g)?;
    let d = tree.dim();
    let dt = tree.dt();
    let inner = tree.level(tree.n_steps()).start;
    let eta = PredictableProcess::from_fn(tree, d, |p, out| out.copy_from_slice(g.eta_at(p)));
    let q = girsanov_change(tree, &eta)?;

    let mut x = AdaptedProcess::constant(tree, 1.0);
    for c in 1..tree.node_count() {
        let p = tree.parent(c).expect("non-root");
        x[c] = x[p] / (1.0 + g.lambda[p] * dt);
    }
    // Running cost accumulated from the root so that the conditional
    // expectation of a single terminal functional gives every Y_k.
    let cost = path_sums(tree, |c, p| x[c] * g.g0[p] * dt);
    let mut u = AdaptedProcess::zeros(tree);
    let start = tree.leaves().start;
    for leaf in tree.leaves() {
        u[leaf] = x[leaf] * xi[leaf - start] - cost[leaf];
    }
    for p in (0..inner).rev() {
        u[p] = q.q_cond_mean(tree, p, |c| u[c]);
    }
    let y = AdaptedProcess::from_fn(tree, |n| (u[n] + cost[n]) / x[n]);

    let mut z = PredictableProcess::zeros(tree, d);
    let mut driver = vec![0.0; inner];
    let mut zbuf = vec![0.0; d];
    for p in 0..inner {
        project_node(tree, p, |c| y[c], &mut zbuf);
        z.at_parent_mut(p).copy_from_slice(&zbuf);
        driver[p] = g.eval(p, y[p], &zbuf);
    }
    let mut m = AdaptedProcess::zeros(tree);
    for c in 1..tree.node_count() {
        let p = tree.parent(c).expect("non-root");
        let e = tree.cond_mean(p, |s| y[s]);
        let zw: f64 = z.at_parent(p).iter().zip(tree.dw(c)).map(|(a, b)| a * b).sum();
        m[c] = m[p] + y[c] - e - zw;
    }
    Ok(SolutionQuadruple {
        y,
        z,
        m,
        k: AdaptedProcess::zeros(tree),
        driver,
        scheme: Scheme::Implicit,
        inner_iterations: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::FrozenGenerator;
    use crate::tree::TreeConfig;

    fn zero_driver(tree: &ScenarioTree) -> Arc<dyn Generator> {
        Arc::new(FrozenGenerator {
            values: vec![0.0; tree.node_count()],
        })
    }

    #[test]
    fn zero_driver_gives_conditional_expectation() {
        let tree = Arc::new(
            TreeConfig::new(1.0, 3, 1)
                .with_reveal(2.0 / 3.0, &["u", "d"], &[0.3, 0.7])
                .build()
                .unwrap(),
        );
        let xi = AdaptedProcess::from_fn(&tree, |n| tree.w(n)[0].powi(2) + tree.revealed_labels(n)[0].unwrap_or(0) as f64);
        let inst = BsdeInstance::from_process(tree.clone(), &xi, zero_driver(&tree)).unwrap();
        let sol = solve_bsde(&inst, Scheme::Implicit).unwrap();
        let mut e = xi.clone();
        for k in (0..tree.n_steps()).rev() {
            let next = e.level(&tree, k + 1).to_vec();
            let ce = tree.conditional_expectation(&next, k).unwrap();
            for (node, v) in tree.level(k).zip(ce) {
                e[node] = v;
            }
        }
        for n in 0..tree.node_count() {
            assert!((sol.y[n] - e[n]).abs() < 1e-14);
        }
        assert!(sol.dynamics_residual(&tree) < DYNAMICS_TOL);
        assert!(sol.orthogonality_defect(&tree) < 1e-12);
        assert!(sol.m.values().iter().any(|v| v.abs() > 0.1));
    }

    #[test]
    fn constant_driver_telescopes() {
        let tree = Arc::new(TreeConfig::new(1.0, 4, 1).build().unwrap());
        let g = Arc::new(FrozenGenerator {
            values: vec![1.0; tree.node_count()],
        });
        let inst = BsdeInstance::new(tree.clone(), vec![0.0; tree.leaves().len()], g).unwrap();
        for scheme in [Scheme::Explicit, Scheme::Implicit] {
            let sol = solve_bsde(&inst, scheme).unwrap();
            assert!((sol.y[0] + 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_closed_form_matches_implicit() {
        let tree = Arc::new(
            TreeConfig::new(1.0, 4, 2)
                .with_reveal(0.5, &["a", "b", "c"], &[0.2, 0.3, 0.5])
                .build()
                .unwrap(),
        );
        let g0 = AdaptedProcess::from_fn(&tree, |n| tree.w(n)[1].sin());
        let lambda = AdaptedProcess::from_fn(&tree, |n| 0.5 * tree.w(n)[0].cos());
        let eta = (0..tree.node_count()).flat_map(|n| [0.3 * tree.w(n)[0].tanh(), -0.2]).collect();
        let g = AffineGenerator::new(&tree, g0, lambda, eta).unwrap();
        let xi: Vec<f64> = tree.leaves().map(|l| tree.w(l)[0] * tree.w(l)[1] + tree.label(l).unwrap_or(0) as f64).collect();
        let lin = solve_linear_bsde(&tree, &xi, &g).unwrap();
        let inst = BsdeInstance::new(tree.clone(), xi, Arc::new(g)).unwrap();
        let imp = solve_bsde(&inst, Scheme::Implicit).unwrap();
        for n in 0..tree.node_count() {
            assert!((lin.y[n] - imp.y[n]).abs() < 1e-10, "node {n}");
        }
        assert!(imp.dynamics_residual(&tree) < DYNAMICS_TOL);
        assert!(lin.dynamics_residual(&tree) < DYNAMICS_TOL);
    }

    #[test]
    fn step_size_is_enforced() {
        let tree = Arc::new(TreeConfig::new(1.0, 2, 1).build().unwrap());
        let g = AffineGenerator::constant(&tree, 0.0, 3.0, &[0.0]).unwrap();
        let inst = BsdeInstance::new(tree.clone(), vec![1.0; 4], Arc::new(g)).unwrap();
        assert!(matches!(solve_bsde(&inst, Scheme::Explicit), Err(Error::StepSize { .. })));
    }

    #[test]
    fn diff_of_shifted_terminal_values() {
        let tree = Arc::new(TreeConfig::new(1.0, 3, 1).build().unwrap());
        let xi: Vec<f64> = tree.leaves().map(|l| tree.w(l)[0].exp()).collect();
        let shifted: Vec<f64> = xi.iter().map(|v| v + 2.5).collect();
        let a = solve_bsde(&BsdeInstance::new(tree.clone(), shifted, zero_driver(&tree)).unwrap(), Scheme::Implicit).unwrap();
        let b = solve_bsde(&BsdeInstance::new(tree.clone(), xi, zero_driver(&tree)).unwrap(), Scheme::Implicit).unwrap();
        let diff = solution_diff(&tree, &a, &b).unwrap();
        assert!(diff.dy.values().iter().all(|v| (v - 2.5).abs() < 1e-13));
        assert!(diff.dz.values().iter().all(|v| v.abs() < 1e-12));
        assert!(diff.dm.values().iter().all(|v| v.abs() < 1e-12));
        assert!(diff.tv_dk.values().iter().all(|v| *v == 0.0));
    }
}
