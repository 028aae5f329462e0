//! Martingale representation, Doob and Mertens decompositions, jump
//! exhaustion, Meyer's inequality and the discrete change of measure.

use crate::constants::{ladlag_meyer_constant, meyer_constant};
use crate::error::{Error, Result};
use crate::norms::{leaf_expectation, norm_sp_ladlag};
use crate::process::{AdaptedProcess, LadlagProcess, PredictableProcess};
use crate::report::EstimateReport;
use crate::tree::ScenarioTree;

/// Tolerance for identities that are exact on the tree, relative to the
/// magnitude of the data.
pub const EXACT_TOL: f64 = 1e-12;

fn magnitude(values: &[f64]) -> f64 {
    values.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

/// Projects `f(child)` at a non-terminal node: returns `E[f]` and writes
/// `E[(f − E f) ΔW] / dt` into `z`.
pub fn project_node<F: Fn(usize) -> f64>(tree: &ScenarioTree, node: usize, f: F, z: &mut [f64]) -> f64 {
    let mean = tree.cond_mean(node, &f);
    z.iter_mut().for_each(|v| *v = 0.0);
    for c in tree.children(node) {
        let w = tree.prob(c) * (f(c) - mean);
        for (zi, dwi) in z.iter_mut().zip(tree.dw(c)) {
            *zi += w * dwi;
        }
    }
    let dt = tree.dt();
    z.iter_mut().for_each(|v| *v /= dt);
    mean
}

/// Largest `|E_node[ΔX]|` and the node where it occurs.
pub fn martingale_defect(tree: &ScenarioTree, x: &AdaptedProcess) -> (usize, f64) {
    let inner = tree.level(tree.n_steps()).start;
    (0..inner)
        .map(|p| (p, (tree.cond_mean(p, |c| x[c]) - x[p]).abs()))
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a })
}

/// Largest `|E_node[ΔM ΔW_i]|` over nodes and coordinates.
pub fn orthogonality_defect(tree: &ScenarioTree, m: &AdaptedProcess) -> f64 {
    let inner = tree.level(tree.n_steps()).start;
    let mut worst = 0.0f64;
    for p in 0..inner {
        for i in 0..tree.dim() {
            let cov = tree.cond_mean(p, |c| (m[c] - m[p]) * tree.dw(c)[i]);
            worst = worst.max(cov.abs());
        }
    }
    worst
}

/// `N = N_0 + Z⋆W + M` with `M` orthogonal to `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationPair {
    pub z: PredictableProcess,
    pub m: AdaptedProcess,
    pub residual_orthogonality: f64,
}

/// Splits a martingale into its Brownian integral and orthogonal residual.
pub fn represent_martingale(tree: &ScenarioTree, n: &AdaptedProcess) -> Result<RepresentationPair> {
    if n.len() != tree.node_count() {
        return Err(Error::TreeMismatch);
    }
    let (node, defect) = martingale_defect(tree, n);
    if defect > EXACT_TOL * magnitude(n.values()) {
        return Err(Error::NotMartingale { node, defect });
    }
    let d = tree.dim();
    let z = PredictableProcess::from_fn(tree, d, |p, out| {
        project_node(tree, p, |c| n[c], out);
    });
    let mut m = AdaptedProcess::zeros(tree);
    for c in 1..tree.node_count() {
        let p = tree.parent(c).expect("non-root");
        let zw: f64 = z.at_parent(p).iter().zip(tree.dw(c)).map(|(a, b)| a * b).sum();
        m[c] = m[p] + (n[c] - n[p]) - zw;
    }
    let residual_orthogonality = orthogonality_defect(tree, &m);
    Ok(RepresentationPair {
        z,
        m,
        residual_orthogonality,
    })
}

/// `X = M − A` with `A` predictable and `A_0 = 0`, so `M_0 = X_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoobDecomposition {
    pub m: AdaptedProcess,
    pub a: AdaptedProcess,
}

/// Doob decomposition of any adapted process. With `supermartingale` set,
/// a positive conditional drift is an error.
pub fn doob_decompose(tree: &ScenarioTree, x: &AdaptedProcess, supermartingale: bool) -> Result<DoobDecomposition> {
    if x.len() != tree.node_count() {
        return Err(Error::TreeMismatch);
    }
    let tol = EXACT_TOL * magnitude(x.values());
    let mut a = AdaptedProcess::zeros(tree);
    let inner = tree.level(tree.n_steps()).start;
    for p in 0..inner {
        let drift = tree.cond_mean(p, |c| x[c]) - x[p];
        if supermartingale && drift > tol {
            return Err(Error::NotSupermartingale { node: p, drift });
        }
        for c in tree.children(p) {
            a[c] = a[p] - drift;
        }
    }
    let m = x.zip_with(&a, |xv, av| xv + av)?;
    Ok(DoobDecomposition { m, a })
}

/// `X = X_0 + M − A − I` slot by slot.
#[derive(Debug, Clone, PartialEq)]
pub struct MertensDecomposition {
    pub m: LadlagProcess,
    pub a: LadlagProcess,
    pub i: LadlagProcess,
}

/// Checks `value >= right limit` at every node and
/// `right limit >= E[next value]` at every non-terminal node.
pub fn check_strong_supermartingale(tree: &ScenarioTree, x: &LadlagProcess) -> Result<()> {
    if x.len() != tree.node_count() {
        return Err(Error::TreeMismatch);
    }
    let tol = EXACT_TOL * magnitude(&x.value).max(magnitude(&x.right));
    for node in 0..tree.node_count() {
        let gap = x.value[node] - x.right[node];
        if gap < -tol {
            return Err(Error::NotStrongSupermartingale {
                node,
                slot: "right limit above value",
                defect: -gap,
            });
        }
        if !tree.is_leaf(node) {
            let drift = tree.cond_mean(node, |c| x.value[c]) - x.right[node];
            if drift > tol {
                return Err(Error::NotStrongSupermartingale {
                    node,
                    slot: "expected next value above right limit",
                    defect: drift,
                });
            }
        }
    }
    Ok(())
}

/// Mertens decomposition of a làdlàg strong supermartingale.
///
/// `I` collects the right jumps `X_t − X_{t+}` strictly before `t` (so it is
/// left-continuous), `A` is the predictable compensator of the remainder.
pub fn mertens_decompose(tree: &ScenarioTree, x: &LadlagProcess) -> Result<MertensDecomposition> {
    check_strong_supermartingale(tree, x)?;
    let n = tree.node_count();
    let mut i = LadlagProcess::zeros(tree);
    let mut a = LadlagProcess::zeros(tree);
    for node in 0..n {
        let jump = x.value[node] - x.right[node];
        if let Some(p) = tree.parent(node) {
            let before = i.right[p];
            i.left[node] = before;
            i.value[node] = before;
            a.left[node] = a.right[p];
            a.value[node] = a.right[p] + (x.right[p] - tree.cond_mean(p, |c| x.value[c]));
            a.right[node] = a.value[node];
        }
        i.right[node] = i.value[node] + jump;
    }
    let x0 = x.value[0];
    let mk = |xs: &[f64], as_: &[f64], is: &[f64]| -> Vec<f64> {
        (0..n).map(|k| xs[k] - x0 + as_[k] + is[k]).collect()
    };
    let m = LadlagProcess {
        left: mk(&x.left, &a.left, &i.left),
        value: mk(&x.value, &a.value, &i.value),
        right: mk(&x.right, &a.right, &i.right),
    };
    Ok(MertensDecomposition { m, a, i })
}

/// `I^{ε,n}`: the sum of the first `n_max` right jumps of size at least `ε`
/// along each path, counted strictly before `t`.
pub fn exhaust_jumps(tree: &ScenarioTree, x: &LadlagProcess, eps: f64, n_max: usize) -> Result<LadlagProcess> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("jump threshold must be positive, got {eps}")));
    }
    if x.len() != tree.node_count() {
        return Err(Error::TreeMismatch);
    }
    let n = tree.node_count();
    let mut out = LadlagProcess::zeros(tree);
    let mut count = vec![0usize; n];
    for node in 0..n {
        let (before, used) = match tree.parent(node) {
            Some(p) => (out.right[p], count[p]),
            None => (0.0, 0),
        };
        out.left[node] = before;
        out.value[node] = before;
        let jump = x.value[node] - x.right[node];
        if jump >= eps && used < n_max {
            out.right[node] = before + jump;
            count[node] = used + 1;
        } else {
            out.right[node] = before;
            count[node] = used;
        }
    }
    Ok(out)
}

/// `‖A‖_{𝕀^p} + ‖I‖_{𝕀^p} <= C ‖X‖_{𝕊^p}` for a strong supermartingale.
///
/// The right-continuous constant `C'_p(1 + p/(p−1))` is used when no right
/// jump is present, the làdlàg constant otherwise.
pub fn meyer_bound_check(tree: &ScenarioTree, x: &LadlagProcess, p: f64) -> Result<EstimateReport> {
    let dec = mertens_decompose(tree, x)?;
    let right_continuous = x.value.iter().zip(&x.right).all(|(v, r)| v == r);
    let constant = if right_continuous {
        meyer_constant(p)?
    } else {
        ladlag_meyer_constant(p)?
    };
    let a_norm = leaf_expectation(tree, |leaf| dec.a.value[leaf].max(0.0).powf(p)).powf(1.0 / p);
    let i_norm = leaf_expectation(tree, |leaf| dec.i.value[leaf].max(0.0).powf(p)).powf(1.0 / p);
    let x_norm = norm_sp_ladlag(tree, x, p).powf(1.0 / p);
    Ok(EstimateReport::explicit("meyer", a_norm + i_norm, constant * x_norm, Some(constant))
        .with("a_norm", a_norm)
        .with("i_norm", i_norm)
        .with("x_norm", x_norm)
        .with("p", p)
        .with("right_continuous", if right_continuous { 1.0 } else { 0.0 }))
}

/// Discrete change of measure with density `D_k = Π_{j<=k}(1 − η_j·ΔW_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureChange {
    pub eta: PredictableProcess,
    pub density: AdaptedProcess,
}

/// Builds the density of `ℚ` from a predictable `η`.
///
/// Requires `‖η_k‖₁ √dt < 1` so that every factor is positive.
pub fn girsanov_change(tree: &ScenarioTree, eta: &PredictableProcess) -> Result<MeasureChange> {
    if eta.dim() != tree.dim() || eta.parents() != tree.level(tree.n_steps()).start {
        return Err(Error::TreeMismatch);
    }
    let dt = tree.dt();
    let limit = 1.0 / dt.sqrt();
    let max_eta_l1 = (0..eta.parents())
        .map(|p| eta.at_parent(p).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if max_eta_l1 >= limit || !max_eta_l1.is_finite() {
        return Err(Error::Girsanov { max_eta_l1, dt, limit });
    }
    let mut density = AdaptedProcess::constant(tree, 1.0);
    for c in 1..tree.node_count() {
        let p = tree.parent(c).expect("non-root");
        density[c] = density[p] * factor(tree, eta, c);
    }
    Ok(MeasureChange {
        eta: eta.clone(),
        density,
    })
}

fn factor(tree: &ScenarioTree, eta: &PredictableProcess, child: usize) -> f64 {
    let p = tree.parent(child).expect("non-root");
    1.0 - eta.at_parent(p).iter().zip(tree.dw(child)).map(|(a, b)| a * b).sum::<f64>()
}

impl MeasureChange {
    /// Conditional `ℚ`-probability of `child` given its parent.
    pub fn q_prob(&self, tree: &ScenarioTree, child: usize) -> f64 {
        tree.prob(child) * factor(tree, &self.eta, child)
    }

    pub fn q_cond_mean<F: Fn(usize) -> f64>(&self, tree: &ScenarioTree, node: usize, f: F) -> f64 {
        tree.children(node).map(|c| self.q_prob(tree, c) * f(c)).sum()
    }

    /// `E[D_n]`.
    pub fn expected_density(&self, tree: &ScenarioTree) -> f64 {
        leaf_expectation(tree, |leaf| self.density[leaf])
    }

    /// `W^ℚ = W + Σ η dt`, flattened per node.
    pub fn w_q(&self, tree: &ScenarioTree) -> Vec<f64> {
        let d = tree.dim();
        let dt = tree.dt();
        let mut out = vec![0.0; tree.node_count() * d];
        for c in 1..tree.node_count() {
            let p = tree.parent(c).expect("non-root");
            for i in 0..d {
                out[c * d + i] = out[p * d + i] + tree.dw(c)[i] + self.eta.at_parent(p)[i] * dt;
            }
        }
        out
    }

    /// Largest `|E^ℚ_node[ΔX]|`.
    pub fn q_martingale_defect(&self, tree: &ScenarioTree, x: &AdaptedProcess) -> f64 {
        let inner = tree.level(tree.n_steps()).start;
        (0..inner)
            .map(|p| (self.q_cond_mean(tree, p, |c| x[c]) - x[p]).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `ℚ`-martingale defect over the coordinates of `W^ℚ`.
    pub fn w_q_defect(&self, tree: &ScenarioTree) -> f64 {
        let d = tree.dim();
        let wq = self.w_q(tree);
        (0..d)
            .map(|i| {
                let x = AdaptedProcess::from_fn(tree, |n| wq[n * d + i]);
                self.q_martingale_defect(tree, &x)
            })
            .fold(0.0, f64::max)
    }
}
