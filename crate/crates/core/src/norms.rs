//! Weighted norms of tree processes.
//!
//! Every function returns the `p`-th power of the norm, i.e. the expectation
//! of the path functional raised to the relevant power. Time integrals are
//! left-point sums on the grid and brackets of grid martingales are sums of
//! squared increments, with the weight evaluated at the jump time.

use serde::{Deserialize, Serialize};

use crate::bsde::SolutionQuadruple;
use crate::error::{Error, Result};
use crate::process::{AdaptedProcess, LadlagProcess, PredictableProcess};
use crate::tree::ScenarioTree;

/// Integrability exponent `p > 1` and exponential weight `α >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormConfig {
    pub p: f64,
    #[serde(default)]
    pub alpha: f64,
}

impl NormConfig {
    pub fn new(p: f64, alpha: f64) -> Result<Self> {
        let cfg = Self { p, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p > 1.0) {
            return Err(Error::Domain(format!("p must exceed 1, got {}", self.p)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Domain(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// `p`-th powers of the norms of a solution's components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub s_p: f64,
    pub h_p_alpha: f64,
    pub h1_p_alpha: f64,
    pub m_p_alpha: f64,
    pub i_p_alpha: f64,
}

/// Path sums: `acc[child] = acc[parent] + term(child, parent)`, root 0.
pub fn path_sums<F: FnMut(usize, usize) -> f64>(tree: &ScenarioTree, mut term: F) -> Vec<f64> {
    let mut acc = vec![0.0; tree.node_count()];
    for c in 1..tree.node_count() {
        let p = tree.parent(c).expect("non-root");
        acc[c] = acc[p] + term(c, p);
    }
    acc
}

/// Running path maxima: `acc[child] = max(acc[parent], f(child))`.
pub fn path_max<F: FnMut(usize) -> f64>(tree: &ScenarioTree, mut f: F) -> Vec<f64> {
    let mut acc = vec![0.0; tree.node_count()];
    acc[0] = f(0);
    for c in 1..tree.node_count() {
        let p = tree.parent(c).expect("non-root");
        acc[c] = acc[p].max(f(c));
    }
    acc
}

/// `E[f(leaf)]`.
pub fn leaf_expectation<F: FnMut(usize) -> f64>(tree: &ScenarioTree, mut f: F) -> f64 {
    tree.leaves().map(|leaf| tree.path_prob(leaf) * f(leaf)).sum()
}

/// `E[|ξ|^p]` for a terminal variable given on the leaves in level order.
pub fn norm_lp(tree: &ScenarioTree, xi: &[f64], p: f64) -> f64 {
    let start = tree.leaves().start;
    leaf_expectation(tree, |leaf| xi[leaf - start].abs().powf(p))
}

/// `E[sup_k |Y_k|^p]`.
pub fn norm_sp(tree: &ScenarioTree, y: &AdaptedProcess, p: f64) -> f64 {
    let sup = path_max(tree, |n| y[n].abs());
    leaf_expectation(tree, |leaf| sup[leaf].powf(p))
}

/// `E[sup_k |e^{(α/2)t_k} Y_k|^p]`.
pub fn norm_sp_weighted(tree: &ScenarioTree, y: &AdaptedProcess, p: f64, alpha: f64) -> f64 {
    let sup = path_max(tree, |n| (0.5 * alpha * tree.time_of(n)).exp() * y[n].abs());
    leaf_expectation(tree, |leaf| sup[leaf].powf(p))
}

/// `E[sup |X|^p]` over all three slots of a làdlàg process.
pub fn norm_sp_ladlag(tree: &ScenarioTree, x: &LadlagProcess, p: f64) -> f64 {
    let sup = x.running_sup_abs(tree);
    leaf_expectation(tree, |leaf| sup[leaf].powf(p))
}

/// `E[(Σ_k e^{α t_k} ‖Z_k‖² dt)^{p/2}]`.
pub fn norm_h(tree: &ScenarioTree, z: &PredictableProcess, p: f64, alpha: f64) -> f64 {
    let dt = tree.dt();
    let acc = path_sums(tree, |_, parent| {
        let n = z.norm(parent);
        (alpha * tree.time_of(parent)).exp() * n * n * dt
    });
    leaf_expectation(tree, |leaf| acc[leaf].powf(p / 2.0))
}

/// The real-valued version of [`norm_h`].
pub fn norm_h1(tree: &ScenarioTree, x: &PredictableProcess, p: f64, alpha: f64) -> f64 {
    norm_h(tree, x, p, alpha)
}

/// `E[(Σ_k e^{α t_k} (ΔM_k)²)^{p/2}]`, the jump at `t_k` weighted at `t_k`.
pub fn norm_m(tree: &ScenarioTree, m: &AdaptedProcess, p: f64, alpha: f64) -> f64 {
    let acc = path_sums(tree, |c, parent| {
        let j = m[c] - m[parent];
        (alpha * tree.time_of(c)).exp() * j * j
    });
    leaf_expectation(tree, |leaf| acc[leaf].powf(p / 2.0))
}

/// `E[(Σ_k e^{(α/2) t_k} |ΔK_k|)^p]`.
pub fn norm_i(tree: &ScenarioTree, k: &AdaptedProcess, p: f64, alpha: f64) -> f64 {
    let acc = path_sums(tree, |c, parent| (0.5 * alpha * tree.time_of(c)).exp() * (k[c] - k[parent]).abs());
    leaf_expectation(tree, |leaf| acc[leaf].powf(p))
}

/// Bracket of `Z⋆W + L` for a pure-jump `L` orthogonal to `W`:
/// `Σ e^{α t_k}‖Z_k‖² dt + Σ e^{α t_{k+1}} (ΔL_{k+1})²`.
pub fn bracket_paths(tree: &ScenarioTree, z: &PredictableProcess, l: &AdaptedProcess, alpha: f64) -> Vec<f64> {
    let dt = tree.dt();
    path_sums(tree, |c, parent| {
        let n = z.norm(parent);
        let j = l[c] - l[parent];
        (alpha * tree.time_of(parent)).exp() * n * n * dt + (alpha * tree.time_of(c)).exp() * j * j
    })
}

/// `‖Z⋆W + L‖^p_{𝕄^{p,α}}` with the bracket of [`bracket_paths`].
pub fn norm_bracket(tree: &ScenarioTree, z: &PredictableProcess, l: &AdaptedProcess, p: f64, alpha: f64) -> f64 {
    let acc = bracket_paths(tree, z, l, alpha);
    leaf_expectation(tree, |leaf| acc[leaf].powf(p / 2.0))
}

/// Norms of every component of a solution.
pub fn norm_report(tree: &ScenarioTree, solution: &SolutionQuadruple, cfg: NormConfig) -> NormReport {
    let (p, a) = (cfg.p, cfg.alpha);
    NormReport {
        s_p: norm_sp_weighted(tree, &solution.y, p, a),
        h_p_alpha: norm_h(tree, &solution.z, p, a),
        h1_p_alpha: norm_h1(tree, &solution.y.left_point(tree), p, a),
        m_p_alpha: norm_m(tree, &solution.m, p, a),
        i_p_alpha: norm_i(tree, &solution.k, p, a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::TreeConfig;

    #[test]
    fn constant_process_norms() {
        let tree = TreeConfig::new(1.0, 3, 1).build().unwrap();
        let y = AdaptedProcess::constant(&tree, -2.0);
        assert!((norm_sp(&tree, &y, 3.0) - 8.0).abs() < 1e-12);
        let z = PredictableProcess::from_fn(&tree, 1, |_, out| out[0] = 1.5);
        assert!((norm_h(&tree, &z, 3.0, 0.0) - 1.5f64.powi(3)).abs() < 1e-12);
        assert_eq!(norm_m(&tree, &y, 2.0, 1.0), 0.0);
        assert_eq!(norm_i(&tree, &y, 2.0, 1.0), 0.0);
    }

    #[test]
    fn reveal_jump_bracket() {
        let tree = TreeConfig::new(1.0, 1, 1)
            .with_reveal(1.0, &["a", "b"], &[0.5, 0.5])
            .build()
            .unwrap();
        let m = AdaptedProcess::from_fn(&tree, |n| match tree.label(n) {
            Some(0) => 1.0,
            Some(_) => -1.0,
            None => 0.0,
        });
        assert!((norm_m(&tree, &m, 2.0, 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weight_increases_norms() {
        let tree = TreeConfig::new(1.0, 3, 1).build().unwrap();
        let m = AdaptedProcess::from_fn(&tree, |n| tree.w(n)[0]);
        let a = norm_m(&tree, &m, 2.0, 0.0);
        let b = norm_m(&tree, &m, 2.0, 1.0);
        assert!(a <= b && b <= (1.0f64).exp() * a + 1e-15);
    }
}
