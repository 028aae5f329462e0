//! Optimal stopping on the tree: dynamic programming and exhaustive
//! enumeration of stopping rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::AdaptedProcess;
use crate::tree::ScenarioTree;

/// Default largest number of steps handled by [`StoppingProblem::solve`].
pub const SNELL_DEPTH_CAP: usize = 12;

/// Largest number of non-terminal nodes for exhaustive enumeration.
pub const ENUMERATION_NODE_CAP: usize = 20;

/// `sup_τ E[−Σ_{s<τ} c_s dt + R_τ]` where `R` is the obstacle before `T`
/// and the terminal value at `T`.
#[derive(Debug, Clone)]
pub struct StoppingProblem<'a> {
    pub tree: &'a ScenarioTree,
    pub reward: AdaptedProcess,
    /// Running cost per non-terminal node.
    pub cost: Vec<f64>,
    /// Optional conditional branch probabilities replacing the tree's.
    pub weights: Option<Vec<f64>>,
    pub depth_cap: usize,
}

/// A `{stop, continue}` flag per node; leaves always stop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub stop: Vec<bool>,
}

impl StoppingRule {
    /// The step at which the path through `leaf` stops.
    pub fn tau(&self, tree: &ScenarioTree, leaf: usize) -> usize {
        (0..=tree.n_steps())
            .find(|&k| self.stop[tree.ancestor(leaf, k)])
            .unwrap_or(tree.n_steps())
    }
}

/// Value process and earliest optimal rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SnellSolution {
    pub value: AdaptedProcess,
    pub rule: StoppingRule,
}

impl<'a> StoppingProblem<'a> {
    pub fn new(tree: &'a ScenarioTree, reward: AdaptedProcess, cost: Vec<f64>) -> Result<Self> {
        if reward.len() != tree.node_count() {
            return Err(Error::TreeMismatch);
        }
        let inner = tree.level(tree.n_steps()).start;
        if cost.len() != inner {
            return Err(Error::LengthMismatch {
                expected: inner,
                found: cost.len(),
            });
        }
        Ok(Self {
            tree,
            reward,
            cost,
            weights: None,
            depth_cap: SNELL_DEPTH_CAP,
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.tree.node_count() {
            return Err(Error::TreeMismatch);
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn with_depth_cap(mut self, cap: usize) -> Self {
        self.depth_cap = cap;
        self
    }

    fn mean(&self, node: usize, v: &[f64]) -> f64 {
        match &self.weights {
            Some(w) => self.tree.children(node).map(|c| w[c] * v[c]).sum(),
            None => self.tree.cond_mean(node, |c| v[c]),
        }
    }

    /// Backward induction `V_k = max(R_k, E_k[V_{k+1}] − c_k dt)`; ties stop.
    pub fn solve(&self) -> Result<SnellSolution> {
        let tree = self.tree;
        if tree.n_steps() > self.depth_cap {
            return Err(Error::DepthCap {
                depth: tree.n_steps(),
                cap: self.depth_cap,
            });
        }
        let dt = tree.dt();
        let inner = tree.level(tree.n_steps()).start;
        let mut v = self.reward.values().to_vec();
        let mut stop = vec![true; tree.node_count()];
        for p in (0..inner).rev() {
            let cont = self.mean(p, &v) - self.cost[p] * dt;
            let r = self.reward[p];
            stop[p] = r >= cont;
            v[p] = if stop[p] { r } else { cont };
        }
        Ok(SnellSolution {
            value: AdaptedProcess::from_values(tree, v)?,
            rule: StoppingRule { stop },
        })
    }

    /// Value of a fixed rule at every node.
    pub fn evaluate(&self, rule: &StoppingRule) -> Vec<f64> {
        let tree = self.tree;
        let dt = tree.dt();
        let inner = tree.level(tree.n_steps()).start;
        let mut v = self.reward.values().to_vec();
        for p in (0..inner).rev() {
            if !rule.stop[p] {
                v[p] = self.mean(p, &v) - self.cost[p] * dt;
            }
        }
        v
    }

    /// Node-wise maximum of [`Self::evaluate`] over every rule on the
    /// non-terminal nodes.
    pub fn enumerate(&self) -> Result<AdaptedProcess> {
        let tree = self.tree;
        let inner = tree.level(tree.n_steps()).start;
        if inner > ENUMERATION_NODE_CAP {
            return Err(Error::DepthCap {
                depth: tree.n_steps(),
                cap: tree.n_steps().min(4),
            });
        }
        let mut best = vec![f64::NEG_INFINITY; tree.node_count()];
        let mut rule = StoppingRule {
            stop: vec![true; tree.node_count()],
        };
        for mask in 0u64..(1u64 << inner) {
            for (p, s) in rule.stop[..inner].iter_mut().enumerate() {
                *s = mask >> p & 1 == 1;
            }
            for (b, v) in best.iter_mut().zip(self.evaluate(&rule)) {
                *b = b.max(v);
            }
        }
        AdaptedProcess::from_values(tree, best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::RandomSeed;
    use crate::tree::TreeConfig;
    use rand::Rng;

    #[test]
    fn dp_matches_enumeration_on_random_instances() {
        let tree = TreeConfig::new(1.0, 3, 1)
            .with_reveal(2.0 / 3.0, &["x", "y"], &[0.4, 0.6])
            .build()
            .unwrap();
        let mut rng = RandomSeed::new(11).rng();
        for _ in 0..20 {
            let reward = AdaptedProcess::from_fn(&tree, |_| rng.random_range(-1.0..1.0));
            let inner = tree.level(3).start;
            let cost = (0..inner).map(|_| rng.random_range(-1.0..1.0)).collect();
            let prob = StoppingProblem::new(&tree, reward, cost).unwrap();
            let dp = prob.solve().unwrap();
            let brute = prob.enumerate().unwrap();
            for n in 0..tree.node_count() {
                assert!((dp.value[n] - brute[n]).abs() < 1e-14);
            }
            let own = prob.evaluate(&dp.rule);
            assert!((own[0] - dp.value[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn decreasing_reward_stops_immediately() {
        let tree = TreeConfig::new(1.0, 4, 1).build().unwrap();
        let reward = AdaptedProcess::from_fn(&tree, |n| 1.0 - tree.time_of(n));
        let inner = tree.level(4).start;
        let sol = StoppingProblem::new(&tree, reward, vec![0.0; inner]).unwrap().solve().unwrap();
        assert_eq!(sol.value[0], 1.0);
        assert!(tree.leaves().all(|l| sol.rule.tau(&tree, l) == 0));
    }

    #[test]
    fn depth_cap_is_enforced() {
        let tree = TreeConfig::new(1.0, 5, 1).build().unwrap();
        let inner = tree.level(5).start;
        let prob = StoppingProblem::new(&tree, AdaptedProcess::zeros(&tree), vec![0.0; inner]).unwrap();
        assert!(matches!(prob.clone().with_depth_cap(4).solve(), Err(Error::DepthCap { .. })));
        assert!(matches!(prob.enumerate(), Err(Error::DepthCap { .. })));
    }
}
