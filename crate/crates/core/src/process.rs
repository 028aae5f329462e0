//! Node-indexed process containers.
//!
//! Every container is indexed by node id of a [`ScenarioTree`]. Adaptedness
//! is structural: a value attached to a node is a function of the atom the
//! node represents. Predictable vector processes are attached to the
//! parent node, so the value used on `(t_k, t_{k+1}]` is shared by all
//! siblings by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::ScenarioTree;

/// One real value per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedProcess {
    values: Vec<f64>,
}

impl AdaptedProcess {
    pub fn zeros(tree: &ScenarioTree) -> Self {
        Self {
            values: vec![0.0; tree.node_count()],
        }
    }

    pub fn constant(tree: &ScenarioTree, c: f64) -> Self {
        Self {
            values: vec![c; tree.node_count()],
        }
    }

    pub fn from_fn<F: FnMut(usize) -> f64>(tree: &ScenarioTree, f: F) -> Self {
        Self {
            values: (0..tree.node_count()).map(f).collect(),
        }
    }

    pub fn from_values(tree: &ScenarioTree, values: Vec<f64>) -> Result<Self> {
        if values.len() != tree.node_count() {
            return Err(Error::LengthMismatch {
                expected: tree.node_count(),
                found: values.len(),
            });
        }
        Ok(Self { values })
    }

    /// Values on the nodes of step `k`, in level order.
    pub fn level<'a>(&'a self, tree: &ScenarioTree, k: usize) -> &'a [f64] {
        &self.values[tree.level(k)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &Self, f: F) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::TreeMismatch);
        }
        Ok(Self {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// `w(t_k)·X_k` for a deterministic time weight.
    pub fn time_weighted<F: Fn(f64) -> f64>(&self, tree: &ScenarioTree, w: F) -> Self {
        Self {
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(node, &v)| w(tree.time_of(node)) * v)
                .collect(),
        }
    }

    /// Increment `X_node − X_parent` (zero at the root).
    pub fn increment(&self, tree: &ScenarioTree, node: usize) -> f64 {
        tree.parent(node).map_or(0.0, |p| self.values[node] - self.values[p])
    }

    /// The left-point sampling `X_{t_k}` used on `(t_k, t_{k+1}]`.
    pub fn left_point(&self, tree: &ScenarioTree) -> PredictableProcess {
        let inner = tree.level(tree.n_steps()).start;
        PredictableProcess {
            dim: 1,
            values: self.values[..inner].to_vec(),
        }
    }

    /// Largest gap between siblings: zero iff the process is predictable.
    pub fn sibling_spread(&self, tree: &ScenarioTree) -> f64 {
        let inner = tree.level(tree.n_steps()).start;
        (0..inner)
            .map(|p| {
                let kids = tree.children(p);
                let first = self.values[kids.start];
                kids.map(|c| (self.values[c] - first).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Smallest increment over all edges (negative iff not non-decreasing).
    pub fn min_increment(&self, tree: &ScenarioTree) -> f64 {
        (1..tree.node_count())
            .map(|c| self.increment(tree, c))
            .fold(f64::INFINITY, f64::min)
    }
}

impl std::ops::Index<usize> for AdaptedProcess {
    type Output = f64;

    fn index(&self, node: usize) -> &f64 {
        &self.values[node]
    }
}

impl std::ops::IndexMut<usize> for AdaptedProcess {
    fn index_mut(&mut self, node: usize) -> &mut f64 {
        &mut self.values[node]
    }
}

/// An `ℝ^dim` process on `(t_k, t_{k+1}]`, stored once per parent node at
/// step `k < n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictableProcess {
    dim: usize,
    values: Vec<f64>,
}

impl PredictableProcess {
    pub fn zeros(tree: &ScenarioTree, dim: usize) -> Self {
        Self {
            dim,
            values: vec![0.0; tree.level(tree.n_steps()).start * dim],
        }
    }

    /// `f(parent)` fills the value used on the interval after `parent`.
    pub fn from_fn<F: FnMut(usize, &mut [f64])>(tree: &ScenarioTree, dim: usize, mut f: F) -> Self {
        let mut out = Self::zeros(tree, dim);
        for p in 0..out.parents() {
            f(p, &mut out.values[p * dim..(p + 1) * dim]);
        }
        out
    }

    pub fn from_values(tree: &ScenarioTree, dim: usize, values: Vec<f64>) -> Result<Self> {
        let expected = tree.level(tree.n_steps()).start * dim;
        if values.len() != expected || dim == 0 {
            return Err(Error::LengthMismatch {
                expected,
                found: values.len(),
            });
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn parents(&self) -> usize {
        self.values.len() / self.dim.max(1)
    }

    /// Value attached to a non-terminal node (used on the next interval).
    pub fn at_parent(&self, parent: usize) -> &[f64] {
        &self.values[parent * self.dim..(parent + 1) * self.dim]
    }

    pub fn at_parent_mut(&mut self, parent: usize) -> &mut [f64] {
        &mut self.values[parent * self.dim..(parent + 1) * self.dim]
    }

    /// Value seen by a non-root node (the one of its parent).
    pub fn at_child(&self, tree: &ScenarioTree, child: usize) -> &[f64] {
        self.at_parent(tree.parent(child).expect("root has no predictable value"))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Scalar value for `dim == 1` processes.
    pub fn scalar(&self, parent: usize) -> f64 {
        self.values[parent * self.dim]
    }

    pub fn norm(&self, parent: usize) -> f64 {
        self.at_parent(parent).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &Self, f: F) -> Result<Self> {
        if self.dim != other.dim || self.values.len() != other.values.len() {
            return Err(Error::TreeMismatch);
        }
        Ok(Self {
            dim: self.dim,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Stochastic integral `(Z⋆W)` evaluated at every node.
    pub fn integral_dw(&self, tree: &ScenarioTree) -> AdaptedProcess {
        let mut out = AdaptedProcess::zeros(tree);
        for c in 1..tree.node_count() {
            let p = tree.parent(c).expect("non-root");
            let inc: f64 = self.at_parent(p).iter().zip(tree.dw(c)).map(|(z, w)| z * w).sum();
            out[c] = out[p] + inc;
        }
        out
    }
}

/// A làdlàg process sampled as (left limit, value, right limit) per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadlagProcess {
    pub left: Vec<f64>,
    pub value: Vec<f64>,
    pub right: Vec<f64>,
}

/// One of the three làdlàg sampling slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Left,
    Value,
    Right,
}

impl LadlagProcess {
    pub fn zeros(tree: &ScenarioTree) -> Self {
        let n = tree.node_count();
        Self {
            left: vec![0.0; n],
            value: vec![0.0; n],
            right: vec![0.0; n],
        }
    }

    pub fn new(tree: &ScenarioTree, left: Vec<f64>, value: Vec<f64>, right: Vec<f64>) -> Result<Self> {
        for v in [&left, &value, &right] {
            if v.len() != tree.node_count() {
                return Err(Error::LengthMismatch {
                    expected: tree.node_count(),
                    found: v.len(),
                });
            }
        }
        Ok(Self { left, value, right })
    }

    /// Embeds a càdlàg grid process: the left limit is the previous value
    /// and the right limit is the value itself.
    pub fn from_cadlag(tree: &ScenarioTree, x: &AdaptedProcess) -> Self {
        let value = x.values().to_vec();
        let left = (0..tree.node_count())
            .map(|c| tree.parent(c).map_or(value[c], |p| value[p]))
            .collect();
        Self {
            left,
            right: value.clone(),
            value,
        }
    }

    pub fn slot(&self, slot: Slot) -> &[f64] {
        match slot {
            Slot::Left => &self.left,
            Slot::Value => &self.value,
            Slot::Right => &self.right,
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// `sup |X|` along the path ending at each node, over all three slots.
    pub fn running_sup_abs(&self, tree: &ScenarioTree) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for node in 0..self.len() {
            let here = self.left[node].abs().max(self.value[node].abs()).max(self.right[node].abs());
            out[node] = tree.parent(node).map_or(here, |p| out[p].max(here));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::TreeConfig;

    #[test]
    fn predictable_values_are_shared_by_siblings() {
        let tree = TreeConfig::new(1.0, 2, 1).build().unwrap();
        let z = PredictableProcess::from_fn(&tree, 1, |p, out| out[0] = p as f64);
        for c in 1..tree.node_count() {
            let p = tree.parent(c).unwrap();
            assert_eq!(z.at_child(&tree, c)[0], p as f64);
        }
    }

    #[test]
    fn cadlag_embedding_has_previous_value_as_left_limit() {
        let tree = TreeConfig::new(1.0, 2, 1).build().unwrap();
        let x = AdaptedProcess::from_fn(&tree, |n| n as f64 * 0.5);
        let l = LadlagProcess::from_cadlag(&tree, &x);
        for c in 1..tree.node_count() {
            assert_eq!(l.left[c], x[tree.parent(c).unwrap()]);
            assert_eq!(l.right[c], x[c]);
        }
    }

    #[test]
    fn integral_of_unit_integrand_is_brownian_path() {
        let tree = TreeConfig::new(1.0, 3, 1).build().unwrap();
        let one = PredictableProcess::from_fn(&tree, 1, |_, out| out[0] = 1.0);
        let w = one.integral_dw(&tree);
        for node in 0..tree.node_count() {
            assert!((w[node] - tree.w(node)[0]).abs() < 1e-15);
        }
    }
}
