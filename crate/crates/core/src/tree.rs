//! Finite filtered probability spaces.
//!
//! A [`ScenarioTree`] discretizes a `d`-dimensional Brownian motion with
//! Rademacher increments `±√dt` per coordinate, so that on every node the
//! increment has conditional mean zero and conditional covariance exactly
//! `dt·I`. At selected grid instants an extra discrete label, independent of
//! the Brownian increments, is revealed. Deterministic reveal times are
//! predictable, so martingales built from the labels jump at predictable
//! times and the filtration is not quasi left-continuous.
//!
//! Nodes are stored level by level. The children of a node occupy a
//! contiguous id range and every node at step `k` has the same branching
//! factor, so step `k` is also a contiguous id range.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the total number of nodes of an exact tree.
pub const DEFAULT_NODE_CAP: usize = 1 << 20;

/// Format version written by [`ScenarioTree::to_json`].
pub const TREE_FORMAT_VERSION: u64 = 1;

/// Tolerance for identities that hold exactly on the tree.
pub const TREE_TOL: f64 = 1e-12;

/// Uniform time grid `0 = t_0 < … < t_n = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Grid(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::Grid("n_steps must be at least 1".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Grid instant `t_k`; the last instant is exactly the horizon.
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }

    /// Index of the grid instant equal to `t` up to a relative 1e-12.
    pub fn step_of(&self, t: f64) -> Option<usize> {
        if !t.is_finite() {
            return None;
        }
        let x = t / self.dt();
        let k = x.round();
        if k < 0.0 || k > self.n_steps as f64 {
            return None;
        }
        let k = k as usize;
        let tol = TREE_TOL * self.horizon.max(1.0);
        ((self.time(k) - t).abs() <= tol).then_some(k)
    }
}

/// Increment scheme for the Brownian coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncrementScheme {
    #[default]
    Rademacher,
}

/// A discrete label revealed at a grid instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevealSpec {
    pub time: f64,
    pub alphabet: Vec<String>,
    pub law: Vec<f64>,
}

/// A reveal resolved onto the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Reveal {
    pub step: usize,
    pub alphabet: Vec<String>,
    pub law: Vec<f64>,
}

/// Everything needed to build a tree; doubles as the `tree` block of the
/// experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub horizon: f64,
    pub n_steps: usize,
    #[serde(default = "default_dim")]
    pub d: usize,
    #[serde(default)]
    pub scheme: IncrementScheme,
    #[serde(default)]
    pub reveals: Vec<RevealSpec>,
    #[serde(default = "default_node_cap")]
    pub node_cap: usize,
}

fn default_dim() -> usize {
    1
}

fn default_node_cap() -> usize {
    DEFAULT_NODE_CAP
}

impl TreeConfig {
    pub fn new(horizon: f64, n_steps: usize, d: usize) -> Self {
        Self {
            horizon,
            n_steps,
            d,
            scheme: IncrementScheme::Rademacher,
            reveals: Vec::new(),
            node_cap: DEFAULT_NODE_CAP,
        }
    }

    pub fn with_reveal(mut self, time: f64, alphabet: &[&str], law: &[f64]) -> Self {
        self.reveals.push(RevealSpec {
            time,
            alphabet: alphabet.iter().map(|s| s.to_string()).collect(),
            law: law.to_vec(),
        });
        self
    }

    pub fn build(&self) -> Result<ScenarioTree> {
        let grid = TimeGrid::new(self.horizon, self.n_steps)?;
        ScenarioTree::build(grid, self.d, self.scheme, &self.reveals, self.node_cap)
    }
}

/// Builds a tree with the default node cap.
pub fn build_tree(
    grid: TimeGrid,
    d: usize,
    scheme: IncrementScheme,
    reveals: &[RevealSpec],
) -> Result<ScenarioTree> {
    ScenarioTree::build(grid, d, scheme, reveals, DEFAULT_NODE_CAP)
}

/// Finite filtered probability space carrying a discrete Brownian motion.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    grid: TimeGrid,
    dim: usize,
    reveals: Vec<Reveal>,
    /// `reveal_at[k]` indexes `reveals` when a label is revealed at `t_k`.
    reveal_at: Vec<Option<usize>>,
    step: Vec<usize>,
    parent: Vec<Option<usize>>,
    prob: Vec<f64>,
    dw: Vec<f64>,
    label: Vec<Option<usize>>,
    child_start: Vec<usize>,
    level_start: Vec<usize>,
    path_prob: Vec<f64>,
    w: Vec<f64>,
}

impl ScenarioTree {
    pub fn build(
        grid: TimeGrid,
        dim: usize,
        scheme: IncrementScheme,
        reveals: &[RevealSpec],
        node_cap: usize,
    ) -> Result<Self> {
        let IncrementScheme::Rademacher = scheme;
        if dim == 0 {
            return Err(Error::Grid("Brownian dimension d must be at least 1".into()));
        }
        if dim > 16 {
            return Err(Error::Grid(format!("Brownian dimension {dim} is too large for an exact tree")));
        }
        let n = grid.n_steps();
        let mut resolved = Vec::with_capacity(reveals.len());
        let mut reveal_at = vec![None; n + 1];
        for spec in reveals {
            let step = match grid.step_of(spec.time) {
                Some(k) if k >= 1 => k,
                _ => return Err(Error::OffGridReveal { time: spec.time }),
            };
            if reveal_at[step].is_some() {
                return Err(Error::Schema(format!("two reveals at t = {}", spec.time)));
            }
            check_law(&spec.alphabet, &spec.law)?;
            reveal_at[step] = Some(resolved.len());
            resolved.push(Reveal {
                step,
                alphabet: spec.alphabet.clone(),
                law: spec.law.clone(),
            });
        }

        let brownian = 1usize << dim;
        let branching: Vec<usize> = (0..n)
            .map(|k| brownian * reveal_at[k + 1].map_or(1, |r| resolved[r].alphabet.len()))
            .collect();
        let mut level_start = vec![0usize; n + 2];
        let mut width = 1u128;
        let mut total = 1u128;
        level_start[1] = 1;
        for k in 0..n {
            width *= branching[k] as u128;
            total += width;
            if total > node_cap as u128 {
                return Err(Error::NodeCap {
                    cap: node_cap,
                    required: if total > u64::MAX as u128 {
                        "more than 2^64".into()
                    } else {
                        format!("at least {total}")
                    },
                });
            }
            level_start[k + 2] = total as usize;
        }
        let count = total as usize;

        let sqrt_dt = grid.dt().sqrt();
        let mut tree = Self {
            grid,
            dim,
            reveals: resolved,
            reveal_at,
            step: Vec::with_capacity(count),
            parent: Vec::with_capacity(count),
            prob: Vec::with_capacity(count),
            dw: Vec::with_capacity(count * dim),
            label: Vec::with_capacity(count),
            child_start: Vec::new(),
            level_start,
            path_prob: Vec::new(),
            w: Vec::new(),
        };
        tree.step.push(0);
        tree.parent.push(None);
        tree.prob.push(1.0);
        tree.dw.extend(std::iter::repeat(0.0).take(dim));
        tree.label.push(None);
        let base = 0.5f64.powi(dim as i32);
        for k in 0..n {
            let reveal = tree.reveal_at[k + 1].map(|r| tree.reveals[r].law.clone());
            for node in tree.level_start[k]..tree.level_start[k + 1] {
                for pattern in 0..brownian {
                    let labels: Vec<Option<(usize, f64)>> = match &reveal {
                        Some(law) => law.iter().copied().enumerate().map(Some).collect(),
                        None => vec![None],
                    };
                    for lab in labels {
                        tree.step.push(k + 1);
                        tree.parent.push(Some(node));
                        tree.prob.push(base * lab.map_or(1.0, |(_, q)| q));
                        for i in 0..dim {
                            let sign = if pattern >> i & 1 == 0 { 1.0 } else { -1.0 };
                            tree.dw.push(sign * sqrt_dt);
                        }
                        tree.label.push(lab.map(|(l, _)| l));
                    }
                }
            }
        }
        tree.finish()?;
        Ok(tree)
    }

    /// Derives child ranges, path probabilities and cumulative Brownian values.
    fn finish(&mut self) -> Result<()> {
        let count = self.step.len();
        let n = self.grid.n_steps();
        let mut child_start = vec![count; count + 1];
        for id in (1..count).rev() {
            let p = self.parent[id].ok_or_else(|| Error::InvalidTree {
                node: id,
                reason: "non-root node without parent".into(),
            })?;
            child_start[p] = id;
        }
        // childless nodes get an empty range at the next node's start
        for id in (0..count).rev() {
            if child_start[id] == count {
                child_start[id] = child_start[id + 1];
            }
        }
        self.child_start = child_start;

        let mut level_start = vec![0usize; n + 2];
        let mut k_prev = 0usize;
        for (id, &k) in self.step.iter().enumerate() {
            if k < k_prev || k > k_prev + 1 || k > n {
                return Err(Error::InvalidTree {
                    node: id,
                    reason: format!("node at step {k} out of level order"),
                });
            }
            if k == k_prev + 1 {
                level_start[k] = id;
            }
            k_prev = k;
        }
        if k_prev != n {
            return Err(Error::InvalidTree {
                node: count.saturating_sub(1),
                reason: format!("deepest node is at step {k_prev}, expected {n}"),
            });
        }
        level_start[n + 1] = count;
        self.level_start = level_start;

        let d = self.dim;
        self.path_prob = vec![0.0; count];
        self.w = vec![0.0; count * d];
        self.path_prob[0] = 1.0;
        for id in 1..count {
            let p = self.parent[id].expect("checked above");
            self.path_prob[id] = self.path_prob[p] * self.prob[id];
            for i in 0..d {
                self.w[id * d + i] = self.w[p * d + i] + self.dw[id * d + i];
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt()
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn node_count(&self) -> usize {
        self.step.len()
    }

    pub fn reveals(&self) -> &[Reveal] {
        &self.reveals
    }

    /// Reveal taking place at grid instant `t_k`, if any.
    pub fn reveal_at(&self, k: usize) -> Option<&Reveal> {
        self.reveal_at.get(k).copied().flatten().map(|r| &self.reveals[r])
    }

    pub fn level(&self, k: usize) -> Range<usize> {
        self.level_start[k]..self.level_start[k + 1]
    }

    pub fn level_len(&self, k: usize) -> usize {
        self.level_start[k + 1] - self.level_start[k]
    }

    pub fn leaves(&self) -> Range<usize> {
        self.level(self.n_steps())
    }

    pub fn step(&self, node: usize) -> usize {
        self.step[node]
    }

    pub fn time_of(&self, node: usize) -> f64 {
        self.grid.time(self.step[node])
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children(&self, node: usize) -> Range<usize> {
        self.child_start[node]..self.child_start[node + 1]
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.step[node] == self.n_steps()
    }

    /// Conditional probability of `node` given its parent.
    pub fn prob(&self, node: usize) -> f64 {
        self.prob[node]
    }

    /// Unconditional probability of the atom `node`.
    pub fn path_prob(&self, node: usize) -> f64 {
        self.path_prob[node]
    }

    /// Brownian increment leading into `node` (zero at the root).
    pub fn dw(&self, node: usize) -> &[f64] {
        &self.dw[node * self.dim..(node + 1) * self.dim]
    }

    /// Cumulative Brownian value `W_{t_k}` at `node`.
    pub fn w(&self, node: usize) -> &[f64] {
        &self.w[node * self.dim..(node + 1) * self.dim]
    }

    /// Index of the label revealed when entering `node`, if any.
    pub fn label(&self, node: usize) -> Option<usize> {
        self.label[node]
    }

    /// Labels revealed along the path to `node`, one entry per reveal
    /// (`None` while not yet revealed).
    pub fn revealed_labels(&self, node: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; self.reveals.len()];
        let mut cur = Some(node);
        while let Some(id) = cur {
            if let (Some(l), Some(r)) = (self.label[id], self.reveal_at[self.step[id]]) {
                out[r] = Some(l);
            }
            cur = self.parent[id];
        }
        out
    }

    /// Ancestor of `node` at step `k <= step(node)`.
    pub fn ancestor(&self, node: usize, k: usize) -> usize {
        let mut id = node;
        while self.step[id] > k {
            id = self.parent[id].expect("non-root");
        }
        id
    }

    /// Leaves below `node`, a contiguous id range.
    pub fn leaves_below(&self, node: usize) -> Range<usize> {
        let mut lo = node;
        let mut hi = node + 1;
        while !self.is_leaf(lo) {
            lo = self.child_start[lo];
            hi = self.child_start[hi];
        }
        lo..hi
    }

    /// `E[f(child) | node]` with the tree's branch probabilities.
    pub fn cond_mean<F: FnMut(usize) -> f64>(&self, node: usize, mut f: F) -> f64 {
        self.children(node).map(|c| self.prob[c] * f(c)).sum()
    }

    /// Maps values on the nodes of step `k + 1` (in level order) to their
    /// conditional expectations on the nodes of step `k`.
    pub fn conditional_expectation(&self, values: &[f64], k: usize) -> Result<Vec<f64>> {
        if k >= self.n_steps() {
            return Err(Error::StepOutOfRange {
                step: k,
                n_steps: self.n_steps(),
            });
        }
        let next = self.level(k + 1);
        if values.len() != next.len() {
            return Err(Error::LengthMismatch {
                expected: next.len(),
                found: values.len(),
            });
        }
        Ok(self
            .level(k)
            .map(|node| self.cond_mean(node, |c| values[c - next.start]))
            .collect())
    }

    /// `E[X]` for values on the nodes of step `k` (in level order).
    pub fn expectation(&self, values: &[f64], k: usize) -> Result<f64> {
        if k > self.n_steps() {
            return Err(Error::StepOutOfRange {
                step: k,
                n_steps: self.n_steps(),
            });
        }
        let level = self.level(k);
        if values.len() != level.len() {
            return Err(Error::LengthMismatch {
                expected: level.len(),
                found: values.len(),
            });
        }
        Ok(level.zip(values).map(|(node, v)| self.path_prob[node] * v).sum())
    }

    /// Checks every structural and probabilistic invariant of the tree.
    pub fn validate(&self) -> Result<()> {
        let count = self.node_count();
        let n = self.n_steps();
        let d = self.dim;
        let dt = self.dt();
        if count == 0 || self.step[0] != 0 || self.parent[0].is_some() {
            return Err(Error::InvalidTree {
                node: 0,
                reason: "missing root".into(),
            });
        }
        if (self.prob[0] - 1.0).abs() > TREE_TOL {
            return Err(Error::InvalidTree {
                node: 0,
                reason: format!("root probability {} != 1", self.prob[0]),
            });
        }
        for id in 1..count {
            let p = self.parent[id].ok_or_else(|| Error::InvalidTree {
                node: id,
                reason: "second root".into(),
            })?;
            if self.step[p] + 1 != self.step[id] {
                return Err(Error::InvalidTree {
                    node: id,
                    reason: format!("parent {p} is not one step earlier"),
                });
            }
        }
        for node in 0..count {
            let kids = self.children(node);
            if self.step[node] == n {
                if !kids.is_empty() {
                    return Err(Error::InvalidTree {
                        node,
                        reason: "terminal node has children".into(),
                    });
                }
                continue;
            }
            if kids.is_empty() {
                return Err(Error::InvalidTree {
                    node,
                    reason: format!("leaf at step {} before the horizon", self.step[node]),
                });
            }
            let mut total = 0.0;
            let mut mean = vec![0.0; d];
            let mut cov = vec![0.0; d * d];
            for c in kids.clone() {
                let q = self.prob[c];
                if !(q > 0.0 && q.is_finite()) {
                    return Err(Error::InvalidTree {
                        node,
                        reason: format!("child {c} has non-positive probability {q}"),
                    });
                }
                total += q;
                let inc = self.dw(c);
                for i in 0..d {
                    mean[i] += q * inc[i];
                    for j in 0..d {
                        cov[i * d + j] += q * inc[i] * inc[j];
                    }
                }
            }
            if (total - 1.0).abs() > TREE_TOL {
                return Err(Error::InvalidTree {
                    node,
                    reason: format!("child probabilities sum to {total}"),
                });
            }
            for i in 0..d {
                if mean[i].abs() > TREE_TOL {
                    return Err(Error::InvalidTree {
                        node,
                        reason: format!("conditional mean of dW[{i}] is {}", mean[i]),
                    });
                }
                for j in 0..d {
                    let target = if i == j { dt } else { 0.0 };
                    if (cov[i * d + j] - target).abs() > TREE_TOL * dt.max(1.0) {
                        return Err(Error::InvalidTree {
                            node,
                            reason: format!("conditional covariance ({i},{j}) is {}", cov[i * d + j]),
                        });
                    }
                }
            }
            self.check_reveal_independence(node)?;
        }
        Ok(())
    }

    /// At a reveal step the joint conditional law of (increment, label)
    /// must factor into its marginals, with the label marginal equal to the
    /// declared law.
    fn check_reveal_independence(&self, node: usize) -> Result<()> {
        let k = self.step[node] + 1;
        let kids = self.children(node);
        let Some(reveal) = self.reveal_at(k) else {
            if let Some(c) = kids.clone().find(|&c| self.label[c].is_some()) {
                return Err(Error::InvalidTree {
                    node: c,
                    reason: "reveal label on a step without reveal".into(),
                });
            }
            return Ok(());
        };
        let alphabet = reveal.alphabet.len();
        let mut patterns: Vec<(Vec<u64>, f64)> = Vec::new();
        let mut label_marginal = vec![0.0; alphabet];
        let mut joint: Vec<(usize, usize, f64)> = Vec::new();
        for c in kids {
            let Some(l) = self.label[c].filter(|&l| l < alphabet) else {
                return Err(Error::InvalidTree {
                    node: c,
                    reason: "missing or unknown reveal label".into(),
                });
            };
            let key: Vec<u64> = self.dw(c).iter().map(|x| x.to_bits()).collect();
            let idx = match patterns.iter().position(|(p, _)| *p == key) {
                Some(i) => i,
                None => {
                    patterns.push((key, 0.0));
                    patterns.len() - 1
                }
            };
            patterns[idx].1 += self.prob[c];
            label_marginal[l] += self.prob[c];
            match joint.iter_mut().find(|(i, j, _)| *i == idx && *j == l) {
                Some(e) => e.2 += self.prob[c],
                None => joint.push((idx, l, self.prob[c])),
            }
        }
        for (l, (&m, &q)) in label_marginal.iter().zip(&reveal.law).enumerate() {
            if (m - q).abs() > TREE_TOL {
                return Err(Error::InvalidTree {
                    node,
                    reason: format!("label {l} has conditional probability {m}, law says {q}"),
                });
            }
        }
        for (i, (_, pw)) in patterns.iter().enumerate() {
            for l in 0..alphabet {
                let pj = joint
                    .iter()
                    .find(|(a, b, _)| *a == i && *b == l)
                    .map_or(0.0, |e| e.2);
                if (pj - pw * label_marginal[l]).abs() > TREE_TOL {
                    return Err(Error::InvalidTree {
                        node,
                        reason: format!("increment pattern {i} and label {l} are not independent"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Canonical JSON encoding (fixed key order, compact, UTF-8).
    pub fn to_json(&self) -> Result<Vec<u8>> {
        let doc = TreeDoc {
            version: TREE_FORMAT_VERSION,
            grid: self.grid,
            d: self.dim,
            reveals: self
                .reveals
                .iter()
                .map(|r| RevealSpec {
                    time: self.grid.time(r.step),
                    alphabet: r.alphabet.clone(),
                    law: r.law.clone(),
                })
                .collect(),
            nodes: (0..self.node_count())
                .map(|id| NodeDoc {
                    id,
                    step: self.step[id],
                    parent: self.parent[id],
                    prob: self.prob[id],
                    dw: self.dw(id).to_vec(),
                    reveal: self.label[id].map(|l| {
                        let r = self.reveal_at(self.step[id]).expect("label implies reveal");
                        r.alphabet[l].clone()
                    }),
                })
                .collect(),
        };
        Ok(serde_json::to_vec(&doc)?)
    }

    /// Decodes and validates a tree written by [`ScenarioTree::to_json`].
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_slice(bytes)?;
        let version = raw
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Schema("missing integer field `version`".into()))?;
        if version != TREE_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: TREE_FORMAT_VERSION,
            });
        }
        let doc: TreeDoc = serde_path_to_error::deserialize(raw)
            .map_err(|e| Error::Schema(format!("{} at `{}`", e.inner(), e.path())))?;
        Self::from_doc(doc)
    }

    fn from_doc(doc: TreeDoc) -> Result<Self> {
        let grid = TimeGrid::new(doc.grid.horizon, doc.grid.n_steps)?;
        let n = grid.n_steps();
        let d = doc.d;
        if d == 0 {
            return Err(Error::Schema("d must be at least 1".into()));
        }
        let mut reveals = Vec::new();
        let mut reveal_at = vec![None; n + 1];
        for spec in &doc.reveals {
            let step = match grid.step_of(spec.time) {
                Some(k) if k >= 1 => k,
                _ => return Err(Error::OffGridReveal { time: spec.time }),
            };
            if reveal_at[step].is_some() {
                return Err(Error::Schema(format!("two reveals at t = {}", spec.time)));
            }
            check_law(&spec.alphabet, &spec.law)?;
            reveal_at[step] = Some(reveals.len());
            reveals.push(Reveal {
                step,
                alphabet: spec.alphabet.clone(),
                law: spec.law.clone(),
            });
        }
        let count = doc.nodes.len();
        let mut tree = Self {
            grid,
            dim: d,
            reveals,
            reveal_at,
            step: Vec::with_capacity(count),
            parent: Vec::with_capacity(count),
            prob: Vec::with_capacity(count),
            dw: Vec::with_capacity(count * d),
            label: Vec::with_capacity(count),
            child_start: Vec::new(),
            level_start: Vec::new(),
            path_prob: Vec::new(),
            w: Vec::new(),
        };
        for (i, node) in doc.nodes.into_iter().enumerate() {
            if node.id != i {
                return Err(Error::InvalidTree {
                    node: i,
                    reason: format!("node ids must be sequential, found {}", node.id),
                });
            }
            if node.dw.len() != d {
                return Err(Error::InvalidTree {
                    node: i,
                    reason: format!("dw has {} entries, expected {d}", node.dw.len()),
                });
            }
            if let Some(p) = node.parent {
                if p >= i || tree.parent.last().copied().flatten().is_some_and(|q| p < q) {
                    return Err(Error::InvalidTree {
                        node: i,
                        reason: format!("parent {p} does not precede the node"),
                    });
                }
            }
            let label = match node.reveal {
                None => None,
                Some(name) => {
                    let r = tree.reveal_at.get(node.step).copied().flatten().ok_or_else(|| {
                        Error::InvalidTree {
                            node: i,
                            reason: "reveal label on a step without reveal".into(),
                        }
                    })?;
                    let pos = tree.reveals[r].alphabet.iter().position(|a| *a == name).ok_or_else(|| {
                        Error::InvalidTree {
                            node: i,
                            reason: format!("unknown reveal label `{name}`"),
                        }
                    })?;
                    Some(pos)
                }
            };
            tree.step.push(node.step);
            tree.parent.push(node.parent);
            tree.prob.push(node.prob);
            tree.dw.extend(node.dw);
            tree.label.push(label);
        }
        if count == 0 {
            return Err(Error::InvalidTree {
                node: 0,
                reason: "empty node list".into(),
            });
        }
        tree.finish()?;
        // children must be contiguous for the range representation
        for id in 1..count {
            let p = tree.parent[id].expect("non-root");
            if !tree.children(p).contains(&id) {
                return Err(Error::InvalidTree {
                    node: id,
                    reason: "siblings are not stored contiguously".into(),
                });
            }
        }
        for k in 1..=n {
            if let Some(r) = tree.reveal_at[k] {
                let alphabet = tree.reveals[r].alphabet.len();
                for node in tree.level(k) {
                    if tree.label[node].map_or(true, |l| l >= alphabet) {
                        return Err(Error::InvalidTree {
                            node,
                            reason: "missing reveal label".into(),
                        });
                    }
                }
            }
        }
        tree.validate()?;
        Ok(tree)
    }
}

fn check_law(alphabet: &[String], law: &[f64]) -> Result<()> {
    if alphabet.is_empty() || alphabet.len() != law.len() {
        return Err(Error::Schema(format!(
            "reveal alphabet has {} symbols but law has {} weights",
            alphabet.len(),
            law.len()
        )));
    }
    if law.iter().any(|q| !(q.is_finite() && *q > 0.0)) {
        return Err(Error::Schema("reveal law weights must be positive".into()));
    }
    let total: f64 = law.iter().sum();
    if (total - 1.0).abs() > TREE_TOL {
        return Err(Error::Schema(format!("reveal law sums to {total}")));
    }
    for (i, a) in alphabet.iter().enumerate() {
        if alphabet[..i].contains(a) {
            return Err(Error::Schema(format!("duplicate reveal symbol `{a}`")));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDoc {
    version: u64,
    grid: TimeGrid,
    d: usize,
    reveals: Vec<RevealSpec>,
    nodes: Vec<NodeDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: usize,
    step: usize,
    parent: Option<usize>,
    prob: f64,
    dw: Vec<f64>,
    reveal: Option<String>,
}
